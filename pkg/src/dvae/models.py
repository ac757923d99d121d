"""The DVAE family: VAE, DKF, STORN, VRNN, SRNN, RVAE and DSAE.

Every model is a choice of

* a prior ``p(z_t | x_{1:t-1}, z_{1:t-1})``,
* a likelihood ``p(x_t | x_{1:t-1}, z_{1:t})`` (shape-1 Gamma on power bins),
* a posterior ``q(z_t | z_{1:t-1}, x_{1:T})``,

each with a model-specific reduced conditioning set (see :func:`conditioning_sets`).
Models are written as a handful of hooks driven by one teacher-forced loop
(:meth:`DvaeModel.run`) and one free-running loop (:meth:`DvaeModel.generate`),
so generation and training evaluate exactly the same generative code.

Networks never see raw power: observations enter as ``log(max(x, 1e-10))``.
Time indices are 0-based throughout the code.
"""
from __future__ import annotations

from dataclasses import dataclass, field, asdict
from functools import reduce

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .distributions import (
    DiagGaussian,
    GammaShape1,
    StandardGaussianPrior,
    floor_power,
    gamma1_log_prob,
    gaussian_kl,
    gaussian_sample,
)
from .errors import NonFiniteError, ShapeError
from .layers import GatedTransition, GaussianHead, LstmCell, Module, RecurrentState, ScaleHead, lstm_step

MODEL_KINDS = ("vae", "dkf", "storn", "vrnn", "srnn", "rvae", "dsae")


@dataclass
class DvaeConfig:
    kind: str = "vrnn"
    x_dim: int = 257
    z_dim: int = 16
    hidden: int = 128
    v_dim: int = 8
    t_max: int = 150
    activation: str = "tanh"
    # False removes every temporal path (recurrent contexts, z_{t-1} inputs, learned priors)
    temporal: bool = True
    rvae_light: bool = False

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}; expected one of {MODEL_KINDS}")
        for name in ("x_dim", "z_dim", "hidden", "v_dim", "t_max"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class Trace:
    """Everything one pass over a batch produced, kept as graph-connected tensors."""

    z: list = field(default_factory=list)
    posteriors: list = field(default_factory=list)
    priors: list = field(default_factory=list)
    log_scales: list = field(default_factory=list)
    v: Tensor | None = None
    v_posterior: DiagGaussian | None = None


@dataclass
class LatentSequence:
    z: np.ndarray          # [B, T, L]
    mean: np.ndarray       # [B, T, L]; posterior or prior parameters per step
    log_var: np.ndarray
    v: np.ndarray | None = None


@dataclass
class ElboTerms:
    elbo: Tensor           # [B]
    reconstruction: Tensor  # [B]
    kl: Tensor             # [B]


def conditioning_sets(kind: str, t: int, T: int) -> dict[str, set]:
    """Variables each distribution at step ``t`` may depend on.

    Variables are ``("x", s)``, ``("z", s)`` and ``("v", None)``. For the
    generative side these are the reduced forms of the general causal
    factorization (x_t after z_t, both given the past); for the posterior they
    follow each model's original inference network.
    """
    xs = lambda r: {("x", s) for s in r}  # noqa: E731
    zs = lambda r: {("z", s) for s in r}  # noqa: E731
    past, upto, future, every = range(t), range(t + 1), range(t, T), range(T)
    prev = range(t - 1, t) if t > 0 else range(0)
    v = {("v", None)}
    table = {
        "vae": (set(), zs([t]), xs([t])),
        "rvae": (set(), zs(upto), zs(past) | xs(future)),
        "storn": (set(), xs(past) | zs(upto), xs(upto)),
        "dkf": (zs(prev), zs([t]), zs(prev) | xs(future)),
        "dsae": (zs(past), zs([t]) | v, xs(every)),
        "vrnn": (xs(past) | zs(past), xs(past) | zs(upto), xs(upto) | zs(past)),
        "srnn": (xs(past) | zs(prev), xs(past) | zs([t]), zs(prev) | xs(every)),
    }
    prior, lik, post = table[kind]
    out = {"prior": prior, "likelihood": lik, "posterior": post}
    if kind == "dsae":
        out["v_posterior"] = xs(every)
    return out


def _const(a: np.ndarray) -> Tensor:
    t = Tensor.__new__(Tensor)
    t.data, t.grad, t.requires_grad, t._parents, t._backward, t.op = a, None, False, (), None, "const"
    return t


def _cat(*parts) -> Tensor:
    return parts[0] if len(parts) == 1 else ad.concat(parts, axis=-1)


class DvaeModel(Module):
    kind = "base"

    def __init__(self, config: DvaeConfig, seed: int = 0):
        if config.kind != self.kind:
            raise ValueError(f"{type(self).__name__} built with kind {config.kind!r}")
        self.config = config
        self._build(np.random.default_rng(seed))

    # -- hooks (overridden per model) ----------------------------------
    def _build(self, rng):
        raise NotImplementedError

    def _context(self, lxs: list) -> dict:
        return {}

    def _sequence_variable(self, ctx, B, eps_v, v_given, use_mean):
        return None, None

    def _enc_init(self, B: int) -> dict:
        return {"z_prev": self._zeros(B, self.config.z_dim)}

    def _enc_advance(self, es: dict, z: Tensor) -> dict:
        return {"z_prev": z}

    def _posterior(self, ctx, t, lx_t, es, gs) -> DiagGaussian:
        raise NotImplementedError

    def _gen_init(self, B: int, ctx) -> dict:
        return {}

    def _prior(self, gs, B):
        return StandardGaussianPrior(self.config.z_dim)

    def _likelihood(self, gs, z, v):
        raise NotImplementedError

    def _gen_advance(self, gs, t, lx_t, z, ctx) -> dict:
        return gs

    # -- helpers -------------------------------------------------------
    def _zeros(self, B, n) -> Tensor:
        return _const(np.zeros((B, n)))

    def _keep(self, tensor: Tensor) -> Tensor:
        """Pass temporal context through, or replace it with zeros when severed."""
        return tensor if self.config.temporal else _const(np.zeros(tensor.shape))

    def _lstm(self, cell, lxs, direction) -> list:
        """Hidden outputs of ``cell`` over a list of [B, D] inputs."""
        B = lxs[0].shape[0]
        state = cell.initial_state(B)
        seq = lxs if direction == "forward" else lxs[::-1]
        hs = []
        for x in seq:
            state = lstm_step(cell, x, state)
            hs.append(state.h)
        return hs if direction == "forward" else hs[::-1]

    def _check_x(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 2:
            x = x[None]
        if x.ndim != 3 or x.shape[2] != self.config.x_dim:
            raise ShapeError(f"expected [B, T, {self.config.x_dim}] spectrogram, got {x.shape}")
        if x.shape[1] < 1:
            raise ShapeError("empty sequence")
        if not np.isfinite(x).all():
            raise NonFiniteError("spectrogram contains non-finite values")
        return x

    # -- the shared loops ---------------------------------------------
    def run(self, x, eps=None, z_given=None, use_mean=False, eps_v=None, v_given=None) -> Trace:
        """Teacher-forced pass: posterior, prior and likelihood parameters at every step.

        ``z`` is taken from ``z_given`` when supplied, else the posterior mean
        (``use_mean``), else a reparameterized sample with noise ``eps[t]``.
        The posterior at step t is computed after z_{t-1} is fixed.
        """
        x = self._check_x(x)
        B, T, _ = x.shape
        lx = np.log(floor_power(x))
        lxs = [_const(np.ascontiguousarray(lx[:, t])) for t in range(T)]
        ctx = self._context(lxs)
        tr = Trace()
        tr.v, tr.v_posterior = self._sequence_variable(ctx, B, eps_v, v_given, use_mean)
        es, gs = self._enc_init(B), self._gen_init(B, ctx)
        for t in range(T):
            q = self._posterior(ctx, t, lxs[t], es, gs)
            if z_given is not None:
                z = _const(np.ascontiguousarray(z_given[:, t], dtype=np.float64))
            elif use_mean:
                z = q.mean
            else:
                z = gaussian_sample(q, eps[t])
            p = self._prior(gs, B)
            ls, gs = self._likelihood(gs, z, tr.v)
            es = self._enc_advance(es, z)
            gs = self._gen_advance(gs, t, lxs[t], z, ctx)
            tr.z.append(z)
            tr.posteriors.append(q)
            tr.priors.append(p)
            tr.log_scales.append(ls)
        return tr

    def draw_noise(self, rng: np.random.Generator, B: int, T: int):
        eps = rng.standard_normal((T, B, self.config.z_dim))
        eps_v = rng.standard_normal((B, self.config.v_dim)) if self.kind == "dsae" else None
        return eps, eps_v

    def elbo(self, x, noise: np.random.Generator, kl_weight: float = 1.0) -> ElboTerms:
        """Single-sample ELBO per sequence, with analytic per-step KL terms."""
        x = self._check_x(x)
        B, T, _ = x.shape
        eps, eps_v = self.draw_noise(noise, B, T)
        tr = self.run(x, eps=eps, eps_v=eps_v)
        xf = floor_power(x)
        recon = reduce(ad.add, (gamma1_log_prob(GammaShape1(ls), xf[:, t]) for t, ls in enumerate(tr.log_scales)))
        kl = reduce(ad.add, (gaussian_kl(q, p) for q, p in zip(tr.posteriors, tr.priors)))
        if tr.v_posterior is not None:
            kl = kl + gaussian_kl(tr.v_posterior, StandardGaussianPrior(self.config.v_dim))
        if kl_weight == 1.0:
            total = recon - kl
        else:
            total = recon - kl * kl_weight
        return ElboTerms(total, recon, kl)

    def infer(self, x, noise: np.random.Generator | None = None, use_mean: bool = False) -> LatentSequence:
        x = self._check_x(x)
        B, T, _ = x.shape
        eps, eps_v = (None, None) if use_mean else self.draw_noise(noise, B, T)
        with ad.no_grad():
            tr = self.run(x, eps=eps, eps_v=eps_v, use_mean=use_mean)
        return LatentSequence(
            z=np.stack([z.data for z in tr.z], axis=1),
            mean=np.stack([q.mean.data for q in tr.posteriors], axis=1),
            log_var=np.stack([q.log_var.data for q in tr.posteriors], axis=1),
            v=None if tr.v is None else tr.v.data,
        )

    def resynthesize(self, x, noise: np.random.Generator | None = None, use_posterior_mean: bool = True) -> np.ndarray:
        """Encode then decode with teacher forcing; returns the variance spectrogram sigma^2."""
        squeeze = np.asarray(x).ndim == 2
        x = self._check_x(x)
        B, T, _ = x.shape
        eps, eps_v = (None, None) if use_posterior_mean else self.draw_noise(noise, B, T)
        with ad.no_grad():
            tr = self.run(x, eps=eps, eps_v=eps_v, use_mean=use_posterior_mean)
        sigma2 = np.stack([GammaShape1(ls).scale() for ls in tr.log_scales], axis=1)
        return sigma2[0] if squeeze else sigma2

    def generate(self, T: int, noise: np.random.Generator, batch: int = 1):
        """Ancestral sampling z_1, x_1, z_2, x_2, ... feeding back x_t = sigma^2_t.

        Returns ``(LatentSequence, sigma2 [batch, T, F])`` where the latent
        sequence carries the prior parameters used at each step.
        """
        if T < 1:
            raise ValueError("T must be >= 1")
        B, L = batch, self.config.z_dim
        zs, means, lvs, s2 = [], [], [], []
        with ad.no_grad():
            v = None
            if self.kind == "dsae":
                v = _const(noise.standard_normal((B, self.config.v_dim)))
            gs = self._gen_init(B, None)
            for t in range(T):
                p = self._prior(gs, B)
                pd = p.as_diag(B) if isinstance(p, StandardGaussianPrior) else p
                z = gaussian_sample(pd, noise.standard_normal((B, L)))
                ls, gs = self._likelihood(gs, z, v)
                lik = GammaShape1(ls)
                sigma2 = lik.scale()
                lx_t = _const(np.log(floor_power(sigma2)))
                gs = self._gen_advance(gs, t, lx_t, z, None)
                zs.append(z.data)
                means.append(pd.mean.data)
                lvs.append(pd.log_var.data)
                s2.append(sigma2)
        latent = LatentSequence(np.stack(zs, 1), np.stack(means, 1), np.stack(lvs, 1), None if v is None else v.data)
        out = np.stack(s2, axis=1)
        if not np.isfinite(out).all():
            raise NonFiniteError("generation produced non-finite values")
        return latent, out

    def distribution_params(self, x, z, v=None) -> dict[str, np.ndarray]:
        """Prior, posterior and likelihood parameters with x and z both clamped.

        This is the probe surface for checking conditional-independence structure.
        """
        x = self._check_x(x)
        z = np.asarray(z, dtype=np.float64)
        if z.ndim == 2:
            z = z[None]
        B, T, _ = x.shape
        vv = None if v is None else np.atleast_2d(v)
        with ad.no_grad():
            tr = self.run(x, z_given=z, use_mean=True, v_given=vv)
        prior_mean, prior_lv = [], []
        for p in tr.priors:
            pd = p.as_diag(B) if isinstance(p, StandardGaussianPrior) else p
            prior_mean.append(pd.mean.data)
            prior_lv.append(pd.log_var.data)
        out = {
            "prior_mean": np.stack(prior_mean, 1),
            "prior_log_var": np.stack(prior_lv, 1),
            "post_mean": np.stack([q.mean.data for q in tr.posteriors], 1),
            "post_log_var": np.stack([q.log_var.data for q in tr.posteriors], 1),
            "log_scale": np.stack([ls.data for ls in tr.log_scales], 1),
        }
        if tr.v_posterior is not None:
            out["v_post_mean"] = tr.v_posterior.mean.data
            out["v_post_log_var"] = tr.v_posterior.log_var.data
        return out

    # -- parameters ----------------------------------------------------
    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]):
        params = dict(self.named_parameters())
        if set(params) != set(state):
            missing, extra = set(params) - set(state), set(state) - set(params)
            raise KeyError(f"parameter mismatch; missing={sorted(missing)} unexpected={sorted(extra)}")
        for name, p in params.items():
            arr = np.asarray(state[name], dtype=np.float64)
            if arr.shape != p.shape:
                raise ShapeError(f"{name}: expected {p.shape}, got {arr.shape}")
            p.data = arr.copy()


# ----------------------------------------------------------------------

class VAE(DvaeModel):
    """No temporal links: q(z_t|x_t), p(z_t) = N(0, I), p(x_t|z_t)."""

    kind = "vae"

    def _build(self, rng):
        c = self.config
        self.enc = GaussianHead(c.x_dim, c.hidden, c.z_dim, c.activation, rng)
        self.dec = ScaleHead(c.z_dim, c.hidden, c.x_dim, c.activation, rng)

    def _posterior(self, ctx, t, lx_t, es, gs):
        return DiagGaussian(*self.enc(lx_t))

    def _likelihood(self, gs, z, v):
        return self.dec(z), gs


class DKF(DvaeModel):
    """State-space model; posterior from z_{t-1} and a backward LSTM over x_{t:T}."""

    kind = "dkf"

    def _build(self, rng):
        c = self.config
        self.enc_rnn = LstmCell(c.x_dim, c.hidden, rng)
        self.enc = GaussianHead(c.x_dim + c.hidden + c.z_dim, c.hidden, c.z_dim, c.activation, rng)
        self.transition = GatedTransition(c.z_dim, c.hidden, c.activation, rng)
        self.dec = ScaleHead(c.z_dim, c.hidden, c.x_dim, c.activation, rng)

    def _context(self, lxs):
        return {"g": self._lstm(self.enc_rnn, lxs, "backward")}

    def _posterior(self, ctx, t, lx_t, es, gs):
        return DiagGaussian(*self.enc(_cat(lx_t, self._keep(ctx["g"][t]), self._keep(es["z_prev"]))))

    def _gen_init(self, B, ctx):
        return {"z_prev": self._zeros(B, self.config.z_dim)}

    def _prior(self, gs, B):
        if not self.config.temporal:
            return StandardGaussianPrior(self.config.z_dim)
        return DiagGaussian(*self.transition(gs["z_prev"]))

    def _likelihood(self, gs, z, v):
        return self.dec(z), gs

    def _gen_advance(self, gs, t, lx_t, z, ctx):
        return {"z_prev": z}


class STORN(DvaeModel):
    """i.i.d. prior; decoder LSTM over (x_{t-1}, z_t); causal encoder over x_{1:t}."""

    kind = "storn"

    def _build(self, rng):
        c = self.config
        self.enc_rnn = LstmCell(c.x_dim, c.hidden, rng)
        self.enc = GaussianHead(c.x_dim + c.hidden, c.hidden, c.z_dim, c.activation, rng)
        self.dec_rnn = LstmCell(c.x_dim + c.z_dim, c.hidden, rng)
        self.dec = ScaleHead(c.z_dim + c.hidden, c.hidden, c.x_dim, c.activation, rng)

    def _context(self, lxs):
        return {"e": self._lstm(self.enc_rnn, lxs, "forward")}

    def _posterior(self, ctx, t, lx_t, es, gs):
        return DiagGaussian(*self.enc(_cat(lx_t, self._keep(ctx["e"][t]))))

    def _gen_init(self, B, ctx):
        return {"d": self.dec_rnn.initial_state(B), "lx_prev": self._zeros(B, self.config.x_dim)}

    def _likelihood(self, gs, z, v):
        d = lstm_step(self.dec_rnn, _cat(gs["lx_prev"], z), gs["d"])
        return self.dec(_cat(z, self._keep(d.h))), {**gs, "d": d}

    def _gen_advance(self, gs, t, lx_t, z, ctx):
        return {**gs, "lx_prev": lx_t}


class VRNN(DvaeModel):
    """Full dependencies: one LSTM over (x_{t-1}, z_{t-1}) feeds prior, posterior and decoder."""

    kind = "vrnn"

    def _build(self, rng):
        c = self.config
        self.rnn = LstmCell(c.x_dim + c.z_dim, c.hidden, rng)
        self.prior_net = GaussianHead(c.hidden, c.hidden, c.z_dim, c.activation, rng)
        self.enc = GaussianHead(c.x_dim + c.hidden, c.hidden, c.z_dim, c.activation, rng)
        self.dec = ScaleHead(c.z_dim + c.hidden, c.hidden, c.x_dim, c.activation, rng)

    def _gen_init(self, B, ctx):
        return {"h": self.rnn.initial_state(B)}

    def _posterior(self, ctx, t, lx_t, es, gs):
        return DiagGaussian(*self.enc(_cat(lx_t, self._keep(gs["h"].h))))

    def _prior(self, gs, B):
        if not self.config.temporal:
            return StandardGaussianPrior(self.config.z_dim)
        return DiagGaussian(*self.prior_net(gs["h"].h))

    def _likelihood(self, gs, z, v):
        return self.dec(_cat(z, self._keep(gs["h"].h))), gs

    def _gen_advance(self, gs, t, lx_t, z, ctx):
        return {"h": lstm_step(self.rnn, _cat(lx_t, z), gs["h"])}


class SRNN(DvaeModel):
    """Deterministic forward LSTM over x_{1:t-1}; posterior smooths backward over the whole sequence."""

    kind = "srnn"

    def _build(self, rng):
        c = self.config
        self.fwd_rnn = LstmCell(c.x_dim, c.hidden, rng)
        self.bwd_rnn = LstmCell(c.x_dim + c.hidden, c.hidden, rng)
        self.enc = GaussianHead(c.x_dim + c.hidden + c.z_dim, c.hidden, c.z_dim, c.activation, rng)
        self.prior_net = GaussianHead(c.hidden + c.z_dim, c.hidden, c.z_dim, c.activation, rng)
        self.dec = ScaleHead(c.z_dim + c.hidden, c.hidden, c.x_dim, c.activation, rng)

    def _context(self, lxs):
        B = lxs[0].shape[0]
        state = self.fwd_rnn.initial_state(B)
        ds = [state]
        for lx in lxs[:-1]:
            state = lstm_step(self.fwd_rnn, lx, state)
            ds.append(state)
        a = self._lstm(self.bwd_rnn, [_cat(lx, d.h) for lx, d in zip(lxs, ds)], "backward")
        return {"d": ds, "a": a}

    def _posterior(self, ctx, t, lx_t, es, gs):
        return DiagGaussian(*self.enc(_cat(lx_t, self._keep(ctx["a"][t]), self._keep(es["z_prev"]))))

    def _gen_init(self, B, ctx):
        d = ctx["d"][0] if ctx else self.fwd_rnn.initial_state(B)
        return {"d": d, "z_prev": self._zeros(B, self.config.z_dim)}

    def _prior(self, gs, B):
        if not self.config.temporal:
            return StandardGaussianPrior(self.config.z_dim)
        return DiagGaussian(*self.prior_net(_cat(gs["d"].h, gs["z_prev"])))

    def _likelihood(self, gs, z, v):
        return self.dec(_cat(z, self._keep(gs["d"].h))), gs

    def _gen_advance(self, gs, t, lx_t, z, ctx):
        if ctx:
            d = ctx["d"][t + 1] if t + 1 < len(ctx["d"]) else gs["d"]
        else:
            d = lstm_step(self.fwd_rnn, lx_t, gs["d"])
        return {"d": d, "z_prev": z}


class RVAE(DvaeModel):
    """i.i.d. prior; decoder LSTM over z_{1:t}; non-causal posterior on z_{1:t-1} and x_{t:T}."""

    kind = "rvae"

    def _build(self, rng):
        c = self.config
        h = max(1, c.hidden // 2) if c.rvae_light else c.hidden
        self.enc_x_rnn = LstmCell(c.x_dim, h, rng)
        self.enc_z_rnn = LstmCell(c.z_dim, h, rng)
        self.enc = GaussianHead(c.x_dim + 2 * h, c.hidden, c.z_dim, c.activation, rng)
        self.dec_rnn = LstmCell(c.z_dim, h, rng)
        self.dec = ScaleHead(c.z_dim + h, c.hidden, c.x_dim, c.activation, rng)

    def _context(self, lxs):
        return {"g": self._lstm(self.enc_x_rnn, lxs, "backward")}

    def _enc_init(self, B):
        return {"r": self.enc_z_rnn.initial_state(B)}

    def _enc_advance(self, es, z):
        return {"r": lstm_step(self.enc_z_rnn, z, es["r"])}

    def _posterior(self, ctx, t, lx_t, es, gs):
        return DiagGaussian(*self.enc(_cat(lx_t, self._keep(ctx["g"][t]), self._keep(es["r"].h))))

    def _gen_init(self, B, ctx):
        return {"u": self.dec_rnn.initial_state(B)}

    def _likelihood(self, gs, z, v):
        u = lstm_step(self.dec_rnn, z, gs["u"])
        return self.dec(_cat(z, self._keep(u.h))), {"u": u}


class DSAE(DvaeModel):
    """State-space model plus a sequence-level variable v that enters every frame's likelihood."""

    kind = "dsae"

    def _build(self, rng):
        c = self.config
        self.fwd_rnn = LstmCell(c.x_dim, c.hidden, rng)
        self.bwd_rnn = LstmCell(c.x_dim, c.hidden, rng)
        self.enc_v = GaussianHead(2 * c.hidden, c.hidden, c.v_dim, c.activation, rng)
        self.enc = GaussianHead(c.x_dim + 2 * c.hidden, c.hidden, c.z_dim, c.activation, rng)
        self.prior_rnn = LstmCell(c.z_dim, c.hidden, rng)
        self.prior_net = GaussianHead(c.hidden, c.hidden, c.z_dim, c.activation, rng)
        self.dec = ScaleHead(c.z_dim + c.v_dim, c.hidden, c.x_dim, c.activation, rng)

    def _context(self, lxs):
        return {"f": self._lstm(self.fwd_rnn, lxs, "forward"), "b": self._lstm(self.bwd_rnn, lxs, "backward")}

    def _sequence_variable(self, ctx, B, eps_v, v_given, use_mean):
        pooled = [_cat(f, b) for f, b in zip(ctx["f"], ctx["b"])]
        summary = reduce(ad.add, pooled) * (1.0 / len(pooled))
        qv = DiagGaussian(*self.enc_v(summary))
        if v_given is not None:
            v = _const(np.asarray(v_given, dtype=np.float64))
        elif use_mean:
            v = qv.mean
        else:
            v = gaussian_sample(qv, eps_v)
        return v, qv

    def _posterior(self, ctx, t, lx_t, es, gs):
        return DiagGaussian(*self.enc(_cat(lx_t, ctx["f"][t], ctx["b"][t])))

    def _gen_init(self, B, ctx):
        return {"p": self.prior_rnn.initial_state(B)}

    def _prior(self, gs, B):
        return DiagGaussian(*self.prior_net(gs["p"].h))

    def _likelihood(self, gs, z, v):
        return self.dec(_cat(z, v)), gs

    def _gen_advance(self, gs, t, lx_t, z, ctx):
        return {"p": lstm_step(self.prior_rnn, z, gs["p"])}


MODEL_CLASSES = {cls.kind: cls for cls in (VAE, DKF, STORN, VRNN, SRNN, RVAE, DSAE)}


def build_model(config: DvaeConfig, seed: int = 0) -> DvaeModel:
    return MODEL_CLASSES[config.kind](config, seed)


def tie_to_vae(model: DvaeModel, vae: VAE):
    """Copy a VAE's encoder/decoder weights into the frame-local input blocks of ``model``.

    Every model's posterior head takes ``[log x_t, ...]`` and its decoder head
    ``[z_t, ...]``; with temporal paths severed the extra blocks only ever see
    zeros, so the tied model computes the VAE's ELBO.
    """
    c = model.config
    for dst, src, width in ((model.enc, vae.enc, c.x_dim), (model.dec, vae.dec, c.z_dim)):
        dst.hidden.weight.data[:, :width] = src.hidden.weight.data
        dst.hidden.bias.data[:] = src.hidden.bias.data
    model.enc.mean.weight.data[:] = vae.enc.mean.weight.data
    model.enc.mean.bias.data[:] = vae.enc.mean.bias.data
    model.enc.log_var.weight.data[:] = vae.enc.log_var.weight.data
    model.enc.log_var.bias.data[:] = vae.enc.log_var.bias.data
    model.dec.out.weight.data[:] = vae.dec.out.weight.data
    model.dec.out.bias.data[:] = vae.dec.out.bias.data
