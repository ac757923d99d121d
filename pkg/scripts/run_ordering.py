"""Train all seven models on the desk synthetic corpus and compare them against the VAE.

    python scripts/run_ordering.py --seeds 0 1 2 --json ordering.json
"""
import argparse
import json
import logging
import sys

from dvae.benchmark import run_ordering
from dvae.config import build_config, parse_overrides
from dvae.models import MODEL_KINDS


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    p.add_argument("--kinds", nargs="+", default=list(MODEL_KINDS), choices=MODEL_KINDS)
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="override a desk preset key, e.g. max_epochs=40")
    p.add_argument("--json", help="write per-seed scores here")
    p.add_argument("-v", "--verbose", action="store_true", help="log every epoch")
    args = p.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(asctime)s %(message)s")

    base = build_config({"preset": "desk"}, parse_overrides(args.overrides))
    results = []
    for seed in args.seeds:
        r = run_ordering(seed, base, kinds=args.kinds)
        results.append(r)
        print(r.table())
        if "vae" in args.kinds:
            print("PASS" if r.passed else "FAIL:\n  " + "\n  ".join(r.failures()))
        print(flush=True)
    if args.json:
        with open(args.json, "w") as f:
            json.dump({r.seed: r.scores for r in results}, f, indent=1, sort_keys=True)
    if "vae" in args.kinds:
        n = sum(r.passed for r in results)
        print(f"{n}/{len(results)} seeds pass")
        return 0 if 2 * n > len(results) else 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
