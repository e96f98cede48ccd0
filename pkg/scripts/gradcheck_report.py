#!/usr/bin/env python3
"""Finite-difference audit of every analytic gradient in the loss stack."""
from __future__ import annotations

import argparse
import sys
import time

from ellipsedet.gradcases import CASES, run_case


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--trials", type=int, default=100, help="instances per loss")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    all_ok = True
    for name in sorted(CASES):
        _, _, tol = CASES[name]
        t0 = time.perf_counter()
        worst = run_case(name, n_instances=args.trials, seed=args.seed)
        ok = worst < tol
        all_ok = all_ok and ok
        tag = "ok " if ok else "BAD"
        print(
            f"{tag} {name:<22} worst rel err {worst:.3e}  "
            f"(tol {tol:.0e})  [{time.perf_counter() - t0:.1f}s]"
        )
    return 0 if all_ok else 1


if __name__ == "__main__":
    sys.exit(main())
