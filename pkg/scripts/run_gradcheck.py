#!/usr/bin/env python3
"""Finite-difference verification of every analytic gradient.

Checks each loss's hand-derived gradients and the full encoder pipeline
against central differences over many random instances, then writes one row
per (loss, seed, target) and exits non-zero if any check fails.

Output (under $SAS_OUT_DIR, default ./out): gradcheck.csv
"""

import argparse
import os
from pathlib import Path

from sasoftmax.gradcheck import check_all_losses, check_pipeline, save_rows_csv


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--num-seeds", type=int, default=20)
    parser.add_argument("--tolerance", type=float, default=1e-6)
    parser.add_argument("--pipeline-tolerance", type=float, default=1e-5)
    parser.add_argument("--out", type=Path, default=None)
    args = parser.parse_args()

    out = args.out or Path(os.environ.get("SAS_OUT_DIR", "out"))
    out.mkdir(parents=True, exist_ok=True)

    seeds = range(args.num_seeds)
    rows = check_all_losses(seeds, tolerance=args.tolerance)
    rows += check_pipeline(seeds, tolerance=args.pipeline_tolerance)
    save_rows_csv(rows, out / "gradcheck.csv")

    failures = [r for r in rows if not r.passed]
    worst = max(rows, key=lambda r: r.rel_error)
    print(f"{len(rows)} checks, {len(failures)} failures")
    print(f"worst relative error: {worst.rel_error:.3e} "
          f"({worst.loss}/{worst.target}, seed {worst.seed})")
    for r in failures:
        print(f"  FAIL {r.loss}/{r.target} seed={r.seed} rel_error={r.rel_error:.3e}")
    print(f"wrote {out / 'gradcheck.csv'}")
    return 2 if failures else 0


if __name__ == "__main__":
    raise SystemExit(main())
