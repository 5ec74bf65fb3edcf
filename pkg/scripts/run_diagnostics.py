#!/usr/bin/env python3
"""Run the analytic diagnostics behind the loss design.

Three checks, each producing a self-verifying artifact:
  1. a softmax failure witness — a configuration where both identities are
     classified correctly against their prototypes yet cross-modality
     retrieval returns the wrong identity,
  2. the feature-mask ambiguity — unmasked feature-side steps that decrease
     the loss while pushing an intra-identity cross-modality pair apart,
  3. the angular derivative probe grid — both derivative signs must be
     strict at every (theta_i, theta_j, s) grid point.

Outputs (under $SAS_OUT_DIR, default ./out):
    failure_witness.json
    fm_ambiguity.json
    derivative_grid.csv
"""

import argparse
import os
from pathlib import Path

from sasoftmax.analysis import (
    check_eq3_grid,
    check_fm_ambiguity,
    check_softmax_failure_mode,
    save_eq3_csv,
    save_witness_json,
)


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--budget", type=int, default=1_000_000,
                        help="random-search budget for the failure witness")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--num-ambiguity-seeds", type=int, default=40)
    parser.add_argument("--out", type=Path, default=None)
    args = parser.parse_args()

    out = args.out or Path(os.environ.get("SAS_OUT_DIR", "out"))
    out.mkdir(parents=True, exist_ok=True)

    witness = check_softmax_failure_mode(seed=args.seed, budget=args.budget)
    save_witness_json(witness, out / "failure_witness.json")
    print(f"failure witness found after {witness['attempts']} attempts "
          f"(cos(v1,n1)={witness['cosines']['v1_n1']:.4f} < "
          f"cos(v1,n2)={witness['cosines']['v1_n2']:.4f})")

    ambiguity = check_fm_ambiguity(range(args.num_ambiguity_seeds))
    save_witness_json(ambiguity, out / "fm_ambiguity.json")
    print(f"ambiguous unmasked steps: {ambiguity['num_ambiguous']}"
          f"/{len(ambiguity['per_seed'])} seeds")

    rows, ok = check_eq3_grid()
    save_eq3_csv(rows, out / "derivative_grid.csv")
    print(f"derivative probe grid: {len(rows)} points, "
          f"signs {'all strict' if ok else 'VIOLATED'}")

    print(f"wrote artifacts to {out}")
    return 0 if ok and ambiguity["num_ambiguous"] >= 1 else 2


if __name__ == "__main__":
    raise SystemExit(main())
