#!/usr/bin/env python3
"""Run hyper-parameter sweeps on the reference protocol.

Sweeps one parameter over a grid with the reference seeds and writes per-run
rows plus a per-grid-point summary. The swept parameter selects the variant:
alpha and beta sweep the masked losses, am_margin and circle_gamma sweep the
margin baselines.

Outputs (under $SAS_OUT_DIR, default ./out):
    sweep_<parameter>_rows.csv
    sweep_<parameter>_summary.csv
"""

import argparse
import os
from pathlib import Path

from sasoftmax.experiments import (
    SWEEP_PARAMETERS,
    desk_protocol,
    run_sweep,
    save_rows_csv,
    summarize,
)

DEFAULT_GRIDS = {
    "alpha": [0.0, 0.3, 0.5, 0.7, 1.0],
    "beta": [0.25, 0.5, 1.0, 2.0, 4.0],
    "am_margin": [0.1, 0.2, 0.3],
    "circle_gamma": [32.0, 64.0, 128.0],
}


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--parameter", choices=SWEEP_PARAMETERS, action="append",
                        help="repeatable; default: all four parameters")
    parser.add_argument("--grid", default=None,
                        help="comma-separated values (single-parameter runs only)")
    parser.add_argument("--seeds", default=None, help="comma-separated seed list")
    parser.add_argument("--out", type=Path, default=None)
    args = parser.parse_args()

    parameters = args.parameter or list(SWEEP_PARAMETERS)
    if args.grid is not None and len(parameters) != 1:
        parser.error("--grid requires exactly one --parameter")

    overrides = {}
    if args.seeds is not None:
        overrides["seeds"] = args.seeds
    cfg = desk_protocol(**overrides)

    out = args.out or Path(os.environ.get("SAS_OUT_DIR", "out"))
    out.mkdir(parents=True, exist_ok=True)

    for parameter in parameters:
        if args.grid is not None:
            grid = [float(v) for v in args.grid.split(",")]
        else:
            grid = DEFAULT_GRIDS[parameter]
        rows = run_sweep(cfg, parameter, grid)
        summary = summarize(rows, group_key="value")
        save_rows_csv(rows, out / f"sweep_{parameter}_rows.csv")
        save_rows_csv(summary, out / f"sweep_{parameter}_summary.csv")
        print(f"-- {parameter} --")
        for row in summary:
            print(
                f"  {parameter}={row['value']:<6} "
                f"mean_map={row['mean_map_mean']:.4f} (+/- {row['mean_map_std']:.4f})"
            )
    print(f"wrote sweep CSVs to {out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
