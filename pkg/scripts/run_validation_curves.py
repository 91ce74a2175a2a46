#!/usr/bin/env python3
"""Sweep the assumption diagnostics over dimension.

Produces one slope-statistic (a3) CSV per theta-model suitable for a
line-by-d figure, plus one moment-diagnostic (mn/dn) CSV per model over
a smaller d range.  Everything is routed through the vinestep CLI so the
CSVs and sidecars match what `vinestep validate-*` emits.
"""

import argparse
import sys
from pathlib import Path

from vinestep.cli import main as vinestep_main

# (structure, theta-model token, alpha rule, eps) — the flat-weight runs
# plus the growing-weight contrast for the slowly decaying D-vine
A3_RUNS = [
    ("cvine", "zero", "constant-1", "0.005"),
    ("cvine", "geometric", "constant-1", "0.005"),
    ("cvine", "harmonic", "constant-1", "0.005"),
    ("dvine", "sqrt-slow", "constant-1", "0.005"),
    ("dvine", "sqrt-slow", "linear-in-tree", "1e-7"),
]


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out-dir", default="out", type=Path)
    ap.add_argument("--d", default="5,10,15,20,25,30,40,50")
    ap.add_argument("--mn-d", default="5,10,15,20,25")
    ap.add_argument("--seed", default=7, type=int)
    args = ap.parse_args(argv)
    args.out_dir.mkdir(parents=True, exist_ok=True)

    for structure, token, alpha, eps in A3_RUNS:
        out = args.out_dir / f"a3_{structure}_{token}_{alpha}.csv"
        rc = vinestep_main([
            "validate-a3",
            "--structure", structure, "--family", "gaussian",
            "--theta-model", token, "--d", args.d,
            "--alpha", alpha, "--eps", eps, "--K", "50",
            "--seed", str(args.seed), "--out", str(out),
        ])
        if rc != 0:
            return rc
        print(f"wrote {out}")

    for structure in ("cvine", "dvine"):
        for token in ("geometric", "harmonic"):
            out = args.out_dir / f"mndn_{structure}_{token}.csv"
            rc = vinestep_main([
                "validate-mndn",
                "--structure", structure, "--family", "gaussian",
                "--theta-model", token, "--d", args.mn_d,
                "--K", "30", "--seed", str(args.seed), "--out", str(out),
            ])
            if rc != 0:
                return rc
            print(f"wrote {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
