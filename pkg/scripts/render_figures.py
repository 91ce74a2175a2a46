#!/usr/bin/env python3
"""Render every study/validation CSV in a directory to PNG+SVG.

Thin driver around the sibling `figgen` package: writes one figure spec
per CSV and shells out to `figgen <spec.json>`, keeping the CSV files as
the only interface between the two packages.
"""

import argparse
import json
import shutil
import subprocess
import sys
from pathlib import Path


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out-dir", default="out", type=Path,
                    help="directory holding a3_*.csv / study_*.csv outputs")
    args = ap.parse_args(argv)

    if shutil.which("figgen") is None:
        print("figgen is not installed (pip install -e figgen/)", file=sys.stderr)
        return 2

    jobs = [
        *(("line-by-d", p) for p in sorted(args.out_dir.glob("a3_*.csv"))),
        *(("boxplot-grid", p) for p in sorted(args.out_dir.glob("study_*.csv"))),
    ]
    if not jobs:
        print(f"no a3_*.csv or study_*.csv files under {args.out_dir}", file=sys.stderr)
        return 2

    for kind, csv_path in jobs:
        spec = {
            "kind": kind,
            "input": str(csv_path),
            "output": str(csv_path.with_suffix(".png")),
        }
        spec_path = csv_path.with_suffix(".figspec.json")
        spec_path.write_text(json.dumps(spec, indent=1))
        proc = subprocess.run(["figgen", str(spec_path)])
        if proc.returncode != 0:
            return proc.returncode
    return 0


if __name__ == "__main__":
    sys.exit(main())
