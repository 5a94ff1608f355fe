#!/usr/bin/env python3
"""Regenerate the bundled birthweight fixture from the source table.

Reads ``birthweight_source.csv`` (imperial units: mother's weight in pounds,
birthweight in grams) and writes ``birthweight.csv`` in the units the
analysis uses: mother's pre-pregnancy weight in kilograms (pounds times
0.453592) and birthweight in kilograms (grams over 1000).  The ethnicity
factor is expanded into two indicators with the first level (white) as the
reference.  Float cells are written with ``repr`` so re-parsing reproduces
the exact binary values.

Usage: python tools/convert_birthweight.py [src_dir]
"""

import csv
import sys
from pathlib import Path

LBS_TO_KG = 0.453592
G_TO_KG = 1000.0


def convert(src: Path, dst: Path) -> int:
    with open(src, newline="") as fh:
        rows = list(csv.DictReader(fh))
    with open(dst, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["bweight", "age", "weight", "smoker", "eth1", "eth2"])
        for r in rows:
            race = int(r["race"])
            out.writerow(
                [
                    repr(int(r["bwt"]) / G_TO_KG),
                    int(r["age"]),
                    repr(int(r["lwt"]) * LBS_TO_KG),
                    int(r["smoke"]),
                    int(race == 2),
                    int(race == 3),
                ]
            )
    return len(rows)


if __name__ == "__main__":
    base = Path(sys.argv[1]) if len(sys.argv) > 1 else Path("src/fricsel/data")
    n = convert(base / "birthweight_source.csv", base / "birthweight.csv")
    print(f"wrote {n} rows to {base / 'birthweight.csv'}")
