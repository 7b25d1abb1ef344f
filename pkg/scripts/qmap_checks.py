"""Q-map checks on random small collections; prints failures and writes a CSV.

    python scripts/qmap_checks.py --collections 100 --out results/qmap.csv
"""
from __future__ import annotations

import argparse
import csv
from pathlib import Path

import numpy as np

from kaczmarz_forgetting import qmap, tasks


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--collections", type=int, default=100)
    ap.add_argument("--max-d", type=int, default=8)
    ap.add_argument("--out", default="results/qmap.csv")
    args = ap.parse_args(argv)
    rng = np.random.default_rng(8)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    failures = 0
    with out.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["collection", "d", "T", "check", "value", "bound", "passed"])
        for j in range(args.collections):
            d = int(rng.integers(3, args.max_d + 1))
            T = int(rng.integers(1, 11))
            c = tasks.gen_random_realizable(5000 + j, T, d, (1, d), (1, d + 2))
            for r in qmap.run_checks(c, seed=j):
                failures += not r.passed
                w.writerow([j, d, T, r.name, f"{r.value:.6g}", f"{r.bound:.6g}", r.passed])
    print(f"wrote {out}; {failures} failed checks")
    return int(failures > 0)


if __name__ == "__main__":
    raise SystemExit(main())
