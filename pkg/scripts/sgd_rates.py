"""Last-iterate (with replacement) and prefix-average (without replacement) SGD losses vs their bounds.

    python scripts/sgd_rates.py --seeds 2000 --out results/sgd.csv
"""
from __future__ import annotations

import argparse
import csv
from pathlib import Path

from kaczmarz_forgetting import sgd
from kaczmarz_forgetting.harness import sgd_experiment


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, default=2000)
    ap.add_argument("--out", default="results/sgd.csv")
    args = ap.parse_args(argv)
    seeds = range(args.seeds)
    runs = [
        ("random n=10", sgd.gen_random_problem(0, 10, 10), 1.0, "wr", [4, 16, 64, 256]),
        ("random n=10", sgd.gen_random_problem(0, 10, 10), 0.5, "wr", [4, 16, 64, 256]),
        ("random n=64", sgd.gen_random_problem(7, 64, 10), 1.0, "wor", [4, 16, 63]),
        ("rank-1 n=64", sgd.gen_rank1_unit_problem(8, 64, 20), 1.0, "wor", [4, 16, 63]),
    ]
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    failures = 0
    with out.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["problem", "eta_times_beta", "policy", "T", "mean", "se", "bound", "pass"])
        for name, p, scale, policy, Ts in runs:
            for r in sgd_experiment(p, scale, policy, seeds, Ts):
                failures += not r["pass"]
                w.writerow([name, scale, r["policy"], r["T"], f"{r['mean']:.6g}", f"{r['se']:.3g}", f"{r['bound']:.6g}", r["pass"]])
    print(f"wrote {out}; {failures} bound failures")
    return int(failures > 0)


if __name__ == "__main__":
    raise SystemExit(main())
