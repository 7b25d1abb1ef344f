"""Monte-Carlo loss/forgetting of Kaczmarz runs against the regression bounds.

Writes one CSV row per (instance, policy, k, metric) with the mean, its
standard error and the bound.  Example::

    python scripts/regression_rates.py --seeds 2000 --out results/regression.csv
"""
from __future__ import annotations

import argparse
import csv
from pathlib import Path

from kaczmarz_forgetting import bounds, tasks
from kaczmarz_forgetting.harness import SE_MARGIN
from kaczmarz_forgetting.montecarlo import mean_se, simulate_regression

# (d, rank, T, policy, k grid, bound)
INSTANCES = [
    (6, 4, 8, "wr", [4, 16, 64, 256], "param_dep_wr"),
    (14, 4, 10, "wr", [4, 16, 64, 256], "param_dep_wr"),
    (30, 5, 6, "wr", [4, 16, 64, 256], "param_dep_wr"),
    (10, (1, 3), 5, "wr", [16, 256, 2048], "universal_wr"),
    (20, (1, 6), 12, "wr", [16, 256, 2048], "universal_wr"),
    (10, (1, 3), 20, "wor", [2, 5, 10, 20], "wor"),
    (30, (2, 6), 20, "wor", [2, 5, 10, 20], "wor"),
]


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, default=2000)
    ap.add_argument("--out", default="results/regression.csv")
    args = ap.parse_args(argv)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    failures = 0
    with out.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["d", "T", "avg_rank", "policy", "bound", "k", "metric", "mean", "se", "bound_value", "pass"])
        for d, rank, T, policy, ks, tag in INSTANCES:
            c = tasks.normalized(tasks.gen_random_realizable(97 * d + T, T, d, rank))
            s = simulate_regression(c, policy, range(args.seeds), ks)
            for j, k in enumerate(ks):
                rep = bounds.report_for(tag, c.stats, k)
                for metric, vals, b in (("loss", s.loss[:, j], rep.loss_bound), ("forgetting", s.forgetting[:, j], rep.forgetting_bound)):
                    m, se = mean_se(vals)
                    ok = m + SE_MARGIN * se <= b
                    failures += not ok
                    w.writerow([d, T, f"{c.stats.avg_rank:.4g}", policy, tag, k, metric, f"{m:.6g}", f"{se:.3g}", f"{b:.6g}", ok])
            print(f"d={d} T={T} {policy}: pathwise ok={s.pathwise.ok}")
    print(f"wrote {out}; {failures} bound failures")
    return int(failures > 0)


if __name__ == "__main__":
    raise SystemExit(main())
