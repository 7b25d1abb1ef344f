"""Forgetting on the two-direction clone instance as a function of the angle.

For two unit rank-1 tasks at angle eps, forgetting is at most sin(eps)^2 / 4
in normalized units, so small angles cannot push it past a fixed threshold.
This sweep makes that visible.

    python scripts/clone_forgetting.py --k 64 --out results/clone.csv
"""
from __future__ import annotations

import argparse
import csv
import math
from pathlib import Path

import numpy as np

from kaczmarz_forgetting import tasks
from kaczmarz_forgetting.montecarlo import mean_se, simulate_regression


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--k", type=int, default=64)
    ap.add_argument("--T", type=int, default=2)
    ap.add_argument("--seeds", type=int, default=5000)
    ap.add_argument("--out", default="results/clone.csv")
    args = ap.parse_args(argv)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["angle", "k", "normalized_forgetting", "se", "sin2_over_4"])
        for eps in np.geomspace(0.01, math.pi / 2, 12):
            c = tasks.gen_two_task_clone(0, args.T, 2, float(eps))
            s = simulate_regression(c, "wr", range(args.seeds), [args.k], pathwise=False)
            scale = c.stats.w_star_norm**2 * c.stats.radius_R**2
            m, se = mean_se(s.forgetting[:, 0] / scale)
            w.writerow([f"{eps:.4g}", args.k, f"{m:.4g}", f"{se:.2g}", f"{math.sin(eps) ** 2 / 4:.4g}"])
    print(f"wrote {out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
