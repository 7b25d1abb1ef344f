"""POCS residuals on random convex families and max-margin forgetting on separable tasks.

    python scripts/projection_rates.py --seeds 2000 --out results/projections.csv
"""
from __future__ import annotations

import argparse
import csv
from pathlib import Path

from kaczmarz_forgetting import pocs
from kaczmarz_forgetting.harness import classification_experiment, pocs_experiment


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, default=2000)
    ap.add_argument("--out", default="results/projections.csv")
    args = ap.parse_args(argv)
    seeds = range(args.seeds)
    rows = []
    for seed, T, d, policy, ks in [(1, 12, 6, "wr", [4, 16, 64]), (4, 64, 6, "wor", [4, 16, 64])]:
        fam = pocs.gen_convex_family(seed, T, d)
        rows += [(f"pocs T={T} d={d}", r) for r in pocs_experiment(fam, policy, seeds, ks)]
    for seed in (0, 1):
        inst = pocs.gen_separable_tasks(seed, 10, 8)
        rows += [(f"max-margin instance {seed}", r) for r in classification_experiment(inst, "wr", seeds, [4, 16, 64])]
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["family", "policy", "k", "mean", "se", "bound", "pass"])
        for name, r in rows:
            w.writerow([name, r["policy"], r["k"], f"{r['mean']:.6g}", f"{r['se']:.3g}", f"{r['bound']:.6g}", r["pass"]])
    failures = sum(not r["pass"] for _, r in rows)
    print(f"wrote {out}; {failures} bound failures")
    return int(failures > 0)


if __name__ == "__main__":
    raise SystemExit(main())
