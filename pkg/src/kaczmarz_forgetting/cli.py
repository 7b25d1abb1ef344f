"""Command-line entry point (``kforget``).

Exit codes: 0 all checks pass, 1 a bound comparison failed, 2 configuration
error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import bounds, harness, pocs, sgd, tasks
from .harness import ConfigError, ExperimentConfig, QmapConfig
from .linalg import NumericalError
from .orderings import OrderingExhausted, parse_policy

log = logging.getLogger("kaczmarz_forgetting")

EXIT_OK, EXIT_BOUND, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.replace(" ", "").split(",") if v]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def _range(text: str) -> list[int]:
    vals = _int_list(text)
    if len(vals) == 1:
        return [vals[0], vals[0]]
    if len(vals) != 2:
        raise argparse.ArgumentTypeError("expected N or LO,HI")
    return vals


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="JSON file with ExperimentConfig fields")
    p.add_argument("--seed", type=int, help="base seed")
    p.add_argument("--seeds", type=int, help="number of Monte-Carlo seeds")
    p.add_argument("--k", type=_int_list, help="comma-separated k grid")
    p.add_argument("--ordering", choices=["wr", "wor", "cyclic"])
    p.add_argument("--out", type=Path)
    p.add_argument("--format", choices=["csv", "json"])
    p.add_argument("--normalize", action="store_true", default=None, help="rescale so ||w*|| = R = 1")


def _instance_flags(p: argparse.ArgumentParser, T=5, d=10) -> None:
    p.add_argument("--T", type=int, default=T)
    p.add_argument("--d", type=int, default=d)
    p.add_argument("--instance-seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kforget", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="write a task-collection fixture")
    _common(p)
    _instance_flags(p)
    p.add_argument("--kind", choices=["random", "clone"], default="random")
    p.add_argument("--rank", type=_range, default=[1, 3])
    p.add_argument("--rows", type=_range)
    p.add_argument("--angle", type=float, default=0.05)

    for name, help_ in (("run", "run one experiment"), ("sweep", "run an experiment over ordering policies")):
        p = sub.add_parser(name, help=help_)
        _common(p)
        p.add_argument("--bounds", type=lambda s: [t for t in s.split(",") if t])
        p.add_argument("--workers", type=int)
        if name == "sweep":
            p.add_argument("--orderings", default="wr,wor")

    p = sub.add_parser("bounds", help="print bound tables for given statistics")
    _common(p)
    p.add_argument("--d", type=int, default=10)
    p.add_argument("--T", type=int, default=20)
    p.add_argument("--rbar", type=float, default=1.0)
    p.add_argument("--R", type=float, default=1.0)
    p.add_argument("--wstar", type=float, default=1.0)
    p.add_argument("--eta", type=float, help="SGD step as a multiple of 1/beta")
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--D", type=float, default=1.0)

    p = sub.add_parser("qmap", help="run the Q-map checks")
    _common(p)
    _instance_flags(p, T=4, d=6)
    p.add_argument("--rank", type=_range, default=[1, 3])
    p.add_argument("--collections", type=int, default=10)
    p.add_argument("--moment-k", type=int, default=0)

    p = sub.add_parser("pocs", help="POCS residual vs the universal POCS bound")
    _common(p)
    _instance_flags(p, T=12, d=6)
    p.add_argument("--kinds", default="halfspace,ball,box")

    p = sub.add_parser("classify", help="max-margin projection forgetting vs its bound")
    _common(p)
    _instance_flags(p, T=10, d=8)
    p.add_argument("--data", type=Path, help="tasks in 'label x1 .. xd' lines, blank line between tasks")
    p.add_argument("--max-examples", type=int, default=3)

    p = sub.add_parser("sgd", help="last-iterate SGD vs its bound")
    _common(p)
    p.add_argument("--n", type=int, default=10)
    p.add_argument("--d", type=int, default=10)
    p.add_argument("--instance-seed", type=int, default=0)
    p.add_argument("--eta", type=float, default=1.0, help="step as a multiple of 1/beta")
    return parser


def _config_doc(args) -> dict:
    doc = json.loads(args.config.read_text()) if args.config else {}
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    over = {
        "base_seed": args.seed, "num_seeds": args.seeds, "k_grid": args.k,
        "ordering_policy": args.ordering, "format": args.format,
        "output_path": None if args.out is None else str(args.out),
        "normalize": args.normalize, "bounds": getattr(args, "bounds", None),
        "workers": getattr(args, "workers", None),
    }
    doc.update({key: v for key, v in over.items() if v is not None})
    return doc


def _experiment_config(args) -> ExperimentConfig:
    return ExperimentConfig.from_dict(_config_doc(args))


def _emit_records(records: list[dict], args, header=None) -> None:
    fmt = args.format or "json"
    if header is None:
        header = list(records[0]) if records else []
    text = harness.format_rows(records, fmt, header)
    if args.out:
        args.out.write_text(text)
    else:
        sys.stdout.write(text)


def _print_aggregates(result: harness.ExperimentResult, policy: str = "") -> None:
    for a in result.aggregates:
        flag = "" if not a.pass_flags else ("PASS" if a.passed else "FAIL")
        print(
            f"{policy:>20s} k={a.k:<6d} {a.theorem_tag or '-':>13s} "
            f"loss={a.mean_loss:.4e}±{a.se_loss:.1e} forg={a.mean_forgetting:.4e}±{a.se_forgetting:.1e} "
            f"bound_loss={_fmt_opt(a.bound_loss)} bound_forg={_fmt_opt(a.bound_forgetting)} {flag}"
        )


def _fmt_opt(v) -> str:
    return "-" if v is None else f"{v:.4e}"


def cmd_gen(args) -> int:
    if args.config:
        gen = ExperimentConfig.load(args.config).generator
    elif args.kind == "clone":
        gen = {"kind": "clone", "seed": args.instance_seed, "T": args.T, "d": args.d, "angle_eps": args.angle}
    else:
        gen = {"kind": "random", "seed": args.instance_seed, "T": args.T, "d": args.d, "rank": args.rank, "rows": args.rows}
    c = harness.build_generator(gen)
    if args.normalize:
        c = tasks.normalized(c)
    text = tasks.to_json(c)
    if args.out:
        args.out.write_text(text)
    else:
        print(text)
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = _experiment_config(args)
    result = harness.run_experiment(cfg)
    _print_aggregates(result, cfg.ordering_policy)
    if not result.pathwise.ok:
        log.error("pathwise invariant violated: %s", result.pathwise)
        return EXIT_BOUND
    return EXIT_OK if result.passed else EXIT_BOUND


def cmd_sweep(args) -> int:
    doc = _config_doc(args)
    base = ExperimentConfig.from_dict({**doc, "bounds": [], "ordering_policy": "wr"})
    code = EXIT_OK
    for name in args.orderings.split(","):
        policy = parse_policy(name).value
        c = harness.build_generator(base.generator)
        ks = [k for k in base.k_grid if policy != "without_replacement" or k <= c.T]
        tags = [t for t in doc.get("bounds", []) if (t == "wor") == (policy == "without_replacement")]
        if policy == "cyclic":
            tags = []
        out = None
        if base.output_path:
            p = Path(base.output_path)
            out = str(p.with_name(f"{p.stem}.{name}{p.suffix}"))
        cfg = replace(base, ordering_policy=policy, k_grid=ks, bounds=tags, output_path=out)
        cfg.validate()
        result = harness.run_experiment(cfg)
        _print_aggregates(result, policy)
        if not (result.passed and result.pathwise.ok):
            code = EXIT_BOUND
    return code


def cmd_bounds(args) -> int:
    ks = args.k or [2, 3, 4, 16, 64, 256]
    st = tasks.TaskStats(args.R, args.rbar, int(round(args.rbar)), 0, args.d, args.wstar, args.T)
    rows = []
    for k in ks:
        row = {"k": k}
        for tag in ("param_dep_wr", "universal_wr", "wor"):
            try:
                rep = bounds.report_for(tag, st, k)
                row[f"{tag}_loss"] = rep.loss_bound
                row[f"{tag}_forgetting"] = rep.forgetting_bound
            except bounds.BoundRangeError:
                row[f"{tag}_loss"] = row[f"{tag}_forgetting"] = None
        row["pocs"] = bounds.bound_pocs(k, args.wstar**2)
        row["classification"] = bounds.bound_classification(k, args.wstar, args.R)
        if args.eta is not None:
            eta = args.eta / args.beta
            row["sgd_last"] = bounds.bound_sgd_last(eta, args.beta, args.D, k)
            try:
                row["sgd_wor"] = bounds.bound_sgd_wor(eta, args.beta, args.D, k)
            except bounds.BoundRangeError:
                row["sgd_wor"] = None
        rows.append(row)
    _emit_records(rows, args)
    return EXIT_OK


def cmd_qmap(args) -> int:
    cfg = QmapConfig(
        num_collections=args.collections, T=args.T, d=args.d, rank=args.rank,
        base_seed=args.seed if args.seed is not None else args.instance_seed,
        moment_k=args.moment_k, moment_seeds=args.seeds or 2000,
    )
    report = harness.run_qmap_checks(cfg)
    _emit_records(report, args)
    return EXIT_OK if all(r["passed"] for r in report) else EXIT_BOUND


def _seeds(args, default=2000) -> list[int]:
    base = args.seed or 0
    return list(range(base, base + (args.seeds or default)))


def cmd_pocs(args) -> int:
    fam = pocs.gen_convex_family(args.instance_seed, args.T, args.d, tuple(args.kinds.split(",")))
    ks = args.k or [4, 16, 64]
    policy = args.ordering or "wr"
    if policy == "wor":
        ks = [k for k in ks if k <= args.T]
    rows = harness.pocs_experiment(fam, policy, _seeds(args), ks)
    _emit_records(rows, args)
    return EXIT_OK if all(r["pass"] for r in rows) else EXIT_BOUND


def cmd_classify(args) -> int:
    if args.data:
        loaded = pocs.load_classification_tasks(args.data)
        halfspaces = [h for s in pocs.max_margin_sets(loaded) for h in (s.halfspaces if isinstance(s, pocs.Polyhedron) else (s,))]
        w_star, worst, ok = pocs.intersection_certificate(halfspaces)
        if not ok:
            raise ConfigError(f"tasks are not jointly separable (worst violation {worst:.3e})")
        inst = pocs.SeparableInstance(tuple(loaded), w_star, max(t.radius for t in loaded), worst)
    else:
        inst = pocs.gen_separable_tasks(args.instance_seed, args.T, args.d, args.max_examples)
    ks = args.k or [4, 16, 64]
    policy = args.ordering or "wr"
    if policy == "wor":
        ks = [k for k in ks if k <= len(inst.tasks)]
    rows = harness.classification_experiment(inst, policy, _seeds(args), ks)
    _emit_records(rows, args)
    return EXIT_OK if all(r["pass"] for r in rows) else EXIT_BOUND


def cmd_sgd(args) -> int:
    problem = sgd.gen_random_problem(args.instance_seed, args.n, args.d)
    ks = args.k or [4, 16, 64]
    rows = harness.sgd_experiment(problem, args.eta, args.ordering or "wr", _seeds(args), ks)
    _emit_records(rows, args)
    return EXIT_OK if all(r["pass"] for r in rows) else EXIT_BOUND


COMMANDS = {
    "gen": cmd_gen, "run": cmd_run, "sweep": cmd_sweep, "bounds": cmd_bounds,
    "qmap": cmd_qmap, "pocs": cmd_pocs, "classify": cmd_classify, "sgd": cmd_sgd,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, json.JSONDecodeError, OrderingExhausted, bounds.BoundRangeError, sgd.StepSizeError, FileNotFoundError) as exc:
        log.error("configuration error: %s", exc)
        return EXIT_CONFIG
    except harness.ExperimentError as exc:
        log.error("%s", exc)
        cause = exc.cause
        while hasattr(cause, "cause"):
            cause = cause.cause
        return EXIT_NUMERIC if isinstance(cause, NumericalError) else EXIT_CONFIG
    except NumericalError as exc:
        log.error("numerical failure: %s", exc)
        return EXIT_NUMERIC
    except ValueError as exc:
        log.error("configuration error: %s", exc)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
