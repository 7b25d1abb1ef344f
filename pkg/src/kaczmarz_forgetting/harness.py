"""Experiment configuration, Monte-Carlo execution, aggregation and output.

Run ``r`` of an experiment uses ordering seed ``base_seed + r``.  Seeds are
simulated in fixed blocks of ``SEED_BLOCK`` and rows are sorted by
``(k, seed)`` before writing, so a configuration produces byte-identical
files whatever the worker count.
"""
from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import bounds, learners, metrics, orderings, pocs, qmap, sgd, tasks
from .montecarlo import PathwiseReport, mean_se, simulate_regression
from .orderings import Policy

PER_RUN_HEADER = [
    "k", "seed", "loss", "forgetting", "regret", "dist_sq",
    "bound_loss", "bound_forgetting", "theorem_tag", "pass",
]
AGGREGATE_HEADER = [
    "k", "theorem_tag", "num_seeds",
    "mean_loss", "se_loss", "mean_forgetting", "se_forgetting",
    "mean_regret", "se_regret", "mean_dist_sq", "se_dist_sq",
    "bound_loss", "bound_forgetting", "pass",
]
SE_MARGIN = 3.0
SEED_BLOCK = 512


class ConfigError(ValueError):
    pass


class ExperimentError(RuntimeError):
    """A run failed; carries the failing seed and step plus the rows finished before it."""

    def __init__(self, seed, k, cause: Exception, partial=()):
        super().__init__(f"run failed at seed={seed}, k={k}: {cause}")
        self.seed, self.k, self.cause, self.partial = seed, k, cause, list(partial)

    def __reduce__(self):
        return type(self), (self.seed, self.k, self.cause, self.partial)


@dataclass
class ExperimentConfig:
    generator: dict = field(default_factory=lambda: {"kind": "random", "seed": 0, "T": 5, "d": 10, "rank": [1, 3]})
    ordering_policy: str = "with_replacement"
    learner_tag: str = "kaczmarz"
    k_grid: list = field(default_factory=lambda: [2, 4, 16])
    num_seeds: int = 100
    base_seed: int = 0
    bounds: list = field(default_factory=list)
    output_path: str | None = None
    format: str = "csv"
    normalize: bool = False
    workers: int = 1
    eta: float | None = None
    beta: float | None = None

    def __post_init__(self):
        self.ordering_policy = orderings.parse_policy(self.ordering_policy).value
        self.k_grid = [int(k) for k in self.k_grid]
        self.validate()

    def validate(self) -> None:
        if not self.k_grid or any(k < 1 for k in self.k_grid) or self.k_grid != sorted(set(self.k_grid)):
            raise ConfigError("k_grid must be a nonempty strictly ascending list of positive counts")
        if self.num_seeds < 1:
            raise ConfigError("num_seeds must be >= 1")
        if self.format not in ("csv", "json"):
            raise ConfigError(f"unknown format {self.format!r}")
        try:
            learners.Learner(self.learner_tag)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        for tag in self.bounds:
            if tag not in ("param_dep_wr", "universal_wr", "wor"):
                raise ConfigError(f"bound {tag!r} does not apply to continual regression experiments")
            if tag == "wor" and self.ordering_policy != Policy.WITHOUT_REPLACEMENT.value:
                raise ConfigError("the wor bound needs a without_replacement ordering")
            if tag in ("param_dep_wr", "universal_wr") and self.ordering_policy != Policy.WITH_REPLACEMENT.value:
                raise ConfigError(f"the {tag} bound needs a with_replacement ordering")

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        try:
            return cls(**doc)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            doc = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        return cls.from_dict(doc)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class AggregateRow:
    k: int
    theorem_tag: str
    num_seeds: int
    mean_loss: float
    se_loss: float
    mean_forgetting: float
    se_forgetting: float
    mean_regret: float
    se_regret: float
    mean_dist_sq: float
    se_dist_sq: float
    bound_loss: float | None
    bound_forgetting: float | None
    pass_flags: dict

    @property
    def passed(self) -> bool:
        return all(self.pass_flags.values())

    def as_record(self) -> dict:
        rec = {name: getattr(self, name) for name in AGGREGATE_HEADER if name != "pass"}
        rec["pass"] = "" if not self.pass_flags else self.passed
        return rec


@dataclass
class ExperimentResult:
    rows: list  # per-run records
    aggregates: list
    pathwise: PathwiseReport
    collection: tasks.TaskCollection

    @property
    def passed(self) -> bool:
        return all(a.passed for a in self.aggregates)


def build_generator(gen: dict) -> tasks.TaskCollection:
    kind = gen.get("kind", "random")
    seed = int(gen.get("seed", 0))
    if kind == "random":
        return tasks.gen_random_realizable(
            seed, int(gen["T"]), int(gen["d"]), gen.get("rank", 1), gen.get("rows"), float(gen.get("scale", 1.0))
        )
    if kind == "clone":
        return tasks.gen_two_task_clone(seed, int(gen["T"]), int(gen.get("d", 2)), float(gen["angle_eps"]))
    if kind == "file":
        return tasks.load(gen["path"])
    raise ConfigError(f"unknown generator kind {kind!r}")


def _bound_for(tag: str, stats: tasks.TaskStats, k: int):
    try:
        return bounds.report_for(tag, stats, k)
    except bounds.BoundRangeError:
        return None


def _simulate_chunk(args):
    c, policy, learner_tag, seeds, k_grid = args
    if learner_tag == learners.Learner.KACZMARZ.value:
        try:
            s = simulate_regression(c, policy, seeds, k_grid)
        except Exception as exc:  # batched: the whole chunk fails together
            raise ExperimentError(seeds[0], None, exc) from exc
        return [
            (k, seed, s.loss[r, j], s.forgetting[r, j], s.regret[r, j], s.dist_sq[r, j])
            for r, seed in enumerate(seeds)
            for j, k in enumerate(k_grid)
        ], s.pathwise
    out = []
    for seed in seeds:
        o = orderings.make(policy, c.T, k_grid[-1], seed)
        try:
            traj = learners.run(c, o, learner_tag)
        except Exception as exc:
            raise ExperimentError(seed, getattr(exc, "step", None), exc, out) from exc
        ms = metrics.series(c, traj, k_grid)
        out.extend(zip(ms.k_values, [seed] * len(k_grid), ms.loss, ms.forgetting, ms.regret, ms.dist_sq))
    return out, PathwiseReport()


def run_experiment(cfg: ExperimentConfig, write: bool = True) -> ExperimentResult:
    c = build_generator(cfg.generator)
    if cfg.normalize:
        c = tasks.normalized(c)
    if cfg.ordering_policy == Policy.WITHOUT_REPLACEMENT.value and cfg.k_grid[-1] > c.T:
        raise ConfigError(f"without-replacement k_grid exceeds T={c.T}")
    stats = c.stats
    seeds = [cfg.base_seed + r for r in range(cfg.num_seeds)]
    # fixed blocks keep every seed's arithmetic independent of the worker count
    chunks = [seeds[i : i + SEED_BLOCK] for i in range(0, len(seeds), SEED_BLOCK)]
    jobs = [(c, cfg.ordering_policy, cfg.learner_tag, ch, cfg.k_grid) for ch in chunks]
    nworkers = max(1, min(cfg.workers, len(chunks)))
    try:
        if nworkers > 1:
            with ProcessPoolExecutor(max_workers=nworkers) as ex:
                results = list(ex.map(_simulate_chunk, jobs))
        else:
            results = [_simulate_chunk(j) for j in jobs]
    except ExperimentError as err:
        if write and cfg.output_path:
            _flush_failure(cfg, err)
        raise
    raw, report = [], PathwiseReport()
    for rows, rep in results:
        raw.extend(rows)
        report = report.merge(rep)
    raw.sort(key=lambda r: (r[0], r[1]))

    tags = cfg.bounds or [""]
    per_run, aggregates = [], []
    by_k: dict[int, list] = {}
    for k, seed, loss, forg, reg, dist in raw:
        by_k.setdefault(k, []).append((loss, forg, reg, dist))
        for tag in tags:
            rep = _bound_for(tag, stats, k) if tag else None
            per_run.append({
                "k": k, "seed": seed, "loss": float(loss), "forgetting": float(forg),
                "regret": float(reg), "dist_sq": float(dist),
                "bound_loss": rep.loss_bound if rep else None,
                "bound_forgetting": rep.forgetting_bound if rep else None,
                "theorem_tag": tag,
                "pass": "" if rep is None else bool(loss <= rep.loss_bound and forg <= rep.forgetting_bound),
            })
    for k in cfg.k_grid:
        arr = np.array(by_k[k])
        ml, sl = mean_se(arr[:, 0])
        mf, sf = mean_se(arr[:, 1])
        mr, sr = mean_se(arr[:, 2])
        md, sd = mean_se(arr[:, 3])
        for tag in tags:
            rep = _bound_for(tag, stats, k) if tag else None
            flags = {}
            if rep is not None:
                flags = {
                    "loss": ml + SE_MARGIN * sl <= rep.loss_bound,
                    "forgetting": mf + SE_MARGIN * sf <= rep.forgetting_bound,
                }
            aggregates.append(AggregateRow(
                k, tag, len(arr), ml, sl, mf, sf, mr, sr, md, sd,
                rep.loss_bound if rep else None, rep.forgetting_bound if rep else None, flags,
            ))
    result = ExperimentResult(per_run, aggregates, report, c)
    if write and cfg.output_path:
        out = Path(cfg.output_path)
        emit(per_run, cfg.format, out)
        emit([a.as_record() for a in aggregates], cfg.format, _aggregate_path(out), header=AGGREGATE_HEADER)
        _write_manifest(cfg, out)
    return result


def _flush_failure(cfg: ExperimentConfig, err: ExperimentError) -> None:
    out = Path(cfg.output_path)
    rows = [
        {"k": k, "seed": seed, "loss": loss, "forgetting": forg, "regret": reg, "dist_sq": dist}
        for k, seed, loss, forg, reg, dist in sorted(err.partial, key=lambda r: (r[0], r[1]))
    ]
    emit(rows, cfg.format, out)
    marker = {"status": "failed", "seed": err.seed, "k": err.k, "error": f"{type(err.cause).__name__}: {err.cause}"}
    out.with_name(out.stem + ".FAILED.json").write_text(json.dumps(marker, indent=2, sort_keys=True))


def _aggregate_path(out: Path) -> Path:
    return out.with_name(out.stem + ".aggregate" + out.suffix)


def _write_manifest(cfg: ExperimentConfig, out: Path) -> None:
    manifest = {
        "config": cfg.to_dict(),
        "seed_rule": "run r uses ordering seed base_seed + r (numpy PCG64 default_rng)",
        "index_base": 0,
    }
    out.with_name(out.stem + ".manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))


def _fmt(v) -> str:
    if v is None or v == "":
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    return str(v)


def format_rows(rows, fmt: str, header=PER_RUN_HEADER) -> str:
    if fmt == "csv":
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(header)
        for r in rows:
            wr.writerow([_fmt(r.get(h)) for h in header])
        return buf.getvalue()
    if fmt == "json":
        recs = [{h: _json_value(r.get(h)) for h in header} for r in rows]
        return json.dumps(recs, indent=1) + "\n"
    raise ConfigError(f"unknown format {fmt!r}")


def _json_value(v):
    if isinstance(v, (np.floating,)):
        return float(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, float) and not math.isfinite(v):
        return None
    return v


def emit(rows, fmt: str, path, header=PER_RUN_HEADER) -> None:
    Path(path).write_text(format_rows(rows, fmt, header))


def parse_csv(text: str) -> list[dict]:
    """Inverse of the CSV writer: numbers come back as int/float, flags as bool."""
    out = []
    for rec in csv.DictReader(io.StringIO(text)):
        row = {}
        for key, val in rec.items():
            if val == "":
                row[key] = None
            elif val in ("true", "false"):
                row[key] = val == "true"
            else:
                try:
                    row[key] = int(val)
                except ValueError:
                    try:
                        row[key] = float(val)
                    except ValueError:
                        row[key] = val
        out.append(row)
    return out


# --- other experiment families ----------------------------------------------


@dataclass
class QmapConfig:
    num_collections: int = 10
    T: int = 4
    d: int = 6
    rank: list = field(default_factory=lambda: [1, 3])
    rows: list | None = None
    base_seed: int = 0
    n_values: list = field(default_factory=lambda: [1, 3, 10, 30])
    moment_k: int = 0
    moment_seeds: int = 2000


def run_qmap_checks(cfg: QmapConfig) -> list[dict]:
    """Every Q-map check on ``num_collections`` generated instances."""
    report = []
    for j in range(cfg.num_collections):
        seed = cfg.base_seed + j
        c = tasks.gen_random_realizable(seed, cfg.T, cfg.d, cfg.rank, cfg.rows)
        for res in qmap.run_checks(c, cfg.n_values, seed=seed):
            report.append({"collection_seed": seed, **res.as_dict()})
        if cfg.moment_k > 0:
            res = qmap.second_moment_recursion_check(c, cfg.moment_k, range(cfg.moment_seeds))
            report.append({"collection_seed": seed, **res.as_dict()})
        a_ok = True
        for s in range(20):
            a = qmap.trace_sequence(c, orderings.sample_with_replacement(s, c.T, 12).indices)
            a_ok &= bool(np.all(np.diff(a) <= 1e-10))
        report.append({"collection_seed": seed, "name": "trace_sequence_monotone", "value": float(a_ok), "bound": 1.0, "passed": a_ok})
    return report


def aggregate_against(values: np.ndarray, bound: float) -> dict:
    m, s = mean_se(values)
    return {"mean": m, "se": s, "bound": bound, "pass": bool(m + SE_MARGIN * s <= bound)}


def pocs_experiment(family: pocs.ConvexFamily, policy, seeds, k_grid) -> list[dict]:
    """Mean POCS residual at each ``k`` against the universal POCS bound."""
    policy = orderings.parse_policy(policy)
    T = len(family.sets)
    vals = np.empty((len(seeds), len(k_grid)))
    for r, seed in enumerate(seeds):
        o = orderings.make(policy, T, max(k_grid), seed)
        traj = pocs.pocs_run(family.sets, family.w0, o)
        for j, k in enumerate(k_grid):
            vals[r, j] = pocs.pocs_residual(family.sets, traj.iterates[k])
    return [
        {"k": k, "policy": policy.value, **aggregate_against(vals[:, j], bounds.bound_pocs(k, family.d0_sq))}
        for j, k in enumerate(k_grid)
    ]


def classification_experiment(inst: pocs.SeparableInstance, policy, seeds, k_grid) -> list[dict]:
    """Mean max-margin projection forgetting against the classification bound."""
    policy = orderings.parse_policy(policy)
    sets = pocs.max_margin_sets(inst.tasks)
    T = len(sets)
    d = inst.w_star.shape[0]
    vals = np.empty((len(seeds), len(k_grid)))
    for r, seed in enumerate(seeds):
        o = orderings.make(policy, T, max(k_grid), seed)
        traj = pocs.pocs_run(sets, np.zeros(d), o)
        for j, k in enumerate(k_grid):
            vals[r, j] = pocs.pocs_forgetting(sets, traj, k)
    wn = float(np.linalg.norm(inst.w_star))
    return [
        {"k": k, "policy": policy.value, **aggregate_against(vals[:, j], bounds.bound_classification(k, wn, inst.R))}
        for j, k in enumerate(k_grid)
    ]


def sgd_experiment(problem: sgd.LsqProblem, eta_scale: float, policy, seeds, T_grid) -> list[dict]:
    """Last-iterate (wr) or prefix-average (wor) loss against the matching SGD bound.

    ``eta = eta_scale / beta``; iterations start from the origin.
    """
    policy = orderings.parse_policy(policy)
    beta = problem.beta
    eta = eta_scale / beta
    w0 = np.zeros(problem.dim)
    D = float(np.linalg.norm(problem.w_star))
    out = []
    for T in T_grid:
        if policy is Policy.WITH_REPLACEMENT:
            seqs = orderings.sample_batch(policy, seeds, problem.n, T + 1)
            W = sgd.run_batch(problem, w0, eta, seqs, T)
            vals = sgd.batch_component_losses(problem, W).mean(axis=1)
            bound = bounds.bound_sgd_last(eta, beta, D, T)
        else:
            # unit step: average over pi_0..pi_{T-1}; general step: over pi_0..pi_T
            unit = math.isclose(eta_scale, 1.0)
            seqs = orderings.sample_batch(policy, seeds, problem.n, T if unit else T + 1)
            W = sgd.run_batch(problem, w0, eta, seqs, T)
            losses = sgd.batch_component_losses(problem, W)
            vals = np.take_along_axis(losses, seqs, axis=1).mean(axis=1)
            bound = (
                bounds.bound_sgd_wor_unit_step(beta, D, T)
                if unit
                else bounds.bound_sgd_wor(eta, beta, D, T, problem.n)
            )
        out.append({"T": T, "eta": eta, "policy": policy.value, **aggregate_against(vals, bound)})
    return out
