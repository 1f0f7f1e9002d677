"""Experiment orchestration: data, prior, solve, threshold, evaluate, aggregate.

An experiment is a JSON-able :class:`ExperimentConfig`. Every (seed, repeat)
pair is an independent job; results are folded in job order, so the report
is byte-identical however many workers run it.
"""
from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .graph import DirectedGraph, threshold
from .metrics import METRIC_DIRECTIONS, MetricsReport, evaluate, format_table
from .prior import (
    HttpPromptSource, MeanPrior, PriorMatrix, RecordedResponseSource, acquire_prior,
    aggregate_mean, certainty, load_prior, random_prior,
)
from .solver import PRESETS, NonConvergenceWarning, SolverConfig, solve, solve_result_dict
from .synthetic import (
    PHYSICS_LABELS, Dataset, SemSpec, build_motivating_scenario, physics_dataset,
    sample_linear_sem,
)

log = logging.getLogger(__name__)

__all__ = [
    "DataError",
    "ExperimentConfig",
    "REPORT_SCHEMA",
    "SACHS_LABELS",
    "DATASET_PRESETS",
    "load_csv_dataset",
    "run_experiment",
    "aggregate",
    "compare",
    "format_comparison",
    "dumps_report",
]

SACHS_LABELS = {
    "raf": "Raf kinase",
    "mek": "Mitogen-activated protein kinase kinase (MEK)",
    "plc": "Phospholipase C gamma",
    "pip2": "Phosphatidylinositol 4,5-bisphosphate (PIP2)",
    "pip3": "Phosphatidylinositol 3,4,5-trisphosphate (PIP3)",
    "erk": "Extracellular signal-regulated kinase (ERK)",
    "akt": "Protein kinase B (Akt)",
    "pka": "Protein kinase A",
    "pkc": "Protein kinase C",
    "p38": "p38 mitogen-activated protein kinase",
    "jnk": "c-Jun N-terminal kinase",
}

# solver presets per real dataset; Sachs columns are abbreviations and get
# expanded to full names before prompting
DATASET_PRESETS = {
    "arctic": {"with_prior": "arctic-notears", "without_prior": "arctic-vanilla", "labels": {}},
    "sachs": {"with_prior": "sachs-notears", "without_prior": "sachs-vanilla",
              "labels": SACHS_LABELS},
    "physics": {"with_prior": "physics-notears", "without_prior": "vanilla",
                "labels": PHYSICS_LABELS},
}

_METRICS = tuple(METRIC_DIRECTIONS) + ("edge_count_true",)


class DataError(ValueError):
    """Malformed input data or configuration file contents."""


@dataclass
class ExperimentConfig:
    """One experiment.

    ``dataset`` kinds: ``physics`` (size, n, noise_variance, positive),
    ``motivating`` (n), ``sem`` (path to SemSpec JSON), ``csv`` (path).
    ``truth`` kinds: ``builtin`` (synthetic datasets only) or ``json`` (path).
    ``prior`` kinds: ``none``, ``truth``, ``json`` (path), ``recorded`` (path:
    a response directory, or a directory of run subdirectories), ``http``
    (url, timeout, retries, auth_env) and ``random`` (edge_count, repeat).
    """

    dataset: dict
    truth: Optional[dict] = None
    prior: dict = field(default_factory=lambda: {"kind": "none"})
    preset: Optional[str] = "vanilla"
    solver: dict = field(default_factory=dict)
    standardize: bool = False
    seeds: list = field(default_factory=lambda: [0])
    out: Optional[str] = None
    workers: int = 1
    on_invalid: str = "treat-as-d"
    certainty_epsilon: float = 0.5
    labels: dict = field(default_factory=dict)

    def __post_init__(self):
        kinds = {"physics", "motivating", "sem", "csv"}
        if self.dataset.get("kind") not in kinds:
            raise DataError(f"dataset kind must be one of {sorted(kinds)}")
        if self.dataset["kind"] in ("sem", "csv") and "path" not in self.dataset:
            raise DataError(f"{self.dataset['kind']} dataset needs a path")
        pk = self.prior.get("kind", "none")
        if pk not in ("none", "truth", "json", "recorded", "http", "random"):
            raise DataError(f"unknown prior kind {pk!r}")
        if pk == "random" and not isinstance(self.prior.get("edge_count"), int):
            raise DataError("a random prior needs an explicit integer edge_count")
        if self.preset is not None and self.preset not in PRESETS:
            raise DataError(f"unknown preset {self.preset!r}")
        if not self.seeds:
            raise DataError("at least one seed is required")
        self.seeds = [int(s) for s in self.seeds]

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, obj: dict) -> ExperimentConfig:
        unknown = set(obj) - set(cls.__dataclass_fields__)
        if unknown:
            raise DataError(f"unknown config keys {sorted(unknown)}")
        return cls(**obj)

    @classmethod
    def load(cls, path) -> ExperimentConfig:
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}: invalid JSON ({exc})") from exc

    def solver_config(self) -> SolverConfig:
        base = PRESETS[self.preset] if self.preset else SolverConfig()
        return replace(base, **self.solver)

    def digest(self) -> str:
        # where and how fast a run executes does not change its results
        content = {k: v for k, v in self.to_dict().items() if k not in ("out", "workers")}
        blob = json.dumps(content, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def load_csv_dataset(path, standardize: bool = False) -> Dataset:
    """Header row of names, one observation per row."""
    path = Path(path)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataError(f"{path}: empty file, expected a header row")
    names = [n.strip() for n in rows[0]]
    if any(not n for n in names):
        raise DataError(f"{path}: empty column name in header")
    dupes = sorted({n for n in names if names.count(n) > 1})
    if dupes:
        raise DataError(f"{path}: duplicate column names {dupes}")
    values = []
    for r, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(names):
            raise DataError(f"{path}: row {r} has {len(row)} fields, expected {len(names)}")
        parsed = []
        for c, cell in enumerate(row):
            try:
                v = float(cell)
            except ValueError:
                raise DataError(
                    f"{path}: row {r}, column {names[c]!r}: non-numeric value {cell!r}") from None
            if not math.isfinite(v):
                raise DataError(f"{path}: row {r}, column {names[c]!r}: non-finite value {cell!r}")
            parsed.append(v)
        values.append(parsed)
    if not values:
        raise DataError(f"{path}: no data rows")
    ds = Dataset(tuple(names), np.array(values))
    return ds.standardized() if standardize else ds


def _resolve(base, p):
    p = Path(p)
    return p if p.is_absolute() or base is None else Path(base) / p


def _build_data(cfg: ExperimentConfig, seed: int):
    spec = cfg.dataset
    kind = spec["kind"]
    if kind == "physics":
        truth, _, data = physics_dataset(
            spec.get("size", 7), seed, n=spec.get("n", 5000),
            noise_variance=spec.get("noise_variance", 0.5), positive=spec.get("positive", True))
    elif kind == "motivating":
        truth, data = build_motivating_scenario(seed, n=spec.get("n", 5000))
    elif kind == "sem":
        sem = SemSpec.from_dict(json.loads(Path(spec["path"]).read_text()))
        sem = replace(sem, seed=seed) if spec.get("reseed", True) else sem
        truth, data = sem.graph, sample_linear_sem(sem)
    else:
        truth, data = None, load_csv_dataset(spec["path"])
    if cfg.truth is not None and cfg.truth.get("kind") == "json":
        truth = DirectedGraph.load(cfg.truth["path"])
    if truth is None:
        raise DataError("no ground truth: csv datasets need truth={'kind': 'json', 'path': ...}")
    if truth.names != data.names:
        raise DataError(f"ground-truth names {truth.names} differ from data columns {data.names}")
    if cfg.standardize:
        data = data.standardized()
    return truth, data


def _shared_prior(cfg: ExperimentConfig, names):
    """Priors that do not depend on the seed: (prior, certainty or None)."""
    p = cfg.prior
    kind = p.get("kind", "none")
    labels = cfg.labels or {}
    if kind == "json":
        prior = load_prior(p["path"])
        return prior, None
    if kind == "recorded":
        root = Path(p["path"])
        runs = sorted(d for d in root.iterdir() if d.is_dir())
        dirs = runs or [root]
        priors = [acquire_prior(RecordedResponseSource(d), names, labels, cfg.on_invalid)
                  for d in dirs]
        if len(priors) == 1:
            return priors[0], None
        return aggregate_mean(priors), certainty(priors, cfg.certainty_epsilon)
    if kind == "http":
        source = HttpPromptSource(p["url"], timeout=p.get("timeout", 60.0),
                                  retries=p.get("retries", 2),
                                  auth_env=p.get("auth_env", "PRIORCD_HTTP_AUTH"))
        return acquire_prior(source, names, labels, cfg.on_invalid,
                             workers=p.get("workers", 4)), None
    return None, None


def _random_seed(seed: int, repeat: int) -> int:
    return int(np.random.SeedSequence([seed, repeat]).generate_state(1)[0])


def _jobs(cfg: ExperimentConfig):
    repeats = cfg.prior.get("repeat", 1) if cfg.prior.get("kind") == "random" else 1
    return [(s, r) for s in cfg.seeds for r in range(repeats)]


def _run_job(cfg_dict: dict, seed: int, repeat: int, shared) -> dict:
    cfg = ExperimentConfig.from_dict(cfg_dict)
    scfg = cfg.solver_config()
    truth, data = _build_data(cfg, seed)
    kind = cfg.prior.get("kind", "none")
    prior, cert = shared
    if kind == "truth":
        prior = PriorMatrix(truth.names, truth.adj)
    elif kind == "random":
        prior = random_prior(data.d, cfg.prior["edge_count"], data.names,
                             _random_seed(seed, repeat))
    if prior is not None and prior.names != data.names:
        raise DataError(f"prior names {prior.names} differ from data columns {data.names}")

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NonConvergenceWarning)
        w, state = solve(data, prior, scfg, cert)
    pred = threshold(w, scfg.threshold_tau)
    metrics = evaluate(pred, truth)
    run_id = f"seed{seed:04d}" + (f"_rep{repeat:02d}" if kind == "random" else "")
    record = {
        "run_id": run_id, "seed": seed, "repeat": repeat,
        "converged": state.converged, "h_final": state.h_final,
        "outer_iterations": state.outer_iteration,
        "prior_edges": None if prior is None else float(np.sum(prior.values)),
        "metrics": metrics.to_dict(),
    }
    if cfg.out:
        d = Path(cfg.out) / run_id
        d.mkdir(parents=True, exist_ok=True)
        _dump(d / "config.json", {"experiment": cfg.to_dict(), "solver": scfg.to_dict(),
                                  "seed": seed, "repeat": repeat})
        _dump(d / "prior.json", None if prior is None else prior.to_dict())
        _dump(d / "w.json", solve_result_dict(w, state, scfg))
        _dump(d / "graph.json", pred.to_dict())
        _dump(d / "metrics.json", metrics.to_dict())
        lines = [f"{run_id}: converged={state.converged} h={state.h_final:.3e} "
                 f"outer={state.outer_iteration}"]
        lines += [f"  outer {e['outer']:3d} objective={e['objective']:.10g} h={e['h']:.3e} "
                  f"rho={e['rho']:.1e} inner={e['inner_iterations']}" for e in state.history]
        lines.append(format_table([(run_id, metrics.to_dict())]))
        (d / "log.txt").write_text("\n".join(lines) + "\n")
    return record


def _dump(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def aggregate(runs: list[dict]) -> dict:
    """Mean and population std per metric, over defined values only."""
    out = {}
    for key in _METRICS:
        vals = [r["metrics"][key] for r in runs if r["metrics"].get(key) is not None]
        if vals:
            out[key] = {"mean": float(np.mean(vals)), "std": float(np.std(vals)),
                        "count": len(vals)}
        else:
            out[key] = {"mean": None, "std": None, "count": 0}
    return out


def run_experiment(cfg: ExperimentConfig) -> dict:
    """Run every (seed, repeat) job and return the report as a plain dict."""
    names = _build_data(cfg, cfg.seeds[0])[1].names
    shared = _shared_prior(cfg, names)
    jobs = _jobs(cfg)
    cfg_dict = cfg.to_dict()
    if cfg.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            futures = [pool.submit(_run_job, cfg_dict, s, r, shared) for s, r in jobs]
            runs = [f.result() for f in futures]
    else:
        runs = [_run_job(cfg_dict, s, r, shared) for s, r in jobs]

    report = {
        "runs": runs,
        "aggregate": aggregate(runs),
        "provenance": {
            "config_hash": cfg.digest(),
            "seeds": list(cfg.seeds),
            "preset": cfg.preset,
            "solver": cfg.solver_config().to_dict(),
            "version": __version__,
        },
    }
    if cfg.out:
        out = Path(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(dumps_report(report))
    return report


def dumps_report(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True) + "\n"


def _metric_values(report) -> dict:
    if isinstance(report, MetricsReport):
        return report.to_dict()
    if "aggregate" in report:
        return {k: v["mean"] for k, v in report["aggregate"].items()}
    return dict(report)


def compare(report_a, report_b) -> list[dict]:
    """Signed change from ``report_a`` (baseline) to ``report_b`` per metric.

    Accepts experiment reports (aggregate means are compared), MetricsReport
    objects or plain ``{metric: value}`` mappings.
    """
    a, b = _metric_values(report_a), _metric_values(report_b)
    if set(a) != set(b):
        raise ValueError(f"metric sets differ: {sorted(set(a) ^ set(b))}")
    rows = []
    for key in sorted(a, key=lambda k: list(METRIC_DIRECTIONS).index(k)
                      if k in METRIC_DIRECTIONS else len(METRIC_DIRECTIONS)):
        va, vb = a[key], b[key]
        direction = METRIC_DIRECTIONS.get(key, 0)
        if va is None or vb is None:
            delta, verdict = None, "undefined"
        else:
            delta = vb - va
            if delta == 0:
                verdict = "unchanged"
            elif direction == 0:
                verdict = "neutral"
            else:
                verdict = "improvement" if delta * direction > 0 else "regression"
        rows.append({"metric": key, "baseline": va, "value": vb, "delta": delta,
                     "verdict": verdict})
    return rows


def format_comparison(rows: list[dict]) -> str:
    lines = []
    for r in rows:
        if r["delta"] is None:
            lines.append(f"{r['metric']:<16} {_fmt(r['baseline'])} -> {_fmt(r['value'])}")
            continue
        arrow = "" if r["delta"] == 0 else ("▲" if r["delta"] > 0 else "▼")
        lines.append(f"{r['metric']:<16} {_fmt(r['baseline'])} -> {_fmt(r['value'])} "
                     f"({arrow}{abs(r['delta']):.2f}) {r['verdict']}")
    return "\n".join(lines)


def _fmt(v):
    return "-" if v is None else f"{v:.2f}"


_NUM_OR_NULL = {"type": ["number", "null"]}
_METRICS_SCHEMA = {
    "type": "object",
    "required": list(MetricsReport.__dataclass_fields__),
    "properties": {
        "shd": {"type": "integer", "minimum": 0},
        "nhd": {"type": "number", "minimum": 0, "maximum": 1},
        "nhd_ratio": {"type": "number", "minimum": 0},
        "fdr": _NUM_OR_NULL, "fpr": _NUM_OR_NULL, "tpr": _NUM_OR_NULL,
        "edge_count_pred": {"type": "integer", "minimum": 0},
        "edge_count_true": {"type": "integer", "minimum": 0},
    },
    "additionalProperties": False,
}
REPORT_SCHEMA = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "type": "object",
    "required": ["runs", "aggregate", "provenance"],
    "properties": {
        "runs": {
            "type": "array", "minItems": 1,
            "items": {
                "type": "object",
                "required": ["run_id", "seed", "repeat", "converged", "h_final",
                             "outer_iterations", "prior_edges", "metrics"],
                "properties": {
                    "run_id": {"type": "string"},
                    "seed": {"type": "integer"},
                    "repeat": {"type": "integer", "minimum": 0},
                    "converged": {"type": "boolean"},
                    "h_final": {"type": "number", "minimum": -1e-12},
                    "outer_iterations": {"type": "integer", "minimum": 1},
                    "prior_edges": _NUM_OR_NULL,
                    "metrics": _METRICS_SCHEMA,
                },
            },
        },
        "aggregate": {
            "type": "object",
            "required": list(_METRICS),
            "additionalProperties": {
                "type": "object", "required": ["mean", "std", "count"],
                "properties": {"mean": _NUM_OR_NULL, "std": _NUM_OR_NULL,
                               "count": {"type": "integer", "minimum": 0}},
            },
        },
        "provenance": {
            "type": "object",
            "required": ["config_hash", "seeds", "preset", "solver", "version"],
            "properties": {
                "config_hash": {"type": "string", "pattern": "^[0-9a-f]{64}$"},
                "seeds": {"type": "array", "items": {"type": "integer"}},
                "preset": {"type": ["string", "null"]},
                "solver": {"type": "object"},
                "version": {"type": "string"},
            },
        },
    },
}
