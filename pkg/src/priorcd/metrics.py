"""Directed-graph evaluation: SHD, NHD, NHD ratio, FDR, FPR, TPR.

Counts are taken over ordered off-diagonal cells. A reversed edge is one FP
plus one FN cell-wise, but SHD counts it once.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from .graph import DirectedGraph

__all__ = [
    "ConfusionCounts",
    "MetricsReport",
    "METRIC_DIRECTIONS",
    "confusion",
    "shd",
    "hamming",
    "nhd",
    "nhd_ratio",
    "rates",
    "evaluate",
    "format_table",
]

# -1: lower is better, +1: higher is better, 0: neutral
METRIC_DIRECTIONS = {
    "nhd": -1, "nhd_ratio": -1, "shd": -1, "edge_count_pred": 0,
    "fdr": -1, "fpr": -1, "tpr": +1,
}
_COLUMNS = (("nhd", "NHD"), ("nhd_ratio", "NHD Ratio"), ("shd", "SHD"),
            ("edge_count_pred", "No. Edge"), ("fdr", "FDR"), ("fpr", "FPR"), ("tpr", "TPR"))


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int
    reversed: int


@dataclass(frozen=True)
class MetricsReport:
    shd: int
    nhd: float
    nhd_ratio: float
    fdr: Optional[float]
    fpr: Optional[float]
    tpr: Optional[float]
    edge_count_pred: int
    edge_count_true: int

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, obj: dict) -> MetricsReport:
        return cls(**{k: obj[k] for k in cls.__dataclass_fields__})

    def row(self, label: str = "") -> str:
        return format_table([(label, self.to_dict())])


def _pair(pred: DirectedGraph, truth: DirectedGraph):
    if pred.names != truth.names:
        raise ValueError(f"graphs are over different variables: {pred.names} vs {truth.names}")
    return np.asarray(pred.adj, dtype=bool), np.asarray(truth.adj, dtype=bool)


def confusion(pred: DirectedGraph, truth: DirectedGraph) -> ConfusionCounts:
    p, t = _pair(pred, truth)
    off = ~np.eye(p.shape[0], dtype=bool)
    tp = int(np.sum(p & t & off))
    fp = int(np.sum(p & ~t & off))
    fn = int(np.sum(~p & t & off))
    tn = int(np.sum(~p & ~t & off))
    # truth i->j only, pred j->i only
    rev = int(np.sum(t & ~t.T & p.T & ~p))
    return ConfusionCounts(tp, fp, tn, fn, rev)


def shd(pred: DirectedGraph, truth: DirectedGraph) -> int:
    c = confusion(pred, truth)
    return (c.fn - c.reversed) + (c.fp - c.reversed) + c.reversed


def hamming(pred: DirectedGraph, truth: DirectedGraph) -> int:
    p, t = _pair(pred, truth)
    return int(np.sum(p != t))


def nhd(pred: DirectedGraph, truth: DirectedGraph) -> float:
    return hamming(pred, truth) / pred.d ** 2


def nhd_ratio(pred: DirectedGraph, truth: DirectedGraph) -> float:
    """NHD over the largest NHD reachable with the same two edge counts.

    An empty prediction uses denominator 1, so its ratio equals its NHD.
    """
    value = nhd(pred, truth)
    e_pred, e_true = pred.n_edges, truth.n_edges
    if e_pred == 0:
        return value
    cells = pred.d * (pred.d - 1)
    worst = min(e_pred + e_true, 2 * cells - e_pred - e_true) / pred.d ** 2
    return value / worst if worst > 0 else 0.0


def _ratio(num, den):
    return num / den if den else None


def rates(counts: ConfusionCounts) -> tuple[Optional[float], Optional[float], Optional[float]]:
    """(FDR, FPR, TPR); ``None`` where the denominator is zero."""
    c = counts
    return _ratio(c.fp, c.fp + c.tp), _ratio(c.fp, c.fp + c.tn), _ratio(c.tp, c.tp + c.fn)


def evaluate(pred: DirectedGraph, truth: DirectedGraph) -> MetricsReport:
    c = confusion(pred, truth)
    fdr, fpr, tpr = rates(c)
    return MetricsReport(
        shd=shd(pred, truth),
        nhd=nhd(pred, truth),
        nhd_ratio=nhd_ratio(pred, truth),
        fdr=fdr, fpr=fpr, tpr=tpr,
        edge_count_pred=pred.n_edges,
        edge_count_true=truth.n_edges,
    )


def _cell(value) -> str:
    if value is None:
        return "-"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return f"{value:.2f}"


def format_table(rows) -> str:
    """Plain-text table in the column order NHD, NHD Ratio, SHD, No. Edge, FDR, FPR, TPR.

    ``rows`` is a sequence of ``(label, metrics_dict)``.
    """
    header = ["Method"] + [title for _, title in _COLUMNS]
    body = [[label] + [_cell(m.get(key)) for key, _ in _COLUMNS] for label, m in rows]
    widths = [max(len(r[i]) for r in [header] + body) for i in range(len(header))]
    fmt = lambda r: "  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip()  # noqa: E731
    return "\n".join([fmt(header)] + [fmt(r) for r in body])
