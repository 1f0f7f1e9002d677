"""Physical-commonsense benchmark graphs and linear-SEM sampling.

All randomness goes through ``numpy.random.Generator(PCG64(seed))`` so a
given seed yields bitwise-identical output on every platform numpy supports.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .graph import DirectedGraph, WeightMatrix, is_acyclic, topological_order

__all__ = [
    "PHYSICS_NAMES",
    "PHYSICS_EDGES",
    "PHYSICS_LABELS",
    "SemSpec",
    "Dataset",
    "make_rng",
    "build_physics_graph",
    "subgraph_reduce",
    "default_weights",
    "sample_linear_sem",
    "build_motivating_scenario",
    "physics_dataset",
]

PHYSICS_NAMES = ("TSI", "RNFL", "Wgt", "SAT", "ER", "WS", "MC")
PHYSICS_EDGES = (
    ("TSI", "SAT"), ("TSI", "ER"), ("TSI", "WS"),
    ("SAT", "ER"),
    ("WS", "SAT"), ("WS", "ER"),
    ("ER", "RNFL"), ("ER", "MC"),
    ("RNFL", "MC"),
    ("MC", "Wgt"),
)
PHYSICS_LABELS = {
    "TSI": "Total Solar Irradiance",
    "RNFL": "Rainfall",
    "Wgt": "Weight of object",
    "SAT": "Surface Air Temperature",
    "ER": "Evaporation Rate",
    "WS": "Wind Speed",
    "MC": "Moisture Content of object",
    "AP": "Apollon",
}

# nodes dropped, in order, to shrink the 7-node graph
_REDUCTIONS = {7: (), 5: ("WS", "Wgt"), 3: ("WS", "Wgt", "RNFL", "TSI")}


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(int(seed)))


@dataclass(frozen=True, eq=False)
class Dataset:
    names: tuple[str, ...]
    x: np.ndarray = field(repr=False)

    def __post_init__(self):
        x = np.array(self.x, dtype=float)
        if x.ndim != 2:
            raise ValueError(f"data must be 2-D, got shape {x.shape}")
        names = tuple(str(n) for n in self.names)
        if x.shape[1] != len(names):
            raise ValueError(f"{x.shape[1]} columns but {len(names)} names")
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate column names in {names}")
        if not np.all(np.isfinite(x)):
            raise ValueError("data has non-finite entries")
        x.flags.writeable = False
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "x", x)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def d(self) -> int:
        return self.x.shape[1]

    def column(self, name: str) -> np.ndarray:
        return self.x[:, self.names.index(name)]

    def standardized(self) -> Dataset:
        """Zero-mean, unit-variance columns (population variance)."""
        centered = self.x - self.x.mean(axis=0)
        scale = centered.std(axis=0)
        scale[scale == 0] = 1.0
        return Dataset(self.names, centered / scale)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(self.names)
            # repr gives the shortest round-tripping float text
            writer.writerows([repr(float(v)) for v in row] for row in self.x)


@dataclass(frozen=True, eq=False)
class SemSpec:
    """A linear SEM ``X_j = sum_i w[i, j] X_i + eps_j`` over an acyclic graph."""

    graph: DirectedGraph
    weights: np.ndarray = field(repr=False)
    noise_variance: np.ndarray
    sample_count: int
    seed: int = 0

    def __post_init__(self):
        w = np.asarray(getattr(self.weights, "w", self.weights), dtype=float)
        d = self.graph.d
        if w.shape != (d, d):
            raise ValueError(f"weights shape {w.shape} does not match graph of size {d}")
        if not np.array_equal(w != 0, self.graph.adj != 0):
            raise ValueError("weights must be nonzero exactly on the graph's edges")
        if not is_acyclic(self.graph):
            raise ValueError("SEM graph must be acyclic")
        var = np.broadcast_to(np.asarray(self.noise_variance, dtype=float), (d,)).copy()
        # zero variance is allowed: it makes the variable a deterministic function of its parents
        if np.any(var < 0) or not np.all(np.isfinite(var)):
            raise ValueError("noise variances must be finite and nonnegative")
        if int(self.sample_count) <= 0:
            raise ValueError("sample_count must be positive")
        if int(self.seed) < 0:
            raise ValueError("seed must be unsigned")
        w.flags.writeable = False
        var.flags.writeable = False
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "noise_variance", var)
        object.__setattr__(self, "sample_count", int(self.sample_count))
        object.__setattr__(self, "seed", int(self.seed))

    def to_dict(self) -> dict:
        return {
            "graph": self.graph.to_dict(),
            "weights": self.weights.tolist(),
            "noise_variance": self.noise_variance.tolist(),
            "sample_count": self.sample_count,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> SemSpec:
        return cls(
            graph=DirectedGraph.from_dict(obj["graph"]),
            weights=np.asarray(obj["weights"], dtype=float),
            noise_variance=np.asarray(obj["noise_variance"], dtype=float),
            sample_count=obj["sample_count"],
            seed=obj.get("seed", 0),
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")


def subgraph_reduce(g: DirectedGraph, node: str) -> DirectedGraph:
    """Drop ``node``, wiring each of its parents to each of its children."""
    k = g.index(node)
    adj = np.array(g.adj)
    for p in np.flatnonzero(adj[:, k]):
        for c in np.flatnonzero(adj[k]):
            adj[p, c] = 1
    keep = [i for i in range(g.d) if i != k]
    return DirectedGraph(tuple(g.names[i] for i in keep), adj[np.ix_(keep, keep)])


def build_physics_graph(size: int) -> DirectedGraph:
    if size not in _REDUCTIONS:
        raise ValueError(f"physics graph size must be one of 3, 5, 7; got {size}")
    g = DirectedGraph.from_edges(PHYSICS_NAMES, PHYSICS_EDGES)
    for node in _REDUCTIONS[size]:
        g = subgraph_reduce(g, node)
    return g


def default_weights(g: DirectedGraph, seed: int, positive: bool = False) -> WeightMatrix:
    """Edge coefficients uniform on [-2, -0.5] U [0.5, 2], edges in row-major order.

    ``positive=True`` restricts coefficients to [0.5, 2]; the sign draws are
    still consumed so both variants share magnitudes for a given seed.
    """
    rng = make_rng(seed)
    w = np.zeros((g.d, g.d))
    rows, cols = np.nonzero(g.adj)
    if len(rows):
        magnitude = rng.uniform(0.5, 2.0, size=len(rows))
        sign = np.where(rng.random(len(rows)) < 0.5, -1.0, 1.0)
        w[rows, cols] = magnitude if positive else sign * magnitude
    return WeightMatrix(w, g.names)


def sample_linear_sem(spec: SemSpec) -> Dataset:
    g = spec.graph
    order = topological_order(g)
    if order is None:
        raise ValueError("SEM graph has a cycle; no topological order")
    rng = make_rng(spec.seed)
    n, d = spec.sample_count, g.d
    noise = rng.standard_normal((n, d)) * np.sqrt(spec.noise_variance)
    x = np.zeros((n, d))
    w = spec.weights
    for j in order:
        parents = np.flatnonzero(w[:, j])
        col = x[:, parents] @ w[parents, j] if len(parents) else np.zeros(n)
        if spec.noise_variance[j] > 0:
            col = col + noise[:, j]
        x[:, j] = col
    return Dataset(g.names, x)


def physics_dataset(size: int, seed: int, n: int = 5000, noise_variance: float = 0.5,
                    positive: bool = True) -> tuple[DirectedGraph, SemSpec, Dataset]:
    """Benchmark graph of the given size with random coefficients and sampled data.

    Coefficients are positive by default. A prior-initialized ``W`` starts
    every prior edge positive and the similarity loss walls off ``w = 0``,
    so negative coefficients on prior edges are unreachable; pass
    ``positive=False`` for mixed signs. Weights and noise use independent
    streams derived from ``seed``.
    """
    g = build_physics_graph(size)
    weight_seed, sample_seed = np.random.SeedSequence(int(seed)).generate_state(2)
    w = default_weights(g, int(weight_seed), positive=positive)
    spec = SemSpec(g, w.w, np.full(g.d, float(noise_variance)), n, int(sample_seed))
    return g, spec, sample_linear_sem(spec)


def build_motivating_scenario(seed: int, n: int = 5000, quiet_variance: float = 0.1,
                              noisy_variance: float = 1.0, root_variance: float = 1.0,
                              coefficients: Sequence[float] = (1.0, 1.0)
                              ) -> tuple[DirectedGraph, Dataset]:
    """Chain AP -> TSI -> ER with the TSI -> ER link drowned in extra noise.

    ``quiet_variance`` is the noise on TSI and ``noisy_variance`` the noise
    on ER; the former must be strictly smaller.
    """
    if not quiet_variance < noisy_variance:
        raise ValueError("the AP -> TSI noise must be smaller than the TSI -> ER noise")
    g = DirectedGraph.from_edges(("AP", "TSI", "ER"), [("AP", "TSI"), ("TSI", "ER")])
    w = np.zeros((3, 3))
    w[0, 1], w[1, 2] = coefficients
    spec = SemSpec(g, w, np.array([root_variance, quiet_variance, noisy_variance]), n, seed)
    return g, sample_linear_sem(spec)
