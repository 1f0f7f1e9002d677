"""Adjacency representations, acyclicity machinery and thresholding."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .expm import MatrixExponentialError, expm

__all__ = [
    "DirectedGraph",
    "WeightMatrix",
    "MatrixExponentialError",
    "is_acyclic",
    "topological_order",
    "acyclicity_value",
    "acyclicity_gradient",
    "acyclicity_value_and_gradient",
    "matrix_exponential",
    "threshold",
    "default_names",
]


def default_names(d: int) -> tuple[str, ...]:
    return tuple(f"X{i}" for i in range(d))


def _check_names(names, d):
    names = tuple(str(n) for n in names)
    if len(names) != d:
        raise ValueError(f"{len(names)} names for a {d}x{d} matrix")
    if any(not n for n in names):
        raise ValueError("variable names must be nonempty")
    if len(set(names)) != len(names):
        raise ValueError(f"duplicate variable names in {names}")
    return names


def _frozen(a):
    a = np.array(a, copy=True)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class DirectedGraph:
    """Binary adjacency over named variables; ``adj[i, j] == 1`` iff i -> j."""

    names: tuple[str, ...]
    adj: np.ndarray = field(repr=False)

    def __post_init__(self):
        adj = np.asarray(self.adj)
        if adj.ndim != 2 or adj.shape[0] != adj.shape[1]:
            raise ValueError(f"adjacency must be square, got shape {adj.shape}")
        if not np.isin(adj, (0, 1)).all():
            raise ValueError("adjacency entries must be 0 or 1")
        if np.any(np.diag(adj)):
            raise ValueError("self-loops are not allowed")
        object.__setattr__(self, "names", _check_names(self.names, adj.shape[0]))
        object.__setattr__(self, "adj", _frozen(adj.astype(np.int8)))

    @classmethod
    def empty(cls, names: Sequence[str]) -> DirectedGraph:
        return cls(tuple(names), np.zeros((len(names), len(names)), dtype=np.int8))

    @classmethod
    def from_edges(cls, names: Sequence[str], edges) -> DirectedGraph:
        names = tuple(names)
        index = {n: i for i, n in enumerate(names)}
        adj = np.zeros((len(names), len(names)), dtype=np.int8)
        for a, b in edges:
            adj[index[a], index[b]] = 1
        return cls(names, adj)

    @property
    def d(self) -> int:
        return len(self.names)

    @property
    def n_edges(self) -> int:
        return int(self.adj.sum())

    def edges(self) -> list[tuple[str, str]]:
        rows, cols = np.nonzero(self.adj)
        return [(self.names[i], self.names[j]) for i, j in zip(rows, cols)]

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise KeyError(f"unknown variable {name!r}") from None

    def parents(self, name: str) -> list[str]:
        j = self.index(name)
        return [self.names[i] for i in np.flatnonzero(self.adj[:, j])]

    def children(self, name: str) -> list[str]:
        i = self.index(name)
        return [self.names[j] for j in np.flatnonzero(self.adj[i])]

    def __eq__(self, other):
        if not isinstance(other, DirectedGraph):
            return NotImplemented
        return self.names == other.names and np.array_equal(self.adj, other.adj)

    def __hash__(self):
        return hash((self.names, self.adj.tobytes()))

    def to_dict(self) -> dict:
        return {"names": list(self.names), "adj": self.adj.astype(int).tolist()}

    @classmethod
    def from_dict(cls, obj: dict) -> DirectedGraph:
        return cls(tuple(obj["names"]), np.asarray(obj["adj"], dtype=np.int8))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()) + "\n")

    @classmethod
    def load(cls, path) -> DirectedGraph:
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True, eq=False)
class WeightMatrix:
    """Real structural coefficients; ``w[i, j]`` weights the edge i -> j."""

    w: np.ndarray = field(repr=False)
    names: tuple[str, ...] = ()

    def __post_init__(self):
        w = np.asarray(self.w, dtype=float)
        if w.ndim != 2 or w.shape[0] != w.shape[1]:
            raise ValueError(f"weight matrix must be square, got shape {w.shape}")
        if not np.all(np.isfinite(w)):
            raise ValueError("weight matrix has non-finite entries")
        names = self.names or default_names(w.shape[0])
        object.__setattr__(self, "names", _check_names(names, w.shape[0]))
        object.__setattr__(self, "w", _frozen(w))

    @property
    def d(self) -> int:
        return self.w.shape[0]

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.w, dtype=dtype)

    def to_dict(self) -> dict:
        return {"names": list(self.names), "w": self.w.tolist()}

    @classmethod
    def from_dict(cls, obj: dict) -> WeightMatrix:
        return cls(np.asarray(obj["w"], dtype=float), tuple(obj.get("names", ())))


def _as_square(w) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    if w.ndim != 2 or w.shape[0] != w.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {w.shape}")
    return w


def topological_order(g: DirectedGraph) -> list[int] | None:
    """Kahn's algorithm; ``None`` when the graph has a cycle.

    Ties are broken by index so the order is deterministic.
    """
    adj = np.asarray(g.adj if isinstance(g, DirectedGraph) else g) != 0
    indegree = adj.sum(axis=0).astype(int)
    ready = [i for i in range(adj.shape[0]) if indegree[i] == 0]
    order = []
    while ready:
        i = ready.pop(0)
        order.append(i)
        for j in np.flatnonzero(adj[i]):
            indegree[j] -= 1
            if indegree[j] == 0:
                ready.append(int(j))
        ready.sort()
    return order if len(order) == adj.shape[0] else None


def is_acyclic(g: DirectedGraph) -> bool:
    """Exact cycle check by iterative depth-first search."""
    adj = np.asarray(g.adj if isinstance(g, DirectedGraph) else g) != 0
    d = adj.shape[0]
    succ = [np.flatnonzero(adj[i]).tolist() for i in range(d)]
    state = [0] * d  # 0 unvisited, 1 on the stack, 2 done
    for root in range(d):
        if state[root]:
            continue
        stack = [(root, iter(succ[root]))]
        state[root] = 1
        while stack:
            node, it = stack[-1]
            nxt = next(it, None)
            if nxt is None:
                state[node] = 2
                stack.pop()
            elif state[nxt] == 1:
                return False
            elif state[nxt] == 0:
                state[nxt] = 1
                stack.append((nxt, iter(succ[nxt])))
    return True


def matrix_exponential(m) -> np.ndarray:
    return expm(m)


def acyclicity_value(w) -> float:
    """h(W) = tr(exp(W * W)) - d, zero exactly when the support of W is a DAG."""
    w = _as_square(w)
    return float(np.trace(expm(w * w)) - w.shape[0])


def acyclicity_gradient(w) -> np.ndarray:
    """Gradient of :func:`acyclicity_value`: ``exp(W * W).T * 2W``."""
    w = _as_square(w)
    return expm(w * w).T * (2.0 * w)


def acyclicity_value_and_gradient(w) -> tuple[float, np.ndarray]:
    w = _as_square(w)
    e = expm(w * w)
    return float(np.trace(e) - w.shape[0]), e.T * (2.0 * w)


def threshold(w, tau: float, names: Sequence[str] | None = None) -> DirectedGraph:
    """Keep edge i -> j iff ``|w[i, j]| > tau`` (strict)."""
    if tau < 0:
        raise ValueError(f"threshold must be nonnegative, got {tau}")
    if names is None and isinstance(w, WeightMatrix):
        names = w.names
    w = _as_square(w)
    adj = (np.abs(w) > tau).astype(np.int8)
    np.fill_diagonal(adj, 0)
    return DirectedGraph(tuple(names) if names is not None else default_names(w.shape[0]), adj)
