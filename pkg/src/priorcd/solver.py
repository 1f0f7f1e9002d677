"""Score-based DAG learning with prior initialization and prior-similarity loss.

The objective is the least-squares fit of a linear SEM plus an l1 penalty
plus ``lambda_sim * L_sim``, minimized subject to ``h(W) = 0`` with an
augmented Lagrangian. Each subproblem

    total_objective(W) + rho/2 * h(W)**2 + alpha * h(W)

is minimized by gradient descent with Armijo backtracking. The l1 term (and
the kink of ``|W|`` inside ``L_sim``) enters through its subgradient with
``sign(0) = 0``.
"""
from __future__ import annotations

import json
import warnings
from dataclasses import asdict, dataclass, field, replace
from typing import Optional, Union

import numpy as np

from .expm import MatrixExponentialError
from .graph import WeightMatrix, acyclicity_value_and_gradient, default_names, threshold
from .prior import CertaintyMatrix, MeanPrior, PriorMatrix
from .synthetic import Dataset

__all__ = [
    "SolverConfig",
    "SolverState",
    "NonConvergenceWarning",
    "PRESETS",
    "preset",
    "fitting_loss",
    "sim_loss",
    "total_objective",
    "objective_gradient",
    "init_from_prior",
    "solve",
    "solve_result_dict",
]

Prior = Union[PriorMatrix, MeanPrior]

ARMIJO_C = 1e-4
PROGRESS_FACTOR = 0.25


class NonConvergenceWarning(RuntimeWarning):
    """Outer budget exhausted with h(W) above tolerance; W is still returned."""


@dataclass(frozen=True)
class SolverConfig:
    lambda_sparsity: float = 0.1
    lambda_sim: float = 0.0
    lambda_init: float = 0.0
    sigmoid_steepness: float = 10.0
    activation: str = "sigmoid"
    threshold_tau: float = 0.3
    max_outer_iterations: int = 100
    max_inner_iterations: int = 2000
    h_tolerance: float = 1e-8
    rho_initial: float = 1.0
    rho_multiplier: float = 10.0
    rho_max: float = 1e16
    certainty_weighting: bool = False
    seed: int = 0
    # relative decrease below which an inner minimization stops early
    inner_tolerance: float = 1e-12
    center: bool = True

    def __post_init__(self):
        for name in ("lambda_sparsity", "lambda_sim", "lambda_init", "threshold_tau"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        for name in ("sigmoid_steepness", "h_tolerance", "rho_initial", "rho_max"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not self.rho_multiplier > 1:
            raise ValueError("rho_multiplier must exceed 1")
        if self.max_outer_iterations < 1 or self.max_inner_iterations < 1:
            raise ValueError("iteration budgets must be positive")
        if self.activation not in ("sigmoid", "clamp01"):
            raise ValueError(f"activation must be 'sigmoid' or 'clamp01', got {self.activation!r}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, obj: dict) -> SolverConfig:
        return cls(**obj)


PRESETS: dict[str, SolverConfig] = {
    "vanilla": SolverConfig(),
    "physics-notears": SolverConfig(lambda_sim=0.7, lambda_init=1.0, sigmoid_steepness=10.0),
    "arctic-notears": SolverConfig(lambda_sparsity=1.0, lambda_sim=0.7, lambda_init=1.0,
                                   sigmoid_steepness=10.0, threshold_tau=0.1),
    "arctic-vanilla": SolverConfig(lambda_sparsity=1.0, threshold_tau=0.13),
    "sachs-notears": SolverConfig(lambda_sparsity=1.0, lambda_sim=0.05, lambda_init=1.0,
                                  sigmoid_steepness=10.0, threshold_tau=0.57),
    "sachs-vanilla": SolverConfig(lambda_sparsity=1.0, threshold_tau=0.16),
}


def preset(name: str, **overrides) -> SolverConfig:
    try:
        cfg = PRESETS[name]
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
    return replace(cfg, **overrides)


@dataclass
class SolverState:
    w: np.ndarray
    rho: float
    alpha: float
    outer_iteration: int = 0
    history: list = field(default_factory=list)
    inner_traces: list = field(default_factory=list)
    converged: bool = False
    h_final: float = float("inf")


def _data_matrix(data) -> np.ndarray:
    return np.asarray(data.x if isinstance(data, Dataset) else data, dtype=float)


def _prior_values(prior) -> np.ndarray:
    return np.asarray(prior.values if hasattr(prior, "values") else prior, dtype=float)


def _check_shapes(w, d, what):
    if w.shape != (d, d):
        raise ValueError(f"{what} has shape {w.shape}, expected {(d, d)}")


def fitting_loss(w, data) -> float:
    """``(1 / 2n) * ||X - X W||_F^2``."""
    x = _data_matrix(data)
    w = np.asarray(w, dtype=float)
    _check_shapes(w, x.shape[1], "weight matrix")
    r = x - x @ w
    return 0.5 / x.shape[0] * float(np.sum(r * r))


def _activation(w, cfg):
    """Activated magnitudes and their derivative with respect to ``w``."""
    t = cfg.sigmoid_steepness
    z = t * np.abs(w)
    sgn = np.sign(w)
    if cfg.activation == "sigmoid":
        a = 1.0 / (1.0 + np.exp(-z))
        da = a * (1.0 - a) * t * sgn
    else:
        a = np.clip(z, 0.0, 1.0)
        da = np.where(z < 1.0, t * sgn, 0.0)
    return a, da


def _sim_weights(k, cfg, cert):
    if cfg.certainty_weighting and cert is not None:
        c = np.asarray(getattr(cert, "c", cert), dtype=float)
        _check_shapes(c, k.shape[0], "certainty matrix")
        return c
    return None


def sim_loss(w, prior, cfg: SolverConfig, cert: Optional[CertaintyMatrix] = None) -> float:
    """``sum_ij |act(t * |w_ij|) - k_ij|``, optionally weighted by certainty."""
    w = np.asarray(w, dtype=float)
    k = _prior_values(prior)
    _check_shapes(k, w.shape[0], "prior")
    a, _ = _activation(w, cfg)
    terms = np.abs(a - k)
    c = _sim_weights(k, cfg, cert)
    if c is not None:
        terms = terms * c
    return float(terms.sum())


def _sim_grad(w, k, cfg, c):
    a, da = _activation(w, cfg)
    g = np.sign(a - k) * da
    return g * c if c is not None else g


def total_objective(w, data, prior, cfg: SolverConfig,
                    cert: Optional[CertaintyMatrix] = None) -> float:
    """Fit + ``lambda_sparsity * ||w||_1`` + ``lambda_sim * sim_loss``.

    The acyclicity penalty is left to the augmented-Lagrangian wrapper.
    """
    w = np.asarray(w, dtype=float)
    value = fitting_loss(w, data) + cfg.lambda_sparsity * float(np.abs(w).sum())
    if prior is not None and cfg.lambda_sim:
        value += cfg.lambda_sim * sim_loss(w, prior, cfg, cert)
    return value


def objective_gradient(w, data, prior, cfg: SolverConfig, rho: float, alpha: float,
                       cert: Optional[CertaintyMatrix] = None) -> np.ndarray:
    """(Sub)gradient of ``total_objective + rho/2 h^2 + alpha h``, diagonal zeroed."""
    x = _data_matrix(data)
    w = np.asarray(w, dtype=float)
    _check_shapes(w, x.shape[1], "weight matrix")
    g = x.T @ (x @ w - x) / x.shape[0] + cfg.lambda_sparsity * np.sign(w)
    if prior is not None and cfg.lambda_sim:
        k = _prior_values(prior)
        _check_shapes(k, w.shape[0], "prior")
        g = g + cfg.lambda_sim * _sim_grad(w, k, cfg, _sim_weights(k, cfg, cert))
    h, gh = acyclicity_value_and_gradient(w)
    g = g + (rho * h + alpha) * gh
    np.fill_diagonal(g, 0.0)
    return g


def init_from_prior(prior, lambda_init: float) -> WeightMatrix:
    if lambda_init < 0:
        raise ValueError("lambda_init must be nonnegative")
    k = _prior_values(prior)
    w = lambda_init * k
    np.fill_diagonal(w, 0.0)
    names = getattr(prior, "names", None) or default_names(k.shape[0])
    return WeightMatrix(w, names)


class _Problem:
    """Augmented-Lagrangian value and gradient on a precomputed Gram matrix."""

    def __init__(self, x, prior, cfg, cert):
        n, d = x.shape
        self.d = d
        self.gram = x.T @ x / n
        self.cfg = cfg
        use_prior = prior is not None and cfg.lambda_sim > 0
        self.k = _prior_values(prior) if use_prior else None
        if self.k is not None:
            _check_shapes(self.k, d, "prior")
        self.c = _sim_weights(self.k, cfg, cert) if use_prior else None
        self.eye = np.eye(d)

    def objective(self, w):
        """total_objective, from the Gram form of the fit."""
        m = self.eye - w
        value = 0.5 * float(np.sum(m * (self.gram @ m)))
        value += self.cfg.lambda_sparsity * float(np.abs(w).sum())
        if self.k is not None:
            a, _ = _activation(w, self.cfg)
            terms = np.abs(a - self.k)
            if self.c is not None:
                terms = terms * self.c
            value += self.cfg.lambda_sim * float(terms.sum())
        return value

    def evaluate(self, w, rho, alpha):
        h, gh = acyclicity_value_and_gradient(w)
        obj = self.objective(w)
        value = obj + 0.5 * rho * h * h + alpha * h
        g = self.gram @ w - self.gram + self.cfg.lambda_sparsity * np.sign(w)
        if self.k is not None:
            g = g + self.cfg.lambda_sim * _sim_grad(w, self.k, self.cfg, self.c)
        g = g + (rho * h + alpha) * gh
        np.fill_diagonal(g, 0.0)
        return value, g, obj, h


def _minimize_inner(problem, w, rho, alpha, cfg):
    """Gradient descent with Armijo backtracking; Barzilai-Borwein trial steps.

    Returns the new iterate and the sequence of accepted subproblem values,
    which is non-increasing by construction.
    """
    value, g, _, _ = problem.evaluate(w, rho, alpha)
    trace = [value]
    step = 1.0
    for _ in range(cfg.max_inner_iterations):
        gnorm2 = float(np.sum(g * g))
        if gnorm2 == 0.0:
            break
        s = step
        while True:
            w_new = w - s * g
            np.fill_diagonal(w_new, 0.0)
            try:
                # overflowing trials are rejected below, so silence numpy about them
                with np.errstate(over="ignore", invalid="ignore"):
                    v_new, g_new, _, _ = problem.evaluate(w_new, rho, alpha)
            except MatrixExponentialError:
                v_new = np.inf
            if (np.isfinite(v_new) and v_new <= value - ARMIJO_C * s * gnorm2
                    and np.all(np.isfinite(g_new))):
                break
            s *= 0.5
            if s < 1e-18:
                return w, trace
        dw, dg = w_new - w, g_new - g
        sy = float(np.sum(dw * dg))
        step = float(np.sum(dw * dw)) / sy if sy > 0 else 2.0 * s
        step = min(max(step, 1e-12), 1e6)
        decrease = value - v_new
        w, value, g = w_new, v_new, g_new
        trace.append(value)
        if decrease <= cfg.inner_tolerance * max(1.0, abs(value)):
            break
    return w, trace


def solve(data, prior: Optional[Prior] = None, cfg: SolverConfig = SolverConfig(),
          cert: Optional[CertaintyMatrix] = None) -> tuple[WeightMatrix, SolverState]:
    """Learn ``W`` for ``data``; optionally initialize from and regularize toward ``prior``.

    The returned ``W`` is before thresholding. ``state.converged`` is False
    (and a :class:`NonConvergenceWarning` is issued) when the outer budget
    runs out with ``h(W)`` above ``cfg.h_tolerance``.
    """
    x = _data_matrix(data)
    if x.ndim != 2 or x.shape[0] == 0 or x.shape[1] == 0:
        raise ValueError("data must be a nonempty n x d matrix")
    if cfg.center:
        x = x - x.mean(axis=0)
    d = x.shape[1]
    names = data.names if isinstance(data, Dataset) else default_names(d)

    if prior is not None:
        _check_shapes(_prior_values(prior), d, "prior")
        w = np.array(init_from_prior(prior, cfg.lambda_init).w)
    else:
        w = np.zeros((d, d))
    problem = _Problem(x, prior, cfg, cert)
    state = SolverState(w=w, rho=cfg.rho_initial, alpha=0.0)

    h_prev = np.inf
    for it in range(1, cfg.max_outer_iterations + 1):
        w, trace = _minimize_inner(problem, w, state.rho, state.alpha, cfg)
        try:
            _, _, obj, h = problem.evaluate(w, state.rho, state.alpha)
        except MatrixExponentialError as exc:
            raise FloatingPointError(f"overflow in acyclicity term at outer step {it}") from exc
        state.w = w
        state.outer_iteration = it
        state.inner_traces.append(trace)
        state.history.append({
            "outer": it, "objective": obj, "h": h, "rho": state.rho,
            "alpha": state.alpha, "inner_iterations": len(trace) - 1,
        })
        state.h_final = h
        if h <= cfg.h_tolerance:
            state.converged = True
            break
        state.alpha += state.rho * h
        if h > PROGRESS_FACTOR * h_prev:
            state.rho = min(state.rho * cfg.rho_multiplier, cfg.rho_max)
        h_prev = h

    if not state.converged:
        warnings.warn(
            f"h(W) = {state.h_final:.3g} above tolerance {cfg.h_tolerance:g} after "
            f"{state.outer_iteration} outer iterations", NonConvergenceWarning, stacklevel=2)
    return WeightMatrix(state.w, names), state


def solve_result_dict(w: WeightMatrix, state: SolverState, cfg: SolverConfig) -> dict:
    return {
        "names": list(w.names),
        "w": w.w.tolist(),
        "h_final": state.h_final,
        "converged": state.converged,
        "history": state.history,
        "config": cfg.to_dict(),
    }


def discover(data, prior=None, cfg: SolverConfig = SolverConfig(), cert=None):
    """Solve and threshold at ``cfg.threshold_tau``; returns (graph, W, state)."""
    w, state = solve(data, prior, cfg, cert)
    return threshold(w, cfg.threshold_tau), w, state


def dumps_result(w, state, cfg) -> str:
    return json.dumps(solve_result_dict(w, state, cfg), indent=2)
