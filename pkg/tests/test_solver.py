import json
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from priorcd.graph import acyclicity_value, is_acyclic, threshold
from priorcd.metrics import shd
from priorcd.prior import PriorMatrix, certainty, random_prior
from priorcd.solver import (
    PRESETS, NonConvergenceWarning, SolverConfig, fitting_loss, init_from_prior,
    objective_gradient, preset, sim_loss, solve, solve_result_dict, total_objective,
)
from priorcd.synthetic import build_physics_graph, physics_dataset

from oracles import central_difference, fitting_loss_loops, logistic


def penalized(w, x, prior, cfg, rho, alpha, cert=None):
    h = acyclicity_value(w)
    return total_objective(w, x, prior, cfg, cert) + 0.5 * rho * h * h + alpha * h


def away_from_kinks(rng, d, lo=0.05):
    w = rng.uniform(-1, 1, (d, d))
    w = np.where(np.abs(w) < lo, lo * np.sign(w + 1e-300), w)
    np.fill_diagonal(w, 0.0)
    return w


# -- fitting loss ---------------------------------------------------------------------

def test_fit_at_zero_is_half_mean_square():
    x = np.random.default_rng(0).standard_normal((50, 3))
    assert fitting_loss(np.zeros((3, 3)), x) == pytest.approx(0.5 * np.sum(x ** 2) / 50)


def test_fit_noise_free_child_adds_nothing():
    # only the root column is left unexplained
    a = np.random.default_rng(1).standard_normal(100)
    x = np.column_stack([a, 2 * a])
    assert fitting_loss(np.array([[0.0, 2.0], [0.0, 0.0]]), x) == pytest.approx(
        0.5 * np.mean(a ** 2), rel=1e-14)


def test_fit_matches_loops():
    rng = np.random.default_rng(2)
    for _ in range(5):
        x = rng.standard_normal((20, 4))
        w = rng.uniform(-1, 1, (4, 4))
        assert abs(fitting_loss(w, x) - fitting_loss_loops(w, x)) < 1e-10


def test_fit_shape_check():
    with pytest.raises(ValueError):
        fitting_loss(np.zeros((2, 2)), np.zeros((5, 3)))


# -- similarity loss ------------------------------------------------------------------

def test_sim_sigmoid_at_zero_is_half_per_cell():
    k = np.zeros((4, 4))
    assert sim_loss(np.zeros((4, 4)), k, SolverConfig()) == pytest.approx(0.5 * 16)


def test_sim_clamp_at_zero_matches_empty_prior():
    cfg = SolverConfig(activation="clamp01")
    assert sim_loss(np.zeros((4, 4)), np.zeros((4, 4)), cfg) == 0.0


def test_sim_single_term():
    # t=10, |w|=0.5 on a prior edge: |sigmoid(5) - 1|
    w = np.zeros((2, 2))
    w[0, 1] = -0.5
    k = np.array([[0.0, 1.0], [0.0, 0.0]])
    cfg = SolverConfig()
    expected = abs(logistic(5.0) - 1.0) + 3 * 0.5
    assert sim_loss(w, k, cfg) == pytest.approx(expected, rel=1e-14)
    assert abs(logistic(5.0) - 1.0) == pytest.approx(0.006692850924284732, rel=1e-12)


def test_sim_certainty_weighting():
    names = ("a", "b")
    p1 = PriorMatrix(names, np.array([[0, 1], [0, 0]]))
    p0 = PriorMatrix(names, np.zeros((2, 2)))
    cert = certainty([p1, p0], 0.5)
    w = np.zeros((2, 2))
    cfg = SolverConfig(certainty_weighting=True)
    # off-edge cells agree (c=1); the split cell is weighted by 0.5
    assert sim_loss(w, p1, cfg, cert) == pytest.approx(0.5 * 3 + 0.5 * 0.5)
    assert sim_loss(w, p1, SolverConfig(), cert) == pytest.approx(0.5 * 4)


@given(arrays(float, (3, 3), elements=st.floats(-3, 3)),
       arrays(np.int8, (3, 3), elements=st.integers(0, 1)),
       st.sampled_from(["sigmoid", "clamp01"]))
def test_sim_bounds(w, k, act):
    value = sim_loss(w, k.astype(float), SolverConfig(activation=act))
    assert 0 <= value <= 9


# -- objective and gradient -------------------------------------------------------------

def test_total_objective_components():
    rng = np.random.default_rng(3)
    x = rng.standard_normal((30, 3))
    w = away_from_kinks(rng, 3)
    k = np.array([[0, 1, 0], [0, 0, 1], [0, 0, 0]], dtype=float)
    cfg = SolverConfig(lambda_sparsity=0.2, lambda_sim=0.7)
    expected = fitting_loss(w, x) + 0.2 * np.abs(w).sum() + 0.7 * sim_loss(w, k, cfg)
    assert total_objective(w, x, k, cfg) == pytest.approx(expected, rel=1e-14)
    assert total_objective(w, x, None, cfg) == pytest.approx(
        fitting_loss(w, x) + 0.2 * np.abs(w).sum(), rel=1e-14)


@pytest.mark.parametrize("activation", ["sigmoid", "clamp01"])
def test_gradient_matches_finite_differences(activation):
    rng = np.random.default_rng(7)
    for _ in range(20):
        x = rng.standard_normal((40, 5))
        w = away_from_kinks(rng, 5) * 0.4
        k = (rng.random((5, 5)) < 0.3).astype(float)
        np.fill_diagonal(k, 0)
        cfg = SolverConfig(lambda_sparsity=0.1, lambda_sim=0.7, activation=activation,
                           sigmoid_steepness=2.0 if activation == "clamp01" else 10.0)
        if activation == "clamp01":
            # keep clear of the clamp corner at t|w| = 1
            w = np.where(np.abs(np.abs(w) * 2.0 - 1.0) < 0.05, w * 0.8, w)
        rho, alpha = 3.0, 0.5
        an = objective_gradient(w, x, k, cfg, rho, alpha)
        fd = central_difference(lambda v: penalized(v, x, k, cfg, rho, alpha), w, 1e-6)
        off = ~np.eye(5, dtype=bool) & (np.abs(w) > 1e-3)
        rel = np.abs(an[off] - fd[off]) / np.maximum(np.abs(fd[off]), 1e-8)
        assert rel.max() <= 1e-4


def test_gradient_zero_data_zero_w():
    cfg = SolverConfig()
    g = objective_gradient(np.zeros((3, 3)), np.zeros((10, 3)), None, cfg, 1.0, 0.0)
    np.testing.assert_array_equal(g, np.zeros((3, 3)))


def test_gradient_diagonal_is_zero():
    rng = np.random.default_rng(4)
    x = rng.standard_normal((20, 4))
    w = rng.uniform(-1, 1, (4, 4))
    g = objective_gradient(w, x, np.ones((4, 4)), SolverConfig(lambda_sim=0.5), 10.0, 1.0)
    assert np.all(np.diag(g) == 0)


# -- prior initialization ------------------------------------------------------------

def test_init_from_prior():
    k = PriorMatrix(("a", "b"), np.array([[0, 1], [0, 0]]))
    assert not init_from_prior(k, 0.0).w.any()
    np.testing.assert_array_equal(init_from_prior(k, 1.0).w, k.k)
    m = np.array([[0.0, 0.5], [0.0, 0.0]])
    assert init_from_prior(m, 0.3).w[0, 1] == pytest.approx(0.15)
    with pytest.raises(ValueError):
        init_from_prior(k, -1.0)


# -- config ----------------------------------------------------------------------------

def test_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(lambda_sparsity=-1)
    with pytest.raises(ValueError):
        SolverConfig(activation="relu")
    with pytest.raises(ValueError):
        SolverConfig(rho_multiplier=1.0)


def test_config_round_trip():
    cfg = preset("arctic-notears")
    assert SolverConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))) == cfg


@pytest.mark.parametrize("name,lam,sim,tau", [
    ("arctic-notears", 1.0, 0.7, 0.1),
    ("arctic-vanilla", 1.0, 0.0, 0.13),
    ("sachs-notears", 1.0, 0.05, 0.57),
    ("sachs-vanilla", 1.0, 0.0, 0.16),
    ("physics-notears", 0.1, 0.7, 0.3),
])
def test_presets(name, lam, sim, tau):
    cfg = PRESETS[name]
    assert (cfg.lambda_sparsity, cfg.lambda_sim, cfg.threshold_tau) == (lam, sim, tau)


def test_preset_unknown_and_override():
    with pytest.raises(KeyError):
        preset("nope")
    assert preset("vanilla", threshold_tau=0.5).threshold_tau == 0.5


# -- solve -------------------------------------------------------------------------------

def test_solve_recovers_three_node_chain():
    # seed 0 draws a 0.51 coefficient that l1 shrinkage pushes under tau; see acceptance
    g, _, ds = physics_dataset(3, seed=1)
    w, state = solve(ds)
    assert state.converged and state.h_final <= 1e-8
    pred = threshold(w, 0.3)
    assert pred.names == g.names
    assert shd(pred, g) == 0
    assert is_acyclic(pred)


@pytest.mark.parametrize("seed", [1, 2])
def test_solve_converges_and_inner_traces_monotone(seed):
    _, _, ds = physics_dataset(5, seed=seed, n=1000)
    w, state = solve(ds, build_physics_graph(5).adj.astype(float), preset("physics-notears"))
    assert state.converged and state.h_final <= 1e-8
    assert is_acyclic(threshold(w, 0.3))
    for trace in state.inner_traces:
        assert np.all(np.diff(trace) <= 0)
    assert [h["outer"] for h in state.history] == list(range(1, state.outer_iteration + 1))


def test_solve_is_deterministic():
    _, _, ds = physics_dataset(5, seed=3, n=500)
    a, sa = solve(ds)
    b, sb = solve(ds)
    assert a.w.tobytes() == b.w.tobytes()
    assert sa.history == sb.history


def test_zero_prior_weights_equal_vanilla():
    _, _, ds = physics_dataset(3, seed=1, n=500)
    k = random_prior(3, 2, ds.names, 0)
    cfg = SolverConfig(lambda_sim=0.0, lambda_init=0.0)
    a, _ = solve(ds, k, cfg)
    b, _ = solve(ds, None, cfg)
    assert a.w.tobytes() == b.w.tobytes()


def test_solve_warns_when_budget_runs_out():
    _, _, ds = physics_dataset(5, seed=0, n=500)
    cfg = SolverConfig(max_outer_iterations=1, max_inner_iterations=5)
    with pytest.warns(NonConvergenceWarning):
        w, state = solve(ds, build_physics_graph(5).adj.T.astype(float) + build_physics_graph(5).adj,
                         cfg)
    assert not state.converged


def test_solve_rejects_bad_prior_shape():
    _, _, ds = physics_dataset(3, seed=0, n=100)
    with pytest.raises(ValueError):
        solve(ds, np.zeros((2, 2)))


def test_result_dict_is_json():
    _, _, ds = physics_dataset(3, seed=0, n=200)
    cfg = SolverConfig()
    w, state = solve(ds, None, cfg)
    obj = json.loads(json.dumps(solve_result_dict(w, state, cfg)))
    assert set(obj) == {"names", "w", "h_final", "converged", "history", "config"}
    assert obj["names"] == list(ds.names)
    assert obj["config"] == cfg.to_dict()


@settings(max_examples=8, deadline=None)
@given(st.integers(0, 1000))
def test_solve_output_acyclic_property(seed):
    with warnings.catch_warnings():
        warnings.simplefilter("error", NonConvergenceWarning)
        _, _, ds = physics_dataset(3, seed=seed, n=300)
        w, state = solve(ds, random_prior(3, 3, ds.names, seed), preset("physics-notears"))
    assert state.h_final <= 1e-8
    assert is_acyclic(threshold(w, 0.3))
