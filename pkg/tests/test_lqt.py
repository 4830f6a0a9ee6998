import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from adaptrack.errors import UnsupportedWeight
from adaptrack.lqt import (
    FeedbackLaw, LQTWeights, evaluate_policy, policy_gap, probe_states, project_input,
    quadrature_cost, simulate_law, solve_unconstrained_lqt,
)
from adaptrack.numeric import TimeGrid
from adaptrack.plant import ExoSignal

from .oracles import ball_samples, zoh_dp_cost

ZERO2 = ExoSignal([[], []])


@pytest.fixture(scope="module")
def model(base):
    return base.plant.A_p, base.plant.B_lambda, base.weights, base.exo


@pytest.fixture(scope="module")
def solved(model):
    A, BL, w, xd = model
    grid = TimeGrid.from_span(0.0, 2.0, 1e-3)
    return (grid,) + solve_unconstrained_lqt(A, BL, w, xd, grid)


def test_scalar_long_horizon_limit():
    w = LQTWeights(np.array([[20.0]]), np.array([[1.0]]), np.array([[0.0]]))
    grid = TimeGrid.from_span(0.0, 10.0, 1e-3)
    ctg, _ = solve_unconstrained_lqt(np.array([[1.0]]), np.array([[1.0]]), w, ExoSignal([[]]), grid)
    assert ctg.S2[0, 0, 0] == pytest.approx(1.0 + math.sqrt(21.0), abs=1e-3)


def test_terminal_conditions(solved, model):
    grid, ctg, _ = solved
    _, _, w, xd = model
    x1 = xd.value(grid.t_end)
    assert np.array_equal(ctg.S2[-1], w.Q_f)
    assert np.allclose(ctg.S1[-1], -w.Q_f @ x1, rtol=0, atol=1e-14)
    assert ctg.S0[-1] == pytest.approx(x1 @ w.Q_f @ x1, rel=1e-14)


def test_matches_dynamic_programming(solved, model):
    grid, ctg, _ = solved
    A, BL, w, xd = model
    probes = np.random.default_rng(7).normal(scale=2.0, size=(10, 2))
    dp = zoh_dp_cost(A, BL, w.Q, w.R, w.Q_f, xd, 0.0, 2.0, 1e-3, probes)
    v = np.array([ctg.value(x, k=0) for x in probes])
    assert np.max(np.abs(v - dp) / np.abs(dp)) < 1e-4


def test_s2_symmetric_psd(solved):
    _, ctg, _ = solved
    assert np.array_equal(ctg.S2, np.swapaxes(ctg.S2, 1, 2))
    assert np.min(np.linalg.eigvalsh(ctg.S2)) >= -1e-8


def test_optimal_policy_evaluation_reproduces_cost_to_go(solved, model):
    grid, ctg, law = solved
    A, BL, w, xd = model
    ev = evaluate_policy(law, A, BL, w, xd)
    scale = np.max(np.abs(ctg.S0))
    assert np.max(np.abs(ev.S2 - ctg.S2)) < 1e-6
    assert np.max(np.abs(ev.S1 - ctg.S1)) < 1e-6
    assert np.max(np.abs(ev.S0 - ctg.S0)) < 1e-6 * max(1.0, scale)


def test_quadrature_matches_cost_to_go(solved, model):
    grid, ctg, law = solved
    A, BL, w, xd = model
    x0 = np.array([0.5, -0.3])
    X, _, U = simulate_law(law, A, BL, x0, grid)
    J = quadrature_cost((grid.times, X, U), w, xd)
    assert J == pytest.approx(ctg.value(x0, k=0), rel=1e-3)


def test_quadrature_trivial_cases():
    w = LQTWeights(np.eye(2) * 3.0, np.eye(2), np.zeros((2, 2)))
    t = np.linspace(0.0, 2.0, 201)
    assert quadrature_cost((t, np.zeros((201, 2)), np.zeros((201, 2))), w, ZERO2) == 0.0
    v = np.array([0.5, -1.0])
    J = quadrature_cost((t, np.tile(v, (201, 1)), np.zeros((201, 2))), w, ZERO2)
    assert J == pytest.approx(2.0 * v @ w.Q @ v, abs=1e-8)


def test_projection_examples():
    w = LQTWeights(np.eye(2), np.eye(2), np.eye(2))
    u = np.array([1.0, 2.0])
    assert np.array_equal(project_input(u, w, 8.0), u)
    assert np.allclose(project_input(np.array([6.0, 8.0]), w, 8.0), [4.8, 6.4])
    with pytest.raises(UnsupportedWeight):
        project_input(u, LQTWeights(np.eye(2), np.diag([1.0, 2.0]), np.eye(2)), 8.0)


def test_projection_against_sampled_ball():
    w = LQTWeights(np.eye(2), np.eye(2), np.eye(2))
    u_uc = np.array([6.0, 8.0])
    pts = ball_samples(100_000, 8.0)
    best = pts[np.argmin(np.sum((pts - u_uc) ** 2, axis=1))]
    assert np.linalg.norm(best - project_input(u_uc, w, 8.0)) < 0.01


@settings(max_examples=1000, deadline=None)
@given(
    seed=st.integers(0, 2**31), u_max=st.floats(0.1, 20.0), r=st.floats(0.1, 10.0),
    scale=st.floats(0.0, 40.0),
)
def test_projection_beats_sampled_admissible_inputs(seed, u_max, r, scale):
    rng = np.random.default_rng(seed)
    w = LQTWeights(np.eye(2), r * np.eye(2), np.eye(2))
    u_uc = rng.normal(size=2) * scale
    p = project_input(u_uc, w, u_max)
    cand = rng.normal(size=(200, 2))
    cand *= (u_max * np.sqrt(rng.uniform(size=200)) / np.linalg.norm(cand, axis=1))[:, None]
    cost_p = r * np.sum((p - u_uc) ** 2)
    assert np.all(r * np.sum((cand - u_uc) ** 2, axis=1) >= cost_p - 1e-9 * max(1.0, cost_p))


def test_probe_set():
    assert probe_states(2).tolist() == [[0, 0], [1, 0], [0, 1], [-1, 0], [-0, -1]]


def _perturbed(law, dK1=0.0, dK0=0.0):
    return FeedbackLaw(law.grid, law.K1 + dK1, law.K0 + dK0)


def test_policy_gap_identical_laws(solved, model):
    _, _, law = solved
    A, BL, w, xd = model
    assert policy_gap(law, law, A, BL, w, xd) == 0.0


@pytest.mark.parametrize("which", ["K1", "K0"])
def test_policy_gap_quadratic(solved, model, which):
    _, _, law = solved
    A, BL, w, xd = model
    E = np.array([[0.6, -0.2], [0.3, 0.7]]) if which == "K1" else np.array([0.8, -0.6])
    E = E / np.linalg.norm(E)

    def gap(d):
        pert = _perturbed(law, dK1=d * E) if which == "K1" else _perturbed(law, dK0=d * E)
        return policy_gap(law, pert, A, BL, w, xd)

    deltas = np.array([0.2, 0.1, 0.05, 0.025])
    gaps = np.array([gap(d) for d in deltas])
    assert 2.5 <= gaps[0] / gaps[1] <= 6.0
    slope = np.polyfit(np.log(deltas), np.log(gaps), 1)[0]
    assert 1.6 <= slope <= 2.4


def test_feedback_law_interpolation_is_smooth(solved):
    _, _, law = solved
    t = 0.5 + 0.37e-3
    k = int(0.5 / 1e-3)
    K1, _ = law.gains(t)
    lin = 0.63 * law.K1[k] + 0.37 * law.K1[k + 1]
    assert np.max(np.abs(K1 - lin)) < 1e-6
    with pytest.raises(ValueError):
        law.gains(3.0)
