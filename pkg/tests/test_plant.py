import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from adaptrack.numeric import TimeGrid, integrate_forward
from adaptrack.plant import (
    ExoSignal, PlantSpec, ReferenceModel, SimLog, plant_deriv, reference_deriv,
    reference_input, saturate,
)

A_P = np.array([[1.0, 1.0], [0.0, 1.0]])
A_M = np.array([[-1.0, 1.0], [0.0, -2.0]])


@pytest.fixture
def plant():
    return PlantSpec(A_P, np.eye(2), np.ones(2), 8.0, np.zeros(2))


@pytest.fixture
def model():
    return ReferenceModel(A_M, np.eye(2))


def test_saturate_examples():
    assert np.array_equal(saturate(np.array([3.0, 4.0]), 8.0), [3.0, 4.0])
    assert np.allclose(saturate(np.array([6.0, 8.0]), 8.0), [4.8, 6.4], atol=1e-15)
    assert np.array_equal(saturate(np.zeros(2), 1.0), np.zeros(2))


vectors = st.integers(1, 8).flatmap(
    lambda n: arrays(float, n, elements=st.floats(-1e6, 1e6, allow_nan=False))
)


@settings(max_examples=300)
@given(u=vectors, u_max=st.floats(1e-3, 1e3))
def test_saturate_bounded_and_idempotent(u, u_max):
    s = saturate(u, u_max)
    assert np.linalg.norm(s) <= u_max * (1 + 1e-12)
    assert np.allclose(saturate(s, u_max), s, rtol=1e-12, atol=0)


@settings(max_examples=200)
@given(u=vectors, u_max=st.floats(1e-3, 1e3))
def test_saturate_is_radial(u, u_max):
    s = saturate(u, u_max)
    n = np.linalg.norm(u)
    if n > u_max:
        assert np.allclose(s * n, u * np.linalg.norm(s), rtol=1e-9, atol=1e-9 * n)


def test_plant_deriv_examples(plant):
    assert np.array_equal(plant_deriv(plant, np.array([1.0, 0.0]), np.zeros(2)), [1.0, 0.0])
    assert np.array_equal(plant_deriv(plant, np.zeros(2), np.zeros(2)), [0.0, 0.0])
    assert np.allclose(plant_deriv(plant, np.zeros(2), np.array([6.0, 8.0])), [4.8, 6.4])


def test_plant_spec_rejects_bad_lambda():
    with pytest.raises(ValueError):
        PlantSpec(A_P, np.eye(2), np.array([1.0, 0.0]), 8.0, np.zeros(2))
    with pytest.raises(ValueError):
        PlantSpec(A_P, np.eye(2), np.ones(2), 0.0, np.zeros(2))


def test_reference_model_needs_hurwitz():
    with pytest.raises(Exception):
        ReferenceModel(A_P, np.eye(2))


def test_reference_input_examples(model):
    assert np.array_equal(reference_input(model, np.zeros(2), np.zeros(2)), [0.0, 0.0])
    assert np.allclose(reference_input(model, np.array([1.0, 0.0]), np.zeros(2)), [1.0, 0.0])


def test_reference_input_at_start(base):
    xd, xdd = base.exo.both(0.0)
    assert np.allclose(xd, 0.0, atol=1e-15)
    assert np.allclose(xdd, [16.0, 12.0])
    assert np.allclose(reference_input(base.reference, xd, xdd), [16.0, 12.0])


def test_reference_deriv_examples(model):
    assert np.array_equal(reference_deriv(model, np.zeros(2), np.zeros(2)), [0.0, 0.0])
    assert np.allclose(reference_deriv(model, np.ones(2), np.zeros(2)), [0.0, -2.0])
    assert np.allclose(reference_deriv(model, np.zeros(2), np.array([1.0, 0.0])), [1.0, 0.0])


def test_reference_tracks_desired_trajectory(base):
    model, exo = base.reference, base.exo

    def f(t, x):
        return reference_deriv(model, x, reference_input(model, *exo.both(t)))

    grid = TimeGrid.from_span(0.0, 10.0, 1e-3)
    xs = integrate_forward(f, grid, exo.value(0.0))
    assert np.max(np.abs(xs - exo.values(grid.times))) <= 1e-6


def test_reference_error_decays(base):
    model, exo = base.reference, base.exo

    def f(t, x):
        return reference_deriv(model, x, reference_input(model, *exo.both(t)))

    grid = TimeGrid.from_span(0.0, 5.0, 1e-3)
    e0 = np.array([1.0, -1.0])
    xs = integrate_forward(f, grid, exo.value(0.0) + e0)
    err = np.linalg.norm(xs - exo.values(grid.times), axis=1)
    # slowest pole of A_m is -1; the non-normal coupling allows a transient factor of 2
    assert np.all(err <= 2.0 * np.linalg.norm(e0) * np.exp(-grid.times) + 1e-9)


def test_exo_signal_derivative_check_rejects_nothing_valid():
    sig = ExoSignal([[(2.0, 3.0, 0.5)], [(1.0, 0.0, math.pi / 2)]])
    assert sig.dim == 2
    assert np.allclose(sig.value(0.0), [2 * math.sin(0.5), 1.0])
    assert np.allclose(sig.deriv(0.0), [6 * math.cos(0.5), 0.0])


def _log(n=5, extras=None):
    t = np.linspace(0.0, 0.4, n)
    z = np.tile(np.arange(n, dtype=float)[:, None] / 7.0, (1, 2))
    return SimLog(t, z, z + 1, z + 2, z * 3, z * 2, -z, np.full(n, 0.5), np.arange(n) * 0.1,
                  ["MSAC"] * n, extras or {})


def test_simlog_csv_round_trip(tmp_path):
    log = _log(extras={"x_star": np.ones((5, 2)) / 3.0})
    log.to_csv(tmp_path / "a.csv")
    back = SimLog.from_csv(tmp_path / "a.csv")
    assert back.columns() == log.columns()
    for name in ("t", "x_p", "x_m", "x_d", "u", "bsat_u", "du", "theta_err", "V"):
        assert np.array_equal(getattr(back, name), getattr(log, name))
    assert np.array_equal(back.extras["x_star"], log.extras["x_star"])
    raw = (tmp_path / "a.csv").read_bytes()
    assert b"\r" not in raw
    assert raw.splitlines()[0].startswith(b"t,x_p_0,x_p_1,x_m_0")


def test_simlog_rejects_non_increasing_time():
    with pytest.raises(ValueError):
        SimLog(np.array([0.0, 0.0]), *[np.zeros((2, 1))] * 6, np.zeros(2), np.zeros(2), ["MSAC"] * 2)


def test_simlog_concat_drops_duplicate_boundary():
    a = _log()
    b = _log()
    b.t = b.t + 0.4
    b.phase = ["MPC"] * 5
    cat = SimLog.concat(a, b)
    assert len(cat) == 9
    assert cat.phase[3] == "MSAC" and cat.phase[4] == "MPC"
