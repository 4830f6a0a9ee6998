"""Receding-horizon tracking on an estimated model, plus the true-parameter oracle."""

from dataclasses import dataclass

import numpy as np

from .errors import GridMismatch
from .lqt import quadrature_cost, solve_unconstrained_lqt
from .msac import estimate_from_theta
from .numeric import TimeGrid, rk4_step
from .plant import SimLog, plant_deriv, reference_deriv, reference_input, saturate


@dataclass(frozen=True)
class MpcConfig:
    horizon: float
    sample_interval: float
    weights: object  # LQTWeights
    u_max: float
    step: float = 1e-3

    def __post_init__(self):
        if not 0 < self.sample_interval <= self.horizon:
            raise ValueError("need 0 < sample_interval <= horizon")
        for name in ("sample_interval", "horizon"):
            ratio = getattr(self, name) / self.step
            if abs(ratio - round(ratio)) > 1e-6:
                raise ValueError(f"{name} must be a whole number of steps")
        if not self.weights.scalar_input_weight:
            raise ValueError("ball-constrained MPC needs R = R_u I")

    @property
    def sample_nodes(self):
        return int(round(self.sample_interval / self.step))

    @property
    def horizon_nodes(self):
        return int(round(self.horizon / self.step))


@dataclass(frozen=True)
class ModelEstimate:
    A_hat: np.ndarray
    Lambda_hat: np.ndarray
    B_p: np.ndarray

    def __post_init__(self):
        lam = np.diag(self.Lambda_hat)
        if np.any(lam <= 0) or np.any(self.Lambda_hat != np.diag(lam)):
            raise ValueError("Lambda_hat must be diagonal with positive entries")

    @property
    def B_lambda(self):
        return self.B_p @ self.Lambda_hat

    @classmethod
    def from_theta(cls, theta_a, model, B_p):
        A_hat, Lam = estimate_from_theta(theta_a, model, B_p)
        return cls(A_hat, Lam, np.asarray(B_p, dtype=float))

    @classmethod
    def truth(cls, plant):
        return cls(plant.A_p, plant.Lambda, plant.B_p)


def injected_theta(theta_a, delta):
    """Scale ``theta_a`` toward zero so that the Frobenius estimation error equals ``delta``."""
    theta_a = np.asarray(theta_a, dtype=float)
    return (1.0 - delta / np.linalg.norm(theta_a)) * theta_a


def mpc_step(model, cfg, x_now, t_i, x_d, t_final=None, cache=None):
    """Projected LQT law for the window starting at ``t_i``.

    The window is ``[t_i, t_i + horizon]`` clipped at ``t_final``.  Windows
    sharing an end point with a cached solve reuse its tables; re-solving
    would reproduce them node for node.
    """
    if not np.all(np.isfinite(x_now)):
        raise ValueError("x_now must be finite")
    h = cfg.step
    end = t_i + cfg.horizon
    if t_final is not None:
        end = min(end, t_final)
    key = int(round(end / h))
    if cache is not None and key in cache:
        law = cache[key]
        k0 = int(round((t_i - law.grid.t_start) / h))
        if 0 <= k0 < law.grid.n:
            return law.restrict(k0, law.grid.n - 1)
    grid = TimeGrid.from_span(t_i, end, h)
    _, law = solve_unconstrained_lqt(model.A_hat, model.B_lambda, cfg.weights, x_d, grid)
    law = law.projected(cfg.u_max)
    if cache is not None:
        cache[key] = law
    return law


@dataclass
class _Trajectory:
    x_p: np.ndarray
    x_m: np.ndarray
    u_uc: np.ndarray
    u: np.ndarray


def _receding(model, cfg, plant, grid, x_d, x0, reference=None, x_m0=None):
    nx = plant.n_x
    n = grid.n
    X = np.empty((n, nx))
    XM = np.full((n, nx), np.nan)
    U_uc = np.empty((n, plant.n_u))
    U = np.empty((n, plant.n_u))
    if n == 0:
        return _Trajectory(X, XM, U_uc, U)
    with_ref = reference is not None
    s = np.concatenate([x0, x_m0 if with_ref else np.zeros(0)])
    cache = {}
    law = None

    def f(t, s):
        x_p = s[:nx]
        out = np.empty_like(s)
        out[:nx] = plant_deriv(plant, x_p, law(t, x_p))
        if with_ref:
            xd, xdd = x_d.both(t)
            out[nx:] = reference_deriv(reference, s[nx:], reference_input(reference, xd, xdd))
        return out

    for k in range(n):
        t = grid.node(k)
        if k % cfg.sample_nodes == 0:
            law = mpc_step(model, cfg, s[:nx], t, x_d, t_final=grid.t_end, cache=cache)
        X[k] = s[:nx]
        if with_ref:
            XM[k] = s[nx:]
        U_uc[k] = law.unconstrained(t, s[:nx])
        U[k] = saturate(U_uc[k], cfg.u_max)
        if k < n - 1:
            s = rk4_step(f, t, s, grid.h)
    return _Trajectory(X, XM, U_uc, U)


def _log(traj, grid, x_d, phase, theta_err):
    n = grid.n
    return SimLog(
        grid.times, traj.x_p, traj.x_m, x_d.values(grid.times), traj.u_uc, traj.u,
        traj.u - traj.u_uc, np.full(n, theta_err), np.full(n, np.nan), [phase] * n,
    )


def _phase_grid(t_span, h):
    t0, t1 = t_span
    if t1 <= t0:
        return TimeGrid(float(t0), h, 1), True
    return TimeGrid.from_span(t0, t1, h), False


def run_receding_horizon(model, cfg, plant, t_span, x_d, x0=None, reference=None,
                         x_m0=None, theta_err=np.nan, phase="MPC"):
    """Receding-horizon closed loop on the true plant over ``t_span``."""
    grid, empty = _phase_grid(t_span, cfg.step)
    x0 = plant.x0 if x0 is None else np.asarray(x0, dtype=float)
    if empty:
        nx, nu = plant.n_x, plant.n_u
        z = np.zeros
        return SimLog(z(0), z((0, nx)), z((0, nx)), z((0, nx)), z((0, nu)), z((0, nu)),
                      z((0, nu)), z(0), z(0), [])
    x_m0 = x0 if x_m0 is None else np.asarray(x_m0, dtype=float)
    traj = _receding(model, cfg, plant, grid, x_d, x0, reference, x_m0)
    return _log(traj, grid, x_d, phase, theta_err)


def run_with_oracle(model, cfg, plant, t_span, x_d, x0=None, reference=None,
                    x_m0=None, theta_err=np.nan):
    """MPC run on ``model`` and the same procedure on the true parameters.

    The MPC log carries the oracle trajectory as ``x_star`` / ``u_star``
    extra columns; the oracle log is returned separately for cost accounting.
    """
    mpc_log = run_receding_horizon(model, cfg, plant, t_span, x_d, x0, reference, x_m0, theta_err)
    oracle_log = run_receding_horizon(
        ModelEstimate.truth(plant), cfg, plant, t_span, x_d, x0, reference, x_m0, 0.0, phase="ORACLE"
    )
    mpc_log.extras = {"x_star": oracle_log.x_p, "u_star": oracle_log.bsat_u}
    return mpc_log, oracle_log


def optimality_gap(mpc_log, oracle_log, w, x_d):
    """Cost of the MPC trajectory minus that of the oracle trajectory."""
    if len(mpc_log) != len(oracle_log) or np.any(mpc_log.t != oracle_log.t):
        raise GridMismatch("logs are on different time grids")
    if len(mpc_log) and np.any(mpc_log.x_p[0] != oracle_log.x_p[0]):
        raise GridMismatch("logs start from different states")
    return quadrature_cost(mpc_log, w, x_d) - quadrature_cost(oracle_log, w, x_d)
