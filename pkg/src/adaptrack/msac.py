"""Magnitude-saturated adaptive control with a high-order tuner.

Parameter layout follows ``Theta_a = [K_x, K_r, Lambda]`` as one
``n_u x (n_x + 2 n_u)`` matrix.  The trailing ``n_u x n_u`` block is kept
diagonal: its update is projected onto the diagonal, which is exactly the
structure of the true ``Lambda``.
"""

import csv
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import InsufficientData, NoMatchingSolution, NonPositiveLambdaEstimate, NumericalBlowup
from .numeric import TimeGrid, min_eig_sym, rk4_step, solve_lyapunov
from .plant import SimLog, plant_deriv, reference_deriv, reference_input, saturate

# beta * N_t * step above this triggers sub-stepping; RK4's real-axis
# stability limit is ~2.785.
STIFFNESS_LIMIT = 2.0


@dataclass(frozen=True)
class IdealGains:
    K_x: np.ndarray
    K_r: np.ndarray
    lam: np.ndarray

    @property
    def theta(self):
        return np.hstack([self.K_x, self.K_r])

    @property
    def theta_a(self):
        return np.hstack([self.K_x, self.K_r, np.diag(self.lam)])


def ideal_gains(plant, model):
    """Gains satisfying A_p + B_p Lambda K_x = A_m and B_p Lambda K_r = B_m."""
    BL = plant.B_lambda
    K_x = np.linalg.lstsq(BL, model.A_m - plant.A_p, rcond=None)[0]
    K_r = np.linalg.lstsq(BL, model.B_m, rcond=None)[0]
    res = max(
        np.max(np.abs(plant.A_p + BL @ K_x - model.A_m)),
        np.max(np.abs(BL @ K_r - model.B_m)),
    )
    if res > 1e-8:
        raise NoMatchingSolution(f"matching conditions unreachable (residual {res:.3g})")
    return IdealGains(K_x, K_r, plant.lam.copy())


@dataclass(frozen=True)
class TunerGains:
    gamma: float
    beta: float
    mu: float
    P: np.ndarray
    B_p: np.ndarray

    def __post_init__(self):
        if not (self.gamma > 0 and self.beta > 0):
            raise ValueError("gamma and beta must be positive")
        if self.mu < self.mu_min * (1 - 1e-12):
            raise ValueError(f"mu={self.mu} below its lower bound {self.mu_min}")

    @property
    def mu_min(self):
        return 2.0 * self.gamma / self.beta * float(np.sum((self.P @ self.B_p) ** 2))

    @classmethod
    def design(cls, A_m, B_p, gamma=1.0, beta=1.0, Q_lyap=None, mu=None):
        """Gains with ``P`` from the Lyapunov equation and ``mu`` at its lower bound by default."""
        A_m = np.asarray(A_m, dtype=float)
        B_p = np.asarray(B_p, dtype=float)
        if Q_lyap is None:
            Q_lyap = 2.0 * np.eye(A_m.shape[0])
        P = solve_lyapunov(A_m, Q_lyap)
        if mu is None:
            mu = 2.0 * gamma / beta * float(np.sum((P @ B_p) ** 2))
        return cls(float(gamma), float(beta), float(mu), P, B_p)


@dataclass
class TunerState:
    theta: np.ndarray  # [K_x_hat, K_r_hat, diag(lam_hat)]
    xi: np.ndarray
    e_delta: np.ndarray
    gains: TunerGains

    def __post_init__(self):
        if self.theta.shape != self.xi.shape:
            raise ValueError("theta and xi shapes differ")
        n_u, cols = self.theta.shape
        if cols != self.n_x + 2 * n_u:
            raise ValueError("theta must be n_u x (n_x + 2 n_u)")

    @classmethod
    def initial(cls, theta0, gains):
        """Start with ``xi = theta`` and zero auxiliary error."""
        theta0 = np.array(theta0, dtype=float)
        n_x = gains.B_p.shape[0]
        return cls(theta0, theta0.copy(), np.zeros(n_x), gains)

    @property
    def n_x(self):
        return self.gains.B_p.shape[0]

    @property
    def n_u(self):
        return self.theta.shape[0]

    @property
    def K_x(self):
        return self.theta[:, : self.n_x]

    @property
    def K_r(self):
        return self.theta[:, self.n_x: self.n_x + self.n_u]

    @property
    def lam_hat(self):
        return np.diag(self.theta[:, self.n_x + self.n_u:]).copy()


@dataclass(frozen=True)
class AugmentedRegressor:
    phi_a: np.ndarray
    n_x: int

    @property
    def phi(self):
        n_u = (len(self.phi_a) - self.n_x) // 2
        return self.phi_a[: self.n_x + n_u]


def regressor(x_p, r, du):
    return AugmentedRegressor(np.concatenate([x_p, r, -du]), len(x_p))


def msac_control(state, x_p, r):
    """Unsaturated adaptive input ``K_x_hat x_p + K_r_hat r``."""
    n = state.n_x + state.n_u
    return state.theta[:, :n] @ np.concatenate([x_p, r])


def aux_error_deriv(state, model, du):
    return model.A_m @ state.e_delta + state.gains.B_p @ (state.lam_hat * du)


def normalization(gains, reg):
    return 1.0 + gains.mu * float(reg.phi_a @ reg.phi_a)


def tuner_deriv(state, e_u, reg):
    """Derivatives ``(d xi, d theta)`` of the high-order tuner."""
    g = state.gains
    d_xi = -g.gamma * np.outer(g.B_p.T @ (g.P @ e_u), reg.phi_a)
    lb = state.n_x + state.n_u
    blk = d_xi[:, lb:]
    d_xi[:, lb:] = np.diag(np.diag(blk))
    d_theta = -g.beta * normalization(g, reg) * (state.theta - state.xi)
    return d_xi, d_theta


def _weighted_sq(M, lam, n_theta):
    """Tr[M_T^T Lambda M_T] + Tr[M_L^T M_L] for the column split M = [M_T, M_L]."""
    mt = M[:, :n_theta]
    ml = M[:, n_theta:]
    return float(np.sum(lam[:, None] * mt * mt) + np.sum(ml * ml))


def lyapunov_value(state, e_u, oracle):
    """Lyapunov diagnostic; needs the true parameters, so simulation-side only."""
    g = state.gains
    n_theta = state.n_x + state.n_u
    ta = oracle.theta_a
    return (
        float(e_u @ g.P @ e_u)
        + _weighted_sq(state.xi - ta, oracle.lam, n_theta) / g.gamma
        + _weighted_sq(state.theta - state.xi, oracle.lam, n_theta) / g.gamma
    )


@dataclass
class PEReport:
    window: float
    alpha: float
    starts: np.ndarray
    min_eigs: np.ndarray

    @property
    def min_level(self):
        return float(np.min(self.min_eigs))

    @property
    def verdict(self):
        return self.min_level >= self.alpha

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["window_start", "min_eig"])
            for s, m in zip(self.starts, self.min_eigs):
                w.writerow([format(float(s), ".17g"), format(float(m), ".17g")])


def pe_check(phi, dt, T, alpha, stride=None, t0=0.0):
    """Windowed trapezoidal Gram integrals of ``phi`` (rows are samples)."""
    phi = np.asarray(phi, dtype=float)
    if phi.ndim == 1:
        phi = phi[:, None]
    m = int(round(T / dt))
    if m + 1 < 10:
        raise InsufficientData("window must span at least 10 samples")
    if len(phi) < m + 1:
        raise InsufficientData(f"{len(phi)} samples cannot fill a {T:g} s window")
    step = max(1, int(round((T / 4 if stride is None else stride) / dt)))
    w = np.full(m + 1, dt)
    w[0] = w[-1] = 0.5 * dt
    starts, eigs = [], []
    for i in range(0, len(phi) - m, step):
        blk = phi[i: i + m + 1]
        gram = (blk * w[:, None]).T @ blk
        starts.append(t0 + i * dt)
        eigs.append(min_eig_sym(gram))
    return PEReport(float(T), float(alpha), np.array(starts), np.array(eigs))


def estimate_from_theta(theta_a, model, B_p):
    """Plant estimates ``(A_hat, Lambda_hat)`` implied by a gain matrix ``[K_x, K_r, Lambda]``."""
    theta_a = np.asarray(theta_a, dtype=float)
    n_x = np.shape(B_p)[0]
    n_u = theta_a.shape[0]
    lam = np.diag(theta_a[:, n_x + n_u:]).copy()
    if np.any(lam <= 0):
        raise NonPositiveLambdaEstimate(lam)
    Lam = np.diag(lam)
    return model.A_m - B_p @ Lam @ theta_a[:, :n_x], Lam


def extract_parameters(state, model, B_p):
    """Plant estimates ``(A_hat, Lambda_hat)`` from the tuner's current gains."""
    return estimate_from_theta(state.theta, model, B_p)


@dataclass
class MsacRun:
    log: SimLog
    phi_a: np.ndarray
    final: TunerState
    substeps: int = 0
    oracle: IdealGains = field(default=None, repr=False)

    @property
    def x_p(self):
        return self.log.x_p[-1]

    @property
    def x_m(self):
        return self.log.x_m[-1]


class _ClosedLoop:
    """Coupled plant / reference / tuner vector field.

    State layout: ``[x_p, x_m, e_delta, vec(xi), vec(theta)]``.
    """

    def __init__(self, plant, model, exo, gains, shape):
        self.plant = plant
        self.model = model
        self.exo = exo
        self.gains = gains
        self.shape = shape
        nx = plant.n_x
        size = shape[0] * shape[1]
        self.sl_xp = slice(0, nx)
        self.sl_xm = slice(nx, 2 * nx)
        self.sl_ed = slice(2 * nx, 3 * nx)
        self.sl_xi = slice(3 * nx, 3 * nx + size)
        self.sl_th = slice(3 * nx + size, 3 * nx + 2 * size)
        self.dim = 3 * nx + 2 * size

    def pack(self, x_p, x_m, st):
        return np.concatenate([x_p, x_m, st.e_delta, st.xi.ravel(), st.theta.ravel()])

    def unpack(self, s):
        st = TunerState(
            s[self.sl_th].reshape(self.shape), s[self.sl_xi].reshape(self.shape),
            s[self.sl_ed], self.gains,
        )
        return s[self.sl_xp], s[self.sl_xm], st

    def signals(self, t, s):
        x_p, x_m, st = self.unpack(s)
        x_d, xdot_d = self.exo.both(t)
        r = reference_input(self.model, x_d, xdot_d)
        u = msac_control(st, x_p, r)
        du = saturate(u, self.plant.u_max) - u
        return x_p, x_m, st, x_d, r, u, du

    def rhs(self, t, s):
        x_p, x_m, st, _, r, u, du = self.signals(t, s)
        e_u = (x_p - x_m) - st.e_delta
        d_xi, d_th = tuner_deriv(st, e_u, regressor(x_p, r, du))
        out = np.empty(self.dim)
        out[self.sl_xp] = plant_deriv(self.plant, x_p, u)
        out[self.sl_xm] = reference_deriv(self.model, x_m, r)
        out[self.sl_ed] = aux_error_deriv(st, self.model, du)
        out[self.sl_xi] = d_xi.ravel()
        out[self.sl_th] = d_th.ravel()
        return out


def simulate_msac(plant, model, exo, tuner, grid, x_m0=None, x_limit=None):
    """Closed-loop MSAC run over ``grid``; diagnostics use the simulator's ground truth.

    Steps are split into equal sub-steps whenever ``beta * N_t * h`` exceeds
    :data:`STIFFNESS_LIMIT`; logged rows stay on ``grid``.  With ``x_limit``
    set, the run stops with :class:`NumericalBlowup` once ``|x_p|`` passes it
    (a diverging loop otherwise drives the sub-step count up without bound).
    """
    oracle = ideal_gains(plant, model)
    loop = _ClosedLoop(plant, model, exo, tuner.gains, tuner.theta.shape)
    x_m0 = plant.x0 if x_m0 is None else np.asarray(x_m0, dtype=float)
    s = loop.pack(plant.x0, x_m0, tuner)
    n, nx, nu = grid.n, plant.n_x, plant.n_u
    ta = oracle.theta_a
    rec = {k: np.empty((n, nx)) for k in ("x_p", "x_m", "x_d")}
    rec.update({k: np.empty((n, nu)) for k in ("u", "bsat_u", "du")})
    phi_a = np.empty((n, nx + 2 * nu))
    V = np.empty(n)
    terr = np.empty(n)
    extra_steps = 0
    beta = tuner.gains.beta
    for k in range(n):
        t = grid.node(k)
        x_p, x_m, st, x_d, r, u, du = loop.signals(t, s)
        if not np.all(np.isfinite(s)):
            raise NumericalBlowup(t)
        if x_limit is not None and np.linalg.norm(x_p) > x_limit:
            raise NumericalBlowup(t, f"|x_p| = {np.linalg.norm(x_p):.4g} above {x_limit:g}")
        reg = regressor(x_p, r, du)
        e_u = (x_p - x_m) - st.e_delta
        rec["x_p"][k], rec["x_m"][k], rec["x_d"][k] = x_p, x_m, x_d
        rec["u"][k], rec["bsat_u"][k], rec["du"][k] = u, u + du, du
        phi_a[k] = reg.phi_a
        V[k] = lyapunov_value(st, e_u, oracle)
        terr[k] = np.linalg.norm(st.theta - ta)
        if k == n - 1:
            break
        m = max(1, math.ceil(beta * normalization(st.gains, reg) * grid.h / STIFFNESS_LIMIT))
        hs = grid.h / m
        for j in range(m):
            s = rk4_step(loop.rhs, t + j * hs, s, hs)
        extra_steps += m - 1
    _, _, final = loop.unpack(s)
    final = replace(final, theta=final.theta.copy(), xi=final.xi.copy(), e_delta=final.e_delta.copy())
    log = SimLog(
        grid.times, rec["x_p"], rec["x_m"], rec["x_d"], rec["u"], rec["bsat_u"],
        rec["du"], terr, V, ["MSAC"] * n,
    )
    return MsacRun(log, phi_a, final, extra_steps, oracle)
