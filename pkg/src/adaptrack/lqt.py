"""Finite-horizon linear-quadratic tracking.

Cost-to-go of any affine law ``u = K1(t) x + K0(t)`` on ``x' = A x + BL u`` is
``V(x, t) = x'S2 x + 2 x'S1 + S0``.  The optimal solve and policy evaluation
share one right-hand side (:func:`_s_derivs`); the optimal solve just feeds
back ``K1 = -R^-1 BL' S2`` and ``K0 = -R^-1 BL' S1``.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import UnsupportedWeight
from .numeric import TimeGrid, integrate_backward, min_eig_sym, rk4_step, sym
from .plant import saturate


@dataclass(frozen=True)
class LQTWeights:
    Q: np.ndarray
    R: np.ndarray
    Q_f: np.ndarray
    R_inv: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        Q, R, Q_f = sym(self.Q), sym(self.R), sym(self.Q_f)
        if min_eig_sym(Q) < -1e-12:
            raise ValueError("Q must be positive semidefinite")
        if min_eig_sym(Q_f) < -1e-12:
            raise ValueError("Q_f must be positive semidefinite")
        if min_eig_sym(R) <= 0:
            raise ValueError("R must be positive definite")
        if Q.shape != Q_f.shape:
            raise ValueError("Q and Q_f sizes differ")
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "Q_f", Q_f)
        object.__setattr__(self, "R_inv", np.linalg.inv(R))

    @property
    def scalar_input_weight(self):
        """True when R is a positive multiple of the identity."""
        r0 = self.R[0, 0]
        return r0 > 0 and np.allclose(self.R, r0 * np.eye(len(self.R)), rtol=0, atol=1e-12 * r0)

    @property
    def R_u(self):
        return float(self.R[0, 0]) if self.scalar_input_weight else None


@dataclass
class CostToGo:
    grid: TimeGrid
    S2: np.ndarray  # (n, nx, nx)
    S1: np.ndarray  # (n, nx)
    S0: np.ndarray  # (n,)

    def value(self, x, t=None, k=None):
        if k is None:
            k = 0 if t is None else self.grid.index_of(t)
        x = np.asarray(x, dtype=float)
        return float(x @ self.S2[k] @ x + 2.0 * x @ self.S1[k] + self.S0[k])


def _hermite(y0, y1, d0, d1, theta, h):
    t2 = theta * theta
    t3 = t2 * theta
    return (
        (2 * t3 - 3 * t2 + 1) * y0 + (t3 - 2 * t2 + theta) * h * d0
        + (-2 * t3 + 3 * t2) * y1 + (t3 - t2) * h * d1
    )


@dataclass
class FeedbackLaw:
    """Grid-indexed affine law, optionally wrapped by a ball projection.

    Between nodes gains are cubic-Hermite interpolated when node derivatives
    are available and linearly interpolated otherwise.
    """

    grid: TimeGrid
    K1: np.ndarray  # (n, nu, nx)
    K0: np.ndarray  # (n, nu)
    dK1: np.ndarray = None
    dK0: np.ndarray = None
    u_max: float = None

    def gains(self, t):
        g = self.grid
        s = (t - g.t_start) / g.h
        k = int(np.floor(s + 1e-9))
        if k >= g.n - 1:
            if s > g.n - 1 + 1e-6:
                raise ValueError(f"t={t} beyond law horizon")
            return self.K1[-1], self.K0[-1]
        if k < 0:
            raise ValueError(f"t={t} before law start")
        theta = s - k
        if theta < 1e-9:
            return self.K1[k], self.K0[k]
        if self.dK1 is None:
            return (
                (1 - theta) * self.K1[k] + theta * self.K1[k + 1],
                (1 - theta) * self.K0[k] + theta * self.K0[k + 1],
            )
        return (
            _hermite(self.K1[k], self.K1[k + 1], self.dK1[k], self.dK1[k + 1], theta, g.h),
            _hermite(self.K0[k], self.K0[k + 1], self.dK0[k], self.dK0[k + 1], theta, g.h),
        )

    def unconstrained(self, t, x):
        K1, K0 = self.gains(t)
        return K1 @ x + K0

    def __call__(self, t, x):
        u = self.unconstrained(t, x)
        return u if self.u_max is None else saturate(u, self.u_max)

    def projected(self, u_max):
        return FeedbackLaw(self.grid, self.K1, self.K0, self.dK1, self.dK0, float(u_max))

    def restrict(self, k0, k1):
        """Law on the sub-grid ``k0..k1`` (inclusive)."""
        sl = slice(k0, k1 + 1)
        return FeedbackLaw(
            self.grid.sub(k0, k1), self.K1[sl], self.K0[sl],
            None if self.dK1 is None else self.dK1[sl],
            None if self.dK0 is None else self.dK0[sl], self.u_max,
        )


def _T(M):
    return np.swapaxes(M, -1, -2)


def _s_derivs(S2, S1, K1, K0, A, BL, Q, R, qxd, xqx):
    """Time derivatives of (S2, S1, S0) under ``u = K1 x + K0``; batched over leading axes."""
    Ac = A + BL @ K1
    AcT = _T(Ac)
    K1T = _T(K1)
    bk0 = BL @ K0[..., None]
    rk0 = R @ K0[..., None]
    dS2 = -Q - S2 @ Ac - AcT @ S2 - K1T @ R @ K1
    dS1 = qxd - (S2 @ bk0 + AcT @ S1[..., None] + K1T @ rk0)[..., 0]
    dS0 = -xqx - 2.0 * (S1[..., None, :] @ bk0)[..., 0, 0] - (K0[..., None, :] @ rk0)[..., 0, 0]
    return dS2, dS1, dS0


class _SEquations:
    def __init__(self, A, BL, w, x_d, law=None):
        self.A = np.asarray(A, dtype=float)
        self.BL = np.asarray(BL, dtype=float)
        self.w = w
        self.x_d = x_d
        self.law = law
        self.n = self.A.shape[0]
        self.G = w.R_inv @ self.BL.T

    def unpack(self, y):
        n = self.n
        return y[: n * n].reshape(n, n), y[n * n: n * n + n], y[-1]

    def pack(self, S2, S1, S0):
        return np.concatenate([S2.ravel(), S1, [S0]])

    def terminal(self, t1):
        xd = self.x_d.value(t1)
        Qf = self.w.Q_f
        return self.pack(Qf, -Qf @ xd, float(xd @ Qf @ xd))

    def gains(self, t, S2, S1):
        if self.law is None:
            return -self.G @ S2, -self.G @ S1
        return self.law.gains(t)

    def __call__(self, t, y):
        S2, S1, _ = self.unpack(y)
        K1, K0 = self.gains(t, S2, S1)
        xd = self.x_d.value(t)
        Q = self.w.Q
        dS2, dS1, dS0 = _s_derivs(S2, S1, K1, K0, self.A, self.BL, Q, self.w.R, Q @ xd, xd @ Q @ xd)
        return self.pack(dS2, dS1, dS0)

    def tables(self, grid, ys):
        n = self.n
        S2 = ys[:, : n * n].reshape(-1, n, n)
        S2 = 0.5 * (S2 + _T(S2))
        return CostToGo(grid, S2, ys[:, n * n: n * n + n].copy(), ys[:, -1].copy())


def solve_unconstrained_lqt(A, BL, w, x_d, grid):
    """Optimal cost-to-go and feedback law on ``grid`` (no input constraint)."""
    eqs = _SEquations(A, BL, w, x_d)
    ctg = eqs.tables(grid, integrate_backward(eqs, grid, eqs.terminal(grid.t_end)))
    G = eqs.G
    K1 = -(G @ ctg.S2)
    K0 = -(ctg.S1 @ G.T)
    xd = x_d.values(grid.times)
    Q = w.Q
    dS2, dS1, _ = _s_derivs(
        ctg.S2, ctg.S1, K1, K0, eqs.A, eqs.BL, Q, w.R, xd @ Q, np.einsum("ki,ij,kj->k", xd, Q, xd)
    )
    law = FeedbackLaw(grid, K1, K0, -(G @ dS2), -(dS1 @ G.T))
    return ctg, law


def evaluate_policy(law, A, BL, w, x_d, grid=None):
    """Cost-to-go of the fixed affine ``law`` (its projection wrapper is ignored)."""
    grid = law.grid if grid is None else grid
    eqs = _SEquations(A, BL, w, x_d, law=law)
    return eqs.tables(grid, integrate_backward(eqs, grid, eqs.terminal(grid.t_end)))


def project_input(u_uc, w, u_max):
    """Closest admissible input to ``u_uc`` in the R-metric; closed form for R = R_u I."""
    if not w.scalar_input_weight:
        raise UnsupportedWeight("ball projection needs R to be a multiple of the identity")
    return saturate(u_uc, u_max)


def simulate_law(law, A, BL, x0, grid, u_max=None):
    """Forward closed loop ``x' = A x + BL sat(law(t, x))`` on ``grid``.

    Returns states, commanded inputs and applied inputs at every node.
    """
    A = np.asarray(A, dtype=float)
    BL = np.asarray(BL, dtype=float)
    x = np.asarray(x0, dtype=float)
    clip = (lambda u: u) if u_max is None else (lambda u: saturate(u, u_max))

    def f(t, x):
        return A @ x + BL @ clip(law(t, x))

    X = np.empty((grid.n, len(x)))
    U = np.empty((grid.n, BL.shape[1]))
    for k in range(grid.n):
        t = grid.node(k)
        X[k] = x
        U[k] = law(t, x)
        if k < grid.n - 1:
            x = rk4_step(f, t, x, grid.h)
    applied = U if u_max is None else np.array([saturate(u, u_max) for u in U])
    return X, U, applied


def stage_costs(t, x, u_applied, w, x_d):
    e = x - x_d.values(t)
    return np.einsum("ki,ij,kj->k", e, w.Q, e) + np.einsum("ki,ij,kj->k", u_applied, w.R, u_applied)


def quadrature_cost(traj, w, x_d):
    """Trapezoidal stage cost plus terminal cost of a logged trajectory.

    ``traj`` is a :class:`SimLog` (its ``bsat_u`` column is the applied
    input) or a tuple ``(t, x, u_applied)``.
    """
    if isinstance(traj, tuple):
        t, x, u = traj
    else:
        t, x, u = traj.t, traj.x_p, traj.bsat_u
    t = np.asarray(t, dtype=float)
    if len(t) == 0:
        return 0.0
    ell = stage_costs(t, np.asarray(x), np.asarray(u), w, x_d)
    dt = np.diff(t)
    running = float(np.sum(0.5 * dt * (ell[1:] + ell[:-1])))
    eT = x[-1] - x_d.value(t[-1])
    return running + float(eT @ w.Q_f @ eT)


def probe_states(n):
    """Origin plus the ``2n`` signed unit vectors."""
    eye = np.eye(n)
    return np.vstack([np.zeros(n), eye, -eye])


def policy_gap(law1, law2, A, BL, w, x_d, grid=None):
    """Largest |V1 - V2| at the start of the horizon over :func:`probe_states`."""
    v1 = evaluate_policy(law1, A, BL, w, x_d, grid)
    v2 = evaluate_policy(law2, A, BL, w, x_d, grid)
    return max(abs(v1.value(x, k=0) - v2.value(x, k=0)) for x in probe_states(len(v1.S1[0])))
