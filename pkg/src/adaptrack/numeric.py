"""Fixed-step integration, Lyapunov solves and small dense-matrix helpers."""

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import NotHurwitz, NotSymmetric, NumericalBlowup, SolveFailed

VectorField = Callable[[float, np.ndarray], np.ndarray]

SYM_TOL = 1e-12


def sym(M):
    """Symmetrize ``M``; rejects inputs asymmetric beyond ``SYM_TOL`` (relative)."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {M.shape}")
    scale = max(1.0, float(np.max(np.abs(M))) if M.size else 1.0)
    if np.max(np.abs(M - M.T), initial=0.0) > SYM_TOL * scale:
        raise NotSymmetric("matrix is not symmetric")
    return 0.5 * (M + M.T)


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid ``t_start + k*h`` for ``k = 0..n-1``.

    ``from_span`` snaps the end of the span to the nearest whole step, so
    ``t_end`` may differ from the requested value by up to ``h/2``.
    """

    t_start: float
    h: float
    n: int

    def __post_init__(self):
        if not self.h > 0:
            raise ValueError("grid step must be positive")
        if self.n < 1:
            raise ValueError("grid needs at least one node")

    @classmethod
    def from_span(cls, t_start, t_end, h):
        n = int(round((t_end - t_start) / h)) + 1
        return cls(float(t_start), float(h), max(n, 1))

    @property
    def t_end(self):
        return self.t_start + (self.n - 1) * self.h

    @property
    def times(self):
        return self.t_start + self.h * np.arange(self.n)

    def node(self, k):
        return self.t_start + k * self.h

    def index_of(self, t):
        """Index of the node at time ``t``; ``t`` must lie on the grid."""
        k = int(round((t - self.t_start) / self.h))
        if not 0 <= k < self.n or abs(self.node(k) - t) > 1e-6 * self.h:
            raise ValueError(f"t={t!r} is not a node of {self}")
        return k

    def sub(self, k0, k1):
        """Sub-grid covering nodes ``k0..k1`` inclusive."""
        return TimeGrid(self.node(k0), self.h, k1 - k0 + 1)


def _check_finite(v, t):
    if not np.all(np.isfinite(v)):
        raise NumericalBlowup(t)


def rk4_step(f: VectorField, t, x, h):
    """One classical Runge-Kutta step of size ``h`` (negative steps run backwards)."""
    k1 = f(t, x)
    _check_finite(k1, t)
    k2 = f(t + 0.5 * h, x + 0.5 * h * k1)
    _check_finite(k2, t + 0.5 * h)
    k3 = f(t + 0.5 * h, x + 0.5 * h * k2)
    _check_finite(k3, t + 0.5 * h)
    k4 = f(t + h, x + h * k3)
    _check_finite(k4, t + h)
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def integrate_forward(f: VectorField, grid: TimeGrid, x0):
    """States at every grid node, starting from ``x0`` at ``grid.t_start``."""
    x = np.asarray(x0, dtype=float)
    _check_finite(x, grid.t_start)
    out = np.empty((grid.n,) + x.shape)
    out[0] = x
    for k in range(grid.n - 1):
        x = rk4_step(f, grid.node(k), x, grid.h)
        out[k + 1] = x
    return out


def integrate_backward(f: VectorField, grid: TimeGrid, x_terminal):
    """Solve a terminal-value problem; row ``k`` of the result is x at ``grid.node(k)``."""
    x = np.asarray(x_terminal, dtype=float)
    _check_finite(x, grid.t_end)
    out = np.empty((grid.n,) + x.shape)
    out[-1] = x
    for k in range(grid.n - 1, 0, -1):
        x = rk4_step(f, grid.node(k), x, -grid.h)
        out[k - 1] = x
    return out


def eigvals(A):
    """Eigenvalues of a real square matrix; closed form for 2x2, LAPACK otherwise."""
    A = np.asarray(A, dtype=float)
    if A.shape == (2, 2):
        tr = A[0, 0] + A[1, 1]
        det = A[0, 0] * A[1, 1] - A[0, 1] * A[1, 0]
        disc = complex(0.25 * tr * tr - det) ** 0.5
        return np.array([0.5 * tr + disc, 0.5 * tr - disc])
    return np.linalg.eigvals(A)


def is_hurwitz(A):
    return bool(np.all(np.real(eigvals(A)) < 0.0))


def solve_lyapunov(A, Q):
    """Solve ``A^T P + P A = -Q`` for symmetric positive-definite ``P``.

    The equation is vectorized into an ``n^2`` linear system,
    ``(I kron A^T + A^T kron I) vec(P) = -vec(Q)``.
    """
    A = np.asarray(A, dtype=float)
    Q = sym(Q)
    n = A.shape[0]
    if A.shape != (n, n) or Q.shape != (n, n):
        raise ValueError("A and Q must be square of equal size")
    if not is_hurwitz(A):
        raise NotHurwitz("A has an eigenvalue with non-negative real part")
    if min_eig_sym(Q) <= 0.0:
        raise ValueError("Q must be positive definite")
    eye = np.eye(n)
    M = np.kron(eye, A.T) + np.kron(A.T, eye)
    try:
        vec_p = np.linalg.solve(M, -Q.reshape(-1, order="F"))
    except np.linalg.LinAlgError as exc:
        raise SolveFailed(str(exc)) from exc
    P = vec_p.reshape((n, n), order="F")
    P = 0.5 * (P + P.T)
    if not np.all(np.isfinite(P)):
        raise SolveFailed("vectorized Lyapunov system produced non-finite values")
    return P


def min_eig_sym(M):
    """Smallest eigenvalue of a symmetric matrix."""
    return float(np.linalg.eigvalsh(sym(M))[0])
