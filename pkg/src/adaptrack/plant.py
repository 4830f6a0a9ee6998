"""True saturated plant, reference model, exogenous signal and trajectory logs.

The simulator owns :class:`PlantSpec`; controllers only ever receive the
public pieces (``B_p``, ``u_max``) explicitly.
"""

import csv
from dataclasses import dataclass, field

import numpy as np

from .numeric import is_hurwitz


def saturate(u, u_max):
    """Radial projection of ``u`` onto the ball of radius ``u_max``."""
    u = np.asarray(u, dtype=float)
    nrm = float(np.sqrt(u @ u))
    if nrm <= u_max:
        return u
    return u * (u_max / nrm)


@dataclass(frozen=True)
class PlantSpec:
    A_p: np.ndarray
    B_p: np.ndarray
    lam: np.ndarray  # diagonal of Lambda
    u_max: float
    x0: np.ndarray

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A_p, dtype=float))
        B = np.atleast_2d(np.asarray(self.B_p, dtype=float))
        lam = np.atleast_1d(np.asarray(self.lam, dtype=float))
        x0 = np.atleast_1d(np.asarray(self.x0, dtype=float))
        nx, nu = B.shape
        if A.shape != (nx, nx) or lam.shape != (nu,) or x0.shape != (nx,):
            raise ValueError("inconsistent plant dimensions")
        if np.any(lam <= 0):
            raise ValueError("Lambda entries must be strictly positive")
        if not self.u_max > 0:
            raise ValueError("u_max must be positive")
        object.__setattr__(self, "A_p", A)
        object.__setattr__(self, "B_p", B)
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "x0", x0)
        object.__setattr__(self, "u_max", float(self.u_max))

    @property
    def n_x(self):
        return self.B_p.shape[0]

    @property
    def n_u(self):
        return self.B_p.shape[1]

    @property
    def Lambda(self):
        return np.diag(self.lam)

    @property
    def B_lambda(self):
        return self.B_p * self.lam


def plant_deriv(spec, x_p, u):
    return spec.A_p @ x_p + spec.B_lambda @ saturate(u, spec.u_max)


@dataclass(frozen=True)
class ReferenceModel:
    A_m: np.ndarray
    B_m: np.ndarray
    r_max: float = np.inf
    _pinv: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A_m, dtype=float))
        B = np.atleast_2d(np.asarray(self.B_m, dtype=float))
        if A.shape != (B.shape[0], B.shape[0]):
            raise ValueError("A_m and B_m dimensions disagree")
        if not is_hurwitz(A):
            raise ValueError("A_m must be Hurwitz")
        if np.linalg.matrix_rank(B) != B.shape[1]:
            raise ValueError("B_m must have full column rank")
        object.__setattr__(self, "A_m", A)
        object.__setattr__(self, "B_m", B)
        object.__setattr__(self, "_pinv", np.linalg.solve(B.T @ B, B.T))


def reference_input(model, x_d, xdot_d):
    """Reference command making the model track ``x_d``: (B^T B)^-1 B^T (-A x_d + xdot_d)."""
    return model._pinv @ (xdot_d - model.A_m @ x_d)


def reference_deriv(model, x_m, r):
    return model.A_m @ x_m + model.B_m @ r


class ExoSignal:
    """Sum-of-sinusoids signal, one list of ``(amplitude, omega, phase)`` per channel."""

    def __init__(self, channels):
        self.channels = [[tuple(float(v) for v in term) for term in ch] for ch in channels]
        amps, omegas, phases, rows = [], [], [], []
        for i, ch in enumerate(self.channels):
            for a, w, p in ch:
                amps.append(a)
                omegas.append(w)
                phases.append(p)
                rows.append(i)
        n = len(self.channels)
        self._amp = np.array(amps)
        self._omega = np.array(omegas)
        self._phase = np.array(phases)
        self._mix = np.zeros((n, len(amps)))
        self._mix[rows, np.arange(len(amps))] = 1.0
        self._mix_a = self._mix * self._amp
        self._mix_aw = self._mix * (self._amp * self._omega)
        self._self_check()

    @property
    def dim(self):
        return len(self.channels)

    def value(self, t):
        return self._mix_a @ np.sin(self._omega * t + self._phase)

    def deriv(self, t):
        return self._mix_aw @ np.cos(self._omega * t + self._phase)

    def both(self, t):
        arg = self._omega * t + self._phase
        return self._mix_a @ np.sin(arg), self._mix_aw @ np.cos(arg)

    def values(self, ts):
        ts = np.asarray(ts, dtype=float)
        return np.sin(np.outer(ts, self._omega) + self._phase) @ self._mix_a.T

    def derivs(self, ts):
        ts = np.asarray(ts, dtype=float)
        return np.cos(np.outer(ts, self._omega) + self._phase) @ self._mix_aw.T

    def _self_check(self):
        eps = 1e-5
        for t in (0.0, 0.37, 1.3):
            fd = (self.value(t + eps) - self.value(t - eps)) / (2 * eps)
            scale = 1.0 + float(np.sum(np.abs(self._amp) * self._omega**3))
            if np.max(np.abs(fd - self.deriv(t)), initial=0.0) > 1e-6 * scale:
                raise ValueError("analytic derivative disagrees with central difference")


def _fmt(v):
    return format(float(v), ".17g")


@dataclass
class SimLog:
    """Uniform-grid trajectory record.

    ``extras`` holds optional trailing column groups (the oracle trajectory
    in MPC logs) as ``name -> (rows, k)`` arrays.
    """

    t: np.ndarray
    x_p: np.ndarray
    x_m: np.ndarray
    x_d: np.ndarray
    u: np.ndarray
    bsat_u: np.ndarray
    du: np.ndarray
    theta_err: np.ndarray
    V: np.ndarray
    phase: list
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.t) > 1 and np.any(np.diff(self.t) <= 0):
            raise ValueError("log times must be strictly increasing")

    def __len__(self):
        return len(self.t)

    @property
    def step(self):
        return float(self.t[1] - self.t[0]) if len(self.t) > 1 else 0.0

    def _groups(self):
        groups = [
            ("x_p", self.x_p), ("x_m", self.x_m), ("x_d", self.x_d),
            ("u", self.u), ("bsat_u", self.bsat_u), ("du", self.du),
        ]
        return groups

    def columns(self):
        cols = ["t"]
        for name, arr in self._groups():
            cols += [f"{name}_{i}" for i in range(arr.shape[1])]
        cols += ["theta_err", "V", "phase"]
        for name, arr in self.extras.items():
            cols += [f"{name}_{i}" for i in range(arr.shape[1])]
        return cols

    def rows(self):
        groups = self._groups()
        extras = list(self.extras.values())
        for k in range(len(self.t)):
            row = [_fmt(self.t[k])]
            for _, arr in groups:
                row += [_fmt(v) for v in arr[k]]
            row += [_fmt(self.theta_err[k]), _fmt(self.V[k]), self.phase[k]]
            for arr in extras:
                row += [_fmt(v) for v in arr[k]]
            yield row

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(self.columns())
            w.writerows(self.rows())

    @classmethod
    def from_csv(cls, path):
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            body = list(reader)
        ph = header.index("phase")
        phase = [r[ph] for r in body]
        num = np.array([[float(v) for i, v in enumerate(r) if i != ph] for r in body])
        names = [h for i, h in enumerate(header) if i != ph]
        if num.size == 0:
            num = np.zeros((0, len(names)))
        col = {n: num[:, i] for i, n in enumerate(names)}

        def group(prefix):
            keys = [n for n in names if n.rsplit("_", 1)[0] == prefix and n.rsplit("_", 1)[1].isdigit()]
            return np.column_stack([col[k] for k in keys]) if keys else np.zeros((len(body), 0))

        fixed = {"x_p", "x_m", "x_d", "u", "bsat_u", "du"}
        extra_names = []
        for n in names[names.index("V") + 1:]:
            base = n.rsplit("_", 1)[0]
            if base not in extra_names:
                extra_names.append(base)
        return cls(
            t=col["t"], x_p=group("x_p"), x_m=group("x_m"), x_d=group("x_d"),
            u=group("u"), bsat_u=group("bsat_u"), du=group("du"),
            theta_err=col["theta_err"], V=col["V"], phase=phase,
            extras={n: group(n) for n in extra_names if n not in fixed},
        )

    def slice(self, start, stop=None, stride=1):
        sl = np.s_[start:stop:stride]
        return SimLog(
            self.t[sl], self.x_p[sl], self.x_m[sl], self.x_d[sl], self.u[sl],
            self.bsat_u[sl], self.du[sl], self.theta_err[sl], self.V[sl],
            self.phase[sl], {k: v[sl] for k, v in self.extras.items()},
        )

    @classmethod
    def concat(cls, first, second):
        """Join two phases; a duplicated boundary row is taken from ``second``."""
        if len(first) and len(second) and second.t[0] <= first.t[-1]:
            first = first.slice(0, int(np.searchsorted(first.t, second.t[0])))
        if len(second) == 0:
            return first
        if len(first) == 0:
            return second
        cat = np.concatenate
        keys = set(first.extras) | set(second.extras)
        extras = {}
        for k in keys:
            a = first.extras.get(k)
            b = second.extras.get(k)
            width = (a if a is not None else b).shape[1]
            a = a if a is not None else np.full((len(first), width), np.nan)
            b = b if b is not None else np.full((len(second), width), np.nan)
            extras[k] = cat([a, b])
        return cls(
            cat([first.t, second.t]), cat([first.x_p, second.x_p]),
            cat([first.x_m, second.x_m]), cat([first.x_d, second.x_d]),
            cat([first.u, second.u]), cat([first.bsat_u, second.bsat_u]),
            cat([first.du, second.du]), cat([first.theta_err, second.theta_err]),
            cat([first.V, second.V]), list(first.phase) + list(second.phase),
            {k: extras[k] for k in sorted(extras)},
        )
