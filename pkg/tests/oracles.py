"""Independent reference computations (scipy-based) used by the tests."""

import numpy as np
import scipy.linalg


def zoh_dp_cost(A, B, Q, R, Q_f, x_d, t0, t1, h, probes):
    """Optimal cost from each probe state via a discrete value recursion.

    Inputs are held constant over each step of length ``h``.  The intra-step
    state is exact (matrix exponentials) and the running cost over a step is
    Simpson's rule on that exact trajectory, so the recursion converges to the
    continuous-time optimum as ``h`` shrinks.
    """
    n, m = B.shape
    N = int(round((t1 - t0) / h))

    def transition(s):
        blk = np.zeros((n + m, n + m))
        blk[:n, :n] = A
        blk[:n, n:] = B
        E = scipy.linalg.expm(blk * s)
        return E[:n, :n], E[:n, n:]

    Phi_h, Gam_h = transition(h)
    Phi_m, Gam_m = transition(h / 2)
    # augmented variable z = [x, u, 1]; value V(x) = [x, 1]' P [x, 1]
    xd1 = x_d.value(t1)
    P = np.zeros((n + 1, n + 1))
    P[:n, :n] = Q_f
    P[:n, n] = P[n, :n] = -Q_f @ xd1
    P[n, n] = xd1 @ Q_f @ xd1
    for k in range(N - 1, -1, -1):
        tk = t0 + k * h
        H = np.zeros((n + m + 1, n + m + 1))
        for w, (Ph, Gm), s in ((1 / 6, (np.eye(n), np.zeros((n, m))), 0.0),
                               (4 / 6, (Phi_m, Gam_m), h / 2),
                               (1 / 6, (Phi_h, Gam_h), h)):
            M = np.hstack([Ph, Gm, -x_d.value(tk + s)[:, None]])
            H += w * h * (M.T @ Q @ M)
        H[n:n + m, n:n + m] += h * R
        Nz = np.zeros((n + 1, n + m + 1))
        Nz[:n, :n] = Phi_h
        Nz[:n, n:n + m] = Gam_h
        Nz[n, n + m] = 1.0
        H += Nz.T @ P @ Nz
        xi = np.r_[np.arange(n), n + m]
        ui = np.arange(n, n + m)
        Hxx = H[np.ix_(xi, xi)]
        Hxu = H[np.ix_(xi, ui)]
        Huu = H[np.ix_(ui, ui)]
        P = Hxx - Hxu @ np.linalg.solve(Huu, Hxu.T)
        P = 0.5 * (P + P.T)
    return np.array([np.r_[x, 1.0] @ P @ np.r_[x, 1.0] for x in probes])


def ball_samples(n_points, radius, ring_fraction=0.05):
    """Quasi-uniform points covering a closed 2-D disc.

    A sunflower spiral fills the interior; an evenly spaced ring covers the
    boundary, where constrained minimisers live.
    """
    n_ring = max(8, int(ring_fraction * n_points))
    n_in = n_points - n_ring
    i = np.arange(n_in) + 0.5
    r = radius * np.sqrt(i / n_in)
    th = i * np.pi * (3.0 - np.sqrt(5.0))
    ring = np.linspace(0.0, 2 * np.pi, n_ring, endpoint=False)
    return np.vstack([
        np.column_stack([r * np.cos(th), r * np.sin(th)]),
        radius * np.column_stack([np.cos(ring), np.sin(ring)]),
    ])
