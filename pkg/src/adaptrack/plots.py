"""Static SVG figures from a run log."""

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .errors import EmptyOrDegenerateLog  # noqa: E402

plt.rcParams["svg.hashsalt"] = "adaptrack"


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path


def _rows(log, phase):
    return np.array([p == phase for p in log.phase], dtype=bool)


def _states(log, m, path):
    n = log.x_p.shape[1]
    fig, axes = plt.subplots(n, 1, figsize=(8, 2.4 * n), sharex=True, squeeze=False)
    t = log.t[m]
    for i, ax in enumerate(axes[:, 0]):
        ax.plot(t, log.x_d[m, i], "k:", lw=1, label="x_d")
        ax.plot(t, log.x_m[m, i], lw=1, label="x_m")
        ax.plot(t, log.x_p[m, i], lw=1, label="x_p")
        ax.set_ylabel(f"x{i + 1}")
        ax.legend(loc="upper right", fontsize="small")
    axes[-1, 0].set_xlabel("t [s]")
    return _save(fig, path)


def _inputs(log, m, path, u_max):
    n = log.u.shape[1]
    fig, axes = plt.subplots(n, 1, figsize=(8, 2.4 * n), sharex=True, squeeze=False)
    t = log.t[m]
    for i, ax in enumerate(axes[:, 0]):
        ax.plot(t, log.u[m, i], lw=1, label="u")
        ax.plot(t, log.bsat_u[m, i], lw=1, label="sat(u)")
        if u_max is not None:
            for s in (1, -1):
                ax.axhline(s * u_max, color="r", ls="--", lw=0.8)
        ax.set_ylabel(f"u{i + 1}")
        ax.legend(loc="upper right", fontsize="small")
    axes[-1, 0].set_xlabel("t [s]")
    return _save(fig, path)


def _theta_error(log, m, path):
    fig, ax = plt.subplots(figsize=(8, 3))
    err = log.theta_err[m]
    pos = err > 0
    ax.semilogy(log.t[m][pos], err[pos], lw=1)
    ax.set_xlabel("t [s]")
    ax.set_ylabel("||Theta_a error||_F")
    return _save(fig, path)


def _overlay(log, m, path, name, star, ylabel):
    cur = getattr(log, name)
    ref = log.extras[star]
    n = cur.shape[1]
    fig, axes = plt.subplots(n, 1, figsize=(8, 2.4 * n), sharex=True, squeeze=False)
    t = log.t[m]
    for i, ax in enumerate(axes[:, 0]):
        ax.plot(t, ref[m, i], "k--", lw=1, label="oracle")
        ax.plot(t, cur[m, i], lw=1, label="MPC")
        ax.set_ylabel(f"{ylabel}{i + 1}")
        ax.legend(loc="upper right", fontsize="small")
    axes[-1, 0].set_xlabel("t [s]")
    return _save(fig, path)


def emit_plots(log, out_dir, u_max=None):
    """Write the adaptation-phase and MPC-phase figures; returns the file paths."""
    if len(log) < 2:
        raise EmptyOrDegenerateLog(f"need at least two rows, got {len(log)}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = []
    first = _rows(log, "MSAC")
    second = _rows(log, "MPC")
    if first.sum() < 2:
        first = ~second if (~second).sum() >= 2 else second
    files.append(_states(log, first, out / "states.svg"))
    files.append(_inputs(log, first, out / "inputs.svg", u_max))
    if np.any(np.isfinite(log.theta_err[first])):
        files.append(_theta_error(log, first, out / "theta_error.svg"))
    if second.sum() >= 2 and "x_star" in log.extras and "u_star" in log.extras:
        files.append(_overlay(log, second, out / "mpc_states.svg", "x_p", "x_star", "x"))
        files.append(_overlay(log, second, out / "mpc_inputs.svg", "bsat_u", "u_star", "u"))
    return files
