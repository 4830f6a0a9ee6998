"""Adapt-then-switch orchestration: MSAC on ``[0, T_adap]``, MPC afterwards."""

import json
import logging
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import InsufficientData, NonPositiveLambdaEstimate
from .lqt import quadrature_cost, solve_unconstrained_lqt
from .mpc import ModelEstimate, MpcConfig, injected_theta, optimality_gap, run_with_oracle
from .msac import TunerGains, TunerState, ideal_gains, pe_check, simulate_msac
from .numeric import TimeGrid
from .plant import SimLog

log = logging.getLogger(__name__)


@dataclass
class Handoff:
    """Everything the MPC phase needs from the adaptation phase."""

    t_switch: float
    x_p: np.ndarray
    x_m: np.ndarray
    tuner: TunerState
    theta_err_initial: float
    theta_err: float
    msac: object = None  # MsacRun, or None when T_adap == 0


@dataclass
class RunReport:
    theta_err_initial: float
    theta_err_switch: float
    t_switch: float
    pe_verdict: object  # True / False / None (not enough data)
    pe_min_eig: float
    learning_guaranteed: bool
    V_mpc: float
    V_star: float
    gap: float
    msac_substeps: int
    wall_clock: float
    artifacts: dict = field(default_factory=dict)

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump(asdict(self), fh, indent=2, sort_keys=True)
            fh.write("\n")


def mpc_config(cfg):
    s = cfg.schedule
    return MpcConfig(s.horizon, s.sample_interval, cfg.weights, cfg.plant.u_max, s.h)


def initial_theta(cfg):
    if cfg.tuner.init_theta is not None:
        return np.array(cfg.tuner.init_theta, dtype=float)
    return cfg.tuner.init_scale * ideal_gains(cfg.plant, cfg.reference).theta_a


def tuner_gains(cfg):
    t = cfg.tuner
    return TunerGains.design(cfg.reference.A_m, cfg.plant.B_p, t.gamma, t.beta, t.Q_lyap, t.mu)


def adapt(cfg):
    """Run the adaptation phase (or skip it when ``T_adap`` is zero)."""
    oracle = ideal_gains(cfg.plant, cfg.reference)
    tuner = TunerState.initial(initial_theta(cfg), tuner_gains(cfg))
    err0 = float(np.linalg.norm(tuner.theta - oracle.theta_a))
    s = cfg.schedule
    if s.T_adap == 0:
        x0 = cfg.plant.x0
        return Handoff(0.0, x0.copy(), x0.copy(), tuner, err0, err0)
    grid = TimeGrid.from_span(0.0, s.T_adap, s.h)
    run = simulate_msac(cfg.plant, cfg.reference, cfg.exo, tuner, grid)
    err = float(np.linalg.norm(run.final.theta - oracle.theta_a))
    return Handoff(grid.t_end, run.x_p.copy(), run.x_m.copy(), run.final, err0, err, run)


def pe_report(cfg, handoff):
    if handoff.msac is None:
        return None
    try:
        return pe_check(handoff.msac.phi_a, cfg.schedule.h, cfg.pe.window, cfg.pe.alpha)
    except InsufficientData as exc:
        log.warning("PE check skipped: %s", exc)
        return None


def strided(run_log, stride):
    """Every ``stride``-th row plus the final row (the hand-off state)."""
    if len(run_log) == 0:
        return run_log
    return SimLog.concat(run_log.slice(0, None, stride), run_log.slice(len(run_log) - 1))


def _dump_lambda_failure(out, handoff, exc):
    out.mkdir(parents=True, exist_ok=True)
    path = out / "lambda_failure.json"
    with open(path, "w") as fh:
        json.dump({
            "t_switch": handoff.t_switch,
            "lambda_hat": [float(v) for v in exc.lam_hat],
            "theta_hat": handoff.tuner.theta.tolist(),
            "x_p": handoff.x_p.tolist(),
            "theta_err": handoff.theta_err,
        }, fh, indent=2)
    return path


def switch_phase(cfg, handoff, theta_hat=None):
    """MPC and oracle runs over ``[t_switch, t_switch + T_MPC]``."""
    theta = handoff.tuner.theta if theta_hat is None else theta_hat
    est = ModelEstimate.from_theta(theta, cfg.reference, cfg.plant.B_p)
    oracle = ideal_gains(cfg.plant, cfg.reference)
    t0 = handoff.t_switch
    return run_with_oracle(
        est, mpc_config(cfg), cfg.plant, (t0, t0 + cfg.schedule.T_MPC), cfg.exo,
        x0=handoff.x_p, reference=cfg.reference, x_m0=handoff.x_m,
        theta_err=float(np.linalg.norm(theta - oracle.theta_a)),
    )


def run_pipeline(cfg, out_dir=None, plots=None, handoff=None):
    """Full adapt-then-switch experiment; writes CSV/JSON (and SVG) artifacts to ``out_dir``.

    A precomputed ``handoff`` (from :func:`adapt` on the same config) skips phase 1.
    """
    wall = time.perf_counter()
    out = Path(cfg.output.dir if out_dir is None else out_dir)
    out.mkdir(parents=True, exist_ok=True)
    handoff = adapt(cfg) if handoff is None else handoff
    pe = pe_report(cfg, handoff)
    try:
        mpc_log, oracle_log = switch_phase(cfg, handoff)
    except NonPositiveLambdaEstimate as exc:
        path = _dump_lambda_failure(out, handoff, exc)
        log.error("switch aborted; diagnostics in %s", path)
        raise
    w = cfg.weights
    V_mpc = quadrature_cost(mpc_log, w, cfg.exo)
    V_star = quadrature_cost(oracle_log, w, cfg.exo)
    gap = optimality_gap(mpc_log, oracle_log, w, cfg.exo)

    arts = {}
    msac_log = None
    if handoff.msac is not None:
        msac_log = strided(handoff.msac.log, cfg.output.log_stride)
        arts["msac_log"] = out / "msac_log.csv"
        msac_log.to_csv(arts["msac_log"])
    arts["mpc_log"] = out / "mpc_log.csv"
    mpc_log.to_csv(arts["mpc_log"])
    arts["oracle_log"] = out / "oracle_log.csv"
    oracle_log.to_csv(arts["oracle_log"])
    if pe is not None:
        arts["pe_report"] = out / "pe_report.csv"
        pe.to_csv(arts["pe_report"])
    arts["gap"] = out / "gap.csv"
    write_gap_csv(arts["gap"], [(handoff.theta_err, V_mpc, V_star, gap)])

    if cfg.output.plots if plots is None else plots:
        from .plots import emit_plots

        full = mpc_log if msac_log is None else SimLog.concat(msac_log, mpc_log)
        for p in emit_plots(full, out, u_max=cfg.plant.u_max):
            arts[p.stem] = p

    verdict = None if pe is None else bool(pe.verdict)
    report = RunReport(
        theta_err_initial=handoff.theta_err_initial,
        theta_err_switch=handoff.theta_err,
        t_switch=handoff.t_switch,
        pe_verdict=verdict,
        pe_min_eig=math.nan if pe is None else pe.min_level,
        learning_guaranteed=verdict is True,
        V_mpc=V_mpc,
        V_star=V_star,
        gap=gap,
        msac_substeps=0 if handoff.msac is None else handoff.msac.substeps,
        wall_clock=0.0,
        artifacts={},
    )
    if not report.learning_guaranteed:
        log.warning("regressor not persistently exciting: learning not guaranteed")
    arts["report"] = out / "report.json"
    report.artifacts = {k: str(v) for k, v in arts.items()}
    report.wall_clock = time.perf_counter() - wall
    report.to_json(arts["report"])
    return report


def write_gap_csv(path, rows, slope=None):
    with open(path, "w", newline="") as fh:
        fh.write("delta,V_mpc,V_star,gap\n")
        for row in rows:
            fh.write(",".join(format(float(v), ".17g") for v in row) + "\n")
        if slope is not None:
            fh.write(f"# slope,{format(float(slope), '.17g')}\n")


def fit_slope(deltas, gaps):
    """Least-squares slope of ``log|gap|`` against ``log delta`` over ``delta > 0``."""
    pts = [(d, g) for d, g in zip(deltas, gaps) if d > 0 and g != 0]
    if len(pts) < 2:
        return math.nan
    d, g = np.array(pts).T
    return float(np.polyfit(np.log(d), np.log(np.abs(g)), 1)[0])


def _threads(n):
    cap = os.environ.get("ADAPTRACK_THREADS")
    limit = int(cap) if cap else (os.cpu_count() or 1)
    return max(1, min(n, limit))


def sweep_delta(cfg, deltas, handoff=None):
    """Injected-error sweep from the hand-off state.

    Each point replaces the learned estimate by the true gains scaled so the
    Frobenius error equals ``delta``.  Returns ``(rows, slope)`` with rows
    ``(delta, V_mpc, V_star, gap)``.
    """
    handoff = adapt(cfg) if handoff is None else handoff
    ta = ideal_gains(cfg.plant, cfg.reference).theta_a
    w = cfg.weights

    def point(delta):
        mpc_log, oracle_log = switch_phase(cfg, handoff, injected_theta(ta, delta))
        V_mpc = quadrature_cost(mpc_log, w, cfg.exo)
        V_star = quadrature_cost(oracle_log, w, cfg.exo)
        return (float(delta), V_mpc, V_star, optimality_gap(mpc_log, oracle_log, w, cfg.exo))

    with ThreadPoolExecutor(max_workers=_threads(len(deltas))) as pool:
        rows = list(pool.map(point, deltas))
    return rows, fit_slope([r[0] for r in rows], [r[3] for r in rows])


def riccati_tables(cfg, handoff_time=None):
    """Optimal S-tables on the first MPC window with the true model."""
    s = cfg.schedule
    t0 = s.T_adap if handoff_time is None else handoff_time
    t0 = TimeGrid.from_span(0.0, t0, s.h).t_end if t0 > 0 else 0.0
    grid = TimeGrid.from_span(t0, t0 + min(s.horizon, s.T_MPC), s.h)
    ctg, _ = solve_unconstrained_lqt(cfg.plant.A_p, cfg.plant.B_lambda, cfg.weights, cfg.exo, grid)
    return ctg


def write_riccati_csv(ctg, path, stride=1):
    n = ctg.S2.shape[1]
    iu = [(i, j) for i in range(n) for j in range(i, n)]
    with open(path, "w", newline="") as fh:
        cols = ["t"] + [f"S2_{i}{j}" for i, j in iu] + [f"S1_{i}" for i in range(n)] + ["S0"]
        fh.write(",".join(cols) + "\n")
        idx = list(range(0, ctg.grid.n, stride))
        if idx[-1] != ctg.grid.n - 1:
            idx.append(ctg.grid.n - 1)
        for k in idx:
            vals = [ctg.grid.node(k)] + [ctg.S2[k, i, j] for i, j in iu] + list(ctg.S1[k]) + [ctg.S0[k]]
            fh.write(",".join(format(float(v), ".17g") for v in vals) + "\n")
