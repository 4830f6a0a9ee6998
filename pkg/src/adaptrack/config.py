"""Experiment configuration files (TOML, one table per block).

Times may be written as numbers or as multiples of pi (``"32*pi"``).
Unknown keys are rejected; every error names the dotted key and, where it
can be found, the line it sits on.
"""

import math
import re
import sys
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import ConfigError, NoMatchingSolution
from .lqt import LQTWeights
from .msac import ideal_gains
from .numeric import is_hurwitz
from .plant import ExoSignal, PlantSpec, ReferenceModel

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


@dataclass(frozen=True)
class TunerSettings:
    gamma: float = 1.0
    beta: float = 1.0
    Q_lyap: np.ndarray = None
    init_scale: float = 0.8
    init_theta: np.ndarray = None
    mu: float = None


@dataclass(frozen=True)
class Schedule:
    h: float
    T_adap: float
    T_MPC: float
    sample_interval: float
    horizon: float


@dataclass(frozen=True)
class PESettings:
    window: float = 2 * math.pi
    alpha: float = 0.1


@dataclass(frozen=True)
class OutputSettings:
    dir: str = "out"
    plots: bool = True
    log_stride: int = 10


@dataclass(frozen=True)
class ExperimentConfig:
    plant: PlantSpec
    reference: ReferenceModel
    weights: LQTWeights
    exo: ExoSignal
    tuner: TunerSettings
    schedule: Schedule
    pe: PESettings
    output: OutputSettings
    seed: int = 0
    source: str = None


_KEYS = {
    "plant": {"A_p": True, "B_p": True, "lambda": True, "u_max": True, "x0": True},
    "reference": {"A_m": True, "B_m": True, "r_max": False},
    "weights": {"Q": True, "R": True, "Q_f": False},
    "exo": {"channels": True},
    "tuner": {"gamma": False, "beta": False, "Q_lyap": False, "init_scale": False,
              "init_theta": False, "mu": False},
    "schedule": {"h": False, "T_adap": True, "T_MPC": True, "sample_interval": False,
                 "horizon": False},
    "pe": {"window": False, "alpha": False},
    "output": {"dir": False, "plots": False, "log_stride": False},
}
_TOP = {"seed"}

_PI_RE = re.compile(r"^\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)?\s*\*?\s*pi\s*$")


def default_config_path():
    return Path(str(resources.files("adaptrack") / "data" / "baseline.toml"))


def _key_lines(text):
    """Map dotted keys (and table names) to 1-based line numbers."""
    lines = {}
    section = None
    for no, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        m = re.match(r"^\[\s*([A-Za-z0-9_.]+)\s*\]$", line)
        if m:
            section = m.group(1)
            lines.setdefault(section, no)
            continue
        m = re.match(r"^([A-Za-z0-9_.\"]+)\s*=", line)
        if m:
            key = m.group(1).replace('"', "")
            lines.setdefault(f"{section}.{key}" if section else key, no)
    return lines


class _Reader:
    def __init__(self, data, text):
        self.data = data
        self.lines = _key_lines(text)

    def line(self, key):
        if key in self.lines:
            return self.lines[key]
        return self.lines.get(key.split(".")[0])

    def fail(self, key, msg):
        raise ConfigError(key, msg, self.line(key))

    def get(self, section, name, default=None):
        key = f"{section}.{name}"
        table = self.data.get(section, {})
        if name not in table:
            if _KEYS[section][name]:
                self.fail(key, "is missing")
            return default
        return table[name]

    def number(self, section, name, default=None, positive=False, nonneg=False, time=False):
        key = f"{section}.{name}"
        v = self.get(section, name, default)
        if v is None:
            return None
        if time and isinstance(v, str):
            m = _PI_RE.match(v)
            if not m:
                self.fail(key, f"cannot read {v!r} as a time (number or '<k>*pi')")
            v = float(m.group(1) or 1.0) * math.pi
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            self.fail(key, f"must be a number, got {v!r}")
        v = float(v)
        if not math.isfinite(v):
            self.fail(key, "must be finite")
        if positive and not v > 0:
            self.fail(key, "must be positive")
        if nonneg and v < 0:
            self.fail(key, "must be non-negative")
        return v

    def array(self, section, name, shape=None, ndim=None, default=None):
        key = f"{section}.{name}"
        v = self.get(section, name, default)
        if v is None:
            return None
        try:
            arr = np.array(v, dtype=float)
        except (TypeError, ValueError):
            self.fail(key, "must be a numeric (nested) list with rectangular rows")
        if ndim is not None and arr.ndim != ndim:
            self.fail(key, f"must be {'a matrix' if ndim == 2 else 'a vector'}, got {arr.ndim} dimensions")
        if shape is not None and arr.shape != tuple(shape):
            self.fail(key, f"has shape {arr.shape}, expected {tuple(shape)}")
        if not np.all(np.isfinite(arr)):
            self.fail(key, "must be finite")
        return arr


def _check_sym(rd, key, M, pd=False):
    if np.max(np.abs(M - M.T), initial=0.0) > 1e-12 * max(1.0, np.max(np.abs(M))):
        rd.fail(key, "not symmetric")
    lo = float(np.linalg.eigvalsh(M)[0])
    if pd and lo <= 0:
        rd.fail(key, "not PD")
    if lo < -1e-12:
        rd.fail(key, "not PSD")


def parse_config(path):
    path = Path(path)
    text = path.read_text()
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(str(path), f"is not valid TOML: {exc}") from exc
    try:
        return config_from_dict(data, text, source=str(path))
    except ValueError as exc:
        raise ConfigError(str(path), f"is inconsistent: {exc}") from exc


def config_from_dict(data, text="", source=None):
    rd = _Reader(data, text)
    for k, v in data.items():
        if k in _TOP:
            continue
        if k not in _KEYS:
            rd.fail(k, "is not a recognised section")
        if not isinstance(v, dict):
            rd.fail(k, "must be a table")
        for name in v:
            if name not in _KEYS[k]:
                rd.fail(f"{k}.{name}", "is not a recognised key")
    for sec in _KEYS:
        if any(_KEYS[sec].values()) and sec not in data:
            first = next(n for n, req in _KEYS[sec].items() if req)
            rd.fail(f"{sec}.{first}", "is missing")

    A_p = rd.array("plant", "A_p", ndim=2)
    n_x = A_p.shape[0]
    if A_p.shape != (n_x, n_x):
        rd.fail("plant.A_p", f"has shape {A_p.shape}, expected square")
    B_p = rd.array("plant", "B_p", ndim=2)
    if B_p.shape[0] != n_x:
        rd.fail("plant.B_p", f"has {B_p.shape[0]} rows, expected {n_x}")
    n_u = B_p.shape[1]
    lam = rd.array("plant", "lambda", shape=(n_u,))
    if np.any(lam <= 0):
        rd.fail("plant.lambda", "entries must be strictly positive")
    u_max = rd.number("plant", "u_max", positive=True)
    x0 = rd.array("plant", "x0", shape=(n_x,))
    plant = PlantSpec(A_p, B_p, lam, u_max, x0)

    A_m = rd.array("reference", "A_m", shape=(n_x, n_x))
    if not is_hurwitz(A_m):
        rd.fail("reference.A_m", "not Hurwitz")
    B_m = rd.array("reference", "B_m", shape=(n_x, n_u))
    if np.linalg.matrix_rank(B_m) != n_u:
        rd.fail("reference.B_m", "must have full column rank")
    r_max = rd.number("reference", "r_max", positive=True)
    r_max = math.inf if r_max is None else r_max
    reference = ReferenceModel(A_m, B_m, r_max)
    try:
        ideal_gains(plant, reference)
    except NoMatchingSolution as exc:
        rd.fail("reference.A_m", f"unreachable from the plant: {exc}")

    Q = rd.array("weights", "Q", shape=(n_x, n_x))
    _check_sym(rd, "weights.Q", Q)
    R = rd.array("weights", "R", shape=(n_u, n_u))
    _check_sym(rd, "weights.R", R, pd=True)
    if not np.allclose(R, R[0, 0] * np.eye(n_u), rtol=0, atol=1e-12 * R[0, 0]):
        rd.fail("weights.R", "must be a positive multiple of the identity")
    Q_f = rd.array("weights", "Q_f", shape=(n_x, n_x), default=Q.tolist())
    _check_sym(rd, "weights.Q_f", Q_f)
    weights = LQTWeights(Q, R, Q_f)

    channels = rd.get("exo", "channels")
    if not isinstance(channels, list) or len(channels) != n_x:
        rd.fail("exo.channels", f"must list one channel per state ({n_x})")
    for ch in channels:
        if not isinstance(ch, list) or any(
            not isinstance(term, list) or len(term) != 3
            or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in term)
            for term in ch
        ):
            rd.fail("exo.channels", "each channel is a list of [amplitude, omega, phase]")
    exo = ExoSignal(channels)

    Q_lyap = rd.array("tuner", "Q_lyap", shape=(n_x, n_x), default=(2.0 * np.eye(n_x)).tolist())
    _check_sym(rd, "tuner.Q_lyap", Q_lyap, pd=True)
    init_theta = rd.array("tuner", "init_theta", shape=(n_u, n_x + 2 * n_u))
    if init_theta is not None and "init_scale" in data.get("tuner", {}):
        rd.fail("tuner.init_theta", "conflicts with tuner.init_scale; give one of them")
    tuner = TunerSettings(
        gamma=rd.number("tuner", "gamma", 1.0, positive=True),
        beta=rd.number("tuner", "beta", 1.0, positive=True),
        Q_lyap=Q_lyap,
        init_scale=rd.number("tuner", "init_scale", 0.8),
        init_theta=init_theta,
        mu=rd.number("tuner", "mu", None, positive=True),
    )
    if tuner.mu is not None:
        from .msac import TunerGains

        try:
            TunerGains.design(A_m, B_p, tuner.gamma, tuner.beta, Q_lyap, tuner.mu)
        except ValueError as exc:
            rd.fail("tuner.mu", str(exc))

    h = rd.number("schedule", "h", 1e-3, positive=True)
    T_adap = rd.number("schedule", "T_adap", nonneg=True, time=True)
    T_MPC = rd.number("schedule", "T_MPC", positive=True, time=True)
    sample = rd.number("schedule", "sample_interval", 0.1, positive=True, time=True)
    horizon = rd.number("schedule", "horizon", T_MPC, positive=True, time=True)
    for name, v in (("T_MPC", T_MPC), ("sample_interval", sample), ("horizon", horizon)):
        ratio = v / h
        if abs(ratio - round(ratio)) > 1e-6:
            rd.fail(f"schedule.{name}", f"must be a whole number of steps h={h:g}")
    if sample > horizon:
        rd.fail("schedule.sample_interval", "exceeds schedule.horizon")
    schedule = Schedule(h, T_adap, T_MPC, sample, horizon)

    window = rd.number("pe", "window", 2 * math.pi, positive=True, time=True)
    if window / h + 1 < 10:
        rd.fail("pe.window", "must span at least 10 steps")
    pe = PESettings(window, rd.number("pe", "alpha", 0.1, positive=True))

    out_dir = rd.get("output", "dir", "out")
    if not isinstance(out_dir, str):
        rd.fail("output.dir", "must be a string")
    plots = rd.get("output", "plots", True)
    if not isinstance(plots, bool):
        rd.fail("output.plots", "must be true or false")
    stride = rd.get("output", "log_stride", 10)
    if isinstance(stride, bool) or not isinstance(stride, int) or stride < 1:
        rd.fail("output.log_stride", "must be a positive integer")
    output = OutputSettings(out_dir, plots, stride)

    seed = data.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int):
        rd.fail("seed", "must be an integer")
    return ExperimentConfig(plant, reference, weights, exo, tuner, schedule, pe, output, seed, source)
