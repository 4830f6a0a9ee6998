import dataclasses
import math
import time

import numpy as np
import pytest

from adaptrack.config import default_config_path, parse_config

# Acceptance verdict lines, echoed in the terminal summary so they survive output capture.
VERDICTS = []


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in VERDICTS:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def base():
    return parse_config(default_config_path())


def variant(cfg, **changes):
    """Copy of ``cfg`` with dotted-path overrides, e.g. ``schedule__T_adap=1.0``."""
    groups = {}
    for key, val in changes.items():
        block, name = key.split("__")
        groups.setdefault(block, {})[name] = val
    return dataclasses.replace(
        cfg, **{b: dataclasses.replace(getattr(cfg, b), **kw) for b, kw in groups.items()}
    )


@pytest.fixture(scope="session")
def short_cfg(base):
    """Two-pi adaptation, one second of MPC; enough to exercise every stage quickly."""
    return variant(
        base,
        schedule__T_adap=2 * math.pi, schedule__T_MPC=1.0, schedule__horizon=1.0,
        output__plots=False,
    )


@pytest.fixture(scope="session")
def full_run(base, tmp_path_factory):
    """Default configuration, end to end, run once per session.

    Returns ``(cfg, handoff, report, out_dir, adapt_seconds)``.
    """
    from adaptrack.pipeline import adapt, run_pipeline

    out = tmp_path_factory.mktemp("full")
    t0 = time.perf_counter()
    handoff = adapt(base)
    elapsed = time.perf_counter() - t0
    report = run_pipeline(base, out_dir=out, plots=True, handoff=handoff)
    return base, handoff, report, out, elapsed


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
