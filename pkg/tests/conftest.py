"""Shared fixtures: ground states are expensive on one core, so they are cached on disk."""

import os
from pathlib import Path

import pytest

from fracspin.itebd import XxzParams, itebd_ground_state, load_imps, save_imps

STATE_CACHE = Path(os.environ.get("FRACSPIN_STATE_CACHE", Path(__file__).parent / ".state_cache"))


def cached_imps(delta: float, chi: int):
    """Converged iTEBD state for (delta, chi) with the default schedule, built once."""
    STATE_CACHE.mkdir(parents=True, exist_ok=True)
    path = STATE_CACHE / f"imps_d{delta:+.2f}_chi{chi}.zip"
    if path.exists():
        return load_imps(path)
    mps = itebd_ground_state(XxzParams(delta), chi, require_convergence=False)
    save_imps(path, mps)
    return load_imps(path)


@pytest.fixture(scope="session")
def xx_chi16():
    return cached_imps(0.0, 16)


@pytest.fixture(scope="session")
def xx_chi64():
    return cached_imps(0.0, 64)


def cached_mera(delta: float, chi: int = 4, T: int = 2):
    """Optimized ternary MERA for (delta, chi, T), built once."""
    from fracspin.mera import load_mera, optimize_mera, save_mera

    STATE_CACHE.mkdir(parents=True, exist_ok=True)
    path = STATE_CACHE / f"mera_d{delta:+.2f}_chi{chi}_T{T}.zip"
    if path.exists():
        return load_mera(path)
    mera = optimize_mera(XxzParams(delta), chi, T)
    save_mera(path, mera, {"energy_trace": mera.meta["energy_trace"]})
    return load_mera(path)


@pytest.fixture(scope="session")
def xx_mera():
    return cached_mera(0.0)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
