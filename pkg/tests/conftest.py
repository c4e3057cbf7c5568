import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from oddm_isac.scenario import ScenarioConfig

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile(
    "default", deadline=None, max_examples=40,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")

# criterion id -> (passed, detail), filled by test_acceptance.py
ACCEPTANCE_RESULTS: dict = {}


def tiny_config(**overrides) -> ScenarioConfig:
    """M=4, N=2, 2x2 arrays: small enough for dense Kronecker oracles."""
    base = dict(num_delay_bins=4, num_doppler_bins=2, pulse_half_span=1, cp_length=3,
                num_tx_antennas=4, num_rx_antennas=4, upa_y=2, upa_z=2,
                num_rf_chains_tx=2, num_rf_chains_rx=2, num_streams=2,
                comm_upa_y=2, comm_upa_z=2)
    base.update(overrides)
    return ScenarioConfig(**base)


def small_config(**overrides) -> ScenarioConfig:
    """M=8, N=4 with a 4x4 array; the default target still fits the CP."""
    base = dict(num_delay_bins=8, num_doppler_bins=4, pulse_half_span=3, cp_length=8,
                num_tx_antennas=16, num_rx_antennas=16, upa_y=4, upa_z=4)
    base.update(overrides)
    return ScenarioConfig(**base)


@pytest.fixture
def cfg():
    return ScenarioConfig()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_RESULTS):
        ok, detail = ACCEPTANCE_RESULTS[key]
        terminalreporter.write_line(f"criterion {key:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
