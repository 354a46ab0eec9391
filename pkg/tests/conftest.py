"""
Test configuration and fixtures.
"""
import numpy as np
import pytest
from fastapi.testclient import TestClient

from app.main import create_app
from app.core.config import get_settings
from app.services.channel import DdChannel, DdPath, load_profile
from app.services.dd_core import OtfsGrid
from app.services.simulation_service import SimulationService


@pytest.fixture
def app():
    """Create test FastAPI app."""
    return create_app()


@pytest.fixture
def client(app):
    """Create test client."""
    return TestClient(app)


@pytest.fixture
def settings():
    """Get test settings."""
    return get_settings()


@pytest.fixture
def simulation_service():
    """Create a single-process simulation service."""
    return SimulationService(workers=1)


@pytest.fixture
def rng():
    """Seeded generator so every test is reproducible."""
    return np.random.default_rng(1234)


@pytest.fixture
def small_grid():
    """4 x 4 grid (MN = 16)."""
    return OtfsGrid(m=4, n=4)


@pytest.fixture
def small_channel(small_grid):
    """Three paths on the 4 x 4 grid, including a negative Doppler bin."""
    paths = [
        DdPath(gain=0.8 + 0.1j, delay_bin=0, doppler_bin=0),
        DdPath(gain=-0.3 + 0.4j, delay_bin=1, doppler_bin=-1),
        DdPath(gain=0.2 - 0.25j, delay_bin=2, doppler_bin=1),
    ]
    return DdChannel.from_paths(small_grid, paths)


@pytest.fixture
def medium_channel():
    """Four paths on an 8 x 8 grid (MN = 64), alpha = 4."""
    grid = OtfsGrid(m=8, n=8)
    paths = [
        DdPath(gain=0.7 - 0.2j, delay_bin=0, doppler_bin=1),
        DdPath(gain=0.4 + 0.3j, delay_bin=1, doppler_bin=-2),
        DdPath(gain=-0.25 + 0.2j, delay_bin=3, doppler_bin=3),
        DdPath(gain=0.15j, delay_bin=2, doppler_bin=0),
    ]
    return DdChannel.from_paths(grid, paths)


@pytest.fixture
def eva_profile():
    """Bundled EVA profile."""
    return load_profile("eva")


@pytest.fixture
def flat_profile_file(tmp_path):
    """Single-tap profile: a flat, time-invariant channel."""
    path = tmp_path / "flat.pdp"
    path.write_text("# delay_ns power_dB\n0 0\n")
    return str(path)


@pytest.fixture
def sample_sim_config():
    """Small BER sweep request."""
    return {
        "m": 16,
        "n": 8,
        "scheme": "otfs",
        "receiver": "fast",
        "qam_order": 4,
        "profile": "eva",
        "speed_kmh": 500.0,
        "fc_hz": 4e9,
        "snr_db": [10.0, 20.0],
        "frames": 2,
        "seed": 3
    }
