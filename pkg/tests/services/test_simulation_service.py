"""
Tests for the simulation service.
"""
from unittest.mock import patch

import numpy as np
import pytest
from pydantic import ValidationError

from app.core.exceptions import NumericalSingularityError, ProfileNotFoundError, SimulationError
from app.models.requests import ReceiverKind, SimConfig
from app.services.channel import DdChannel, DdPath, load_profile
from app.services.dd_core import OtfsGrid
from app.services.equalizer import LmmseFastReceiver
from app.services.modem import SchemeKind
from app.services.simulation_service import (
    BER_COLUMNS,
    SimulationService,
    frame_seed,
    noise_variance,
    simulate_frame,
)


class TestFrameHelpers:
    """Test cases for per-frame seeding and noise scaling."""

    def test_frame_seed(self):
        """Test per-frame seed derivation."""
        assert frame_seed(5, 3) == 6
        assert frame_seed(0, 7) == 7

    def test_noise_variance(self, sample_sim_config):
        """Noise variance follows Es/N0 and the optional CP scaling."""
        cfg = SimConfig(**sample_sim_config)
        ch = DdChannel.from_paths(OtfsGrid(m=16, n=8), [DdPath(gain=1.0, delay_bin=3, doppler_bin=0)])
        assert noise_variance(10.0, cfg, ch) == pytest.approx(0.1)
        cfg_cp = cfg.model_copy(update={"snr_includes_cp": True})
        assert noise_variance(10.0, cfg_cp, ch) == pytest.approx(0.1 * (128 + 3) / 128)

    def test_same_frame_same_payload_across_snr(self, sample_sim_config, eva_profile):
        """Common random numbers: bits and channel depend on the frame only."""
        cfg = SimConfig(**sample_sim_config)
        low = simulate_frame(cfg, eva_profile, 0.0, frame_index=1)
        high = simulate_frame(cfg, eva_profile, 30.0, frame_index=1)
        assert low.bits_total == high.bits_total
        assert low.bit_errors >= high.bit_errors

    def test_fast_and_dense_decide_identically(self, eva_profile):
        """Fast and dense receivers decide identically seed for seed."""
        params = dict(m=32, n=16, profile="eva", snr_db=[10.0], seed=11)
        fast_cfg = SimConfig(receiver=ReceiverKind.FAST, **params)
        dense_cfg = SimConfig(receiver=ReceiverKind.DENSE, **params)
        for scheme in (SchemeKind.OTFS, SchemeKind.OFDM):
            for idx in range(3):
                fast = simulate_frame(fast_cfg.model_copy(update={"scheme": scheme}), eva_profile, 10.0, idx)
                dense = simulate_frame(dense_cfg.model_copy(update={"scheme": scheme}), eva_profile, 10.0, idx)
                np.testing.assert_array_equal(fast.decided, dense.decided)

    def test_cp_transmission(self, sample_sim_config, eva_profile):
        """Test frame simulation with a cyclic prefix."""
        cfg = SimConfig(**{**sample_sim_config, "use_cp": True})
        outcome = simulate_frame(cfg, eva_profile, 40.0, frame_index=0)
        assert outcome.bits_total == 16 * 8 * 2

    def test_retries_exhausted(self, sample_sim_config, eva_profile):
        """A frame gives up after max_retries singular redraws."""
        cfg = SimConfig(**sample_sim_config)
        with patch(
            'app.services.simulation_service.LmmseFastReceiver',
            side_effect=NumericalSingularityError("zero pivot")
        ) as mock_receiver:
            with pytest.raises(SimulationError):
                simulate_frame(cfg, eva_profile, 10.0, frame_index=0, max_retries=2)
        assert mock_receiver.call_count == 3

    def test_retry_redraws_channel(self, sample_sim_config, eva_profile):
        """A singular draw is redrawn with a new channel."""
        cfg = SimConfig(**sample_sim_config)
        channels = []

        def flaky(ch, *args, **kwargs):
            channels.append(ch)
            if len(channels) == 1:
                raise NumericalSingularityError("zero pivot")
            return LmmseFastReceiver(ch, *args, **kwargs)

        with patch('app.services.simulation_service.LmmseFastReceiver', side_effect=flaky):
            outcome = simulate_frame(cfg, eva_profile, 10.0, frame_index=0, max_retries=2)

        assert outcome.attempts == 2
        assert not np.array_equal(channels[0].gains, channels[1].gains)


class TestSimulationService:
    """Test cases for SimulationService."""

    def test_error_free_at_high_snr(self, simulation_service, flat_profile_file):
        """Flat channel at 60 dB makes no errors."""
        cfg = SimConfig(m=16, n=8, profile=flat_profile_file, speed_kmh=0.0, snr_db=[60.0], frames=4, seed=2)
        result = simulation_service.run_ber_sweep(cfg)
        assert result.points[0].bit_errors == 0
        assert result.points[0].ber == 0.0

    def test_bit_conservation(self, simulation_service, sample_sim_config):
        """Every point counts all transmitted bits."""
        cfg = SimConfig(**{**sample_sim_config, "qam_order": 16})
        result = simulation_service.run_ber_sweep(cfg)
        for point in result.points:
            assert point.bits_total == cfg.frames * 16 * 8 * 4
            assert point.frames == cfg.frames
            assert 0 <= point.bit_errors <= point.bits_total

    def test_deterministic(self, simulation_service, sample_sim_config, tmp_path):
        """Same config and seed give byte-identical CSV."""
        first = tmp_path / "a.csv"
        second = tmp_path / "b.csv"
        a = simulation_service.run_ber_sweep(SimConfig(**{**sample_sim_config, "output": str(first)}))
        b = simulation_service.run_ber_sweep(SimConfig(**{**sample_sim_config, "output": str(second)}))
        assert a.points == b.points
        assert first.read_bytes() == second.read_bytes()

    def test_csv_columns(self, simulation_service, sample_sim_config, tmp_path):
        """Test CSV header."""
        path = tmp_path / "out" / "ber.csv"
        result = simulation_service.run_ber_sweep(SimConfig(**{**sample_sim_config, "output": str(path)}))
        assert result.csv_filename == str(path)
        header = path.read_text().splitlines()[0]
        assert header.split(",") == BER_COLUMNS

    def test_worker_count_does_not_change_results(self, sample_sim_config):
        """Results do not depend on the worker count."""
        cfg = SimConfig(**{**sample_sim_config, "frames": 4})
        serial = SimulationService(workers=1).run_ber_sweep(cfg)
        parallel = SimulationService(workers=2).run_ber_sweep(cfg)
        assert serial.points == parallel.points

    def test_metadata(self, simulation_service, sample_sim_config):
        """Test sweep metadata."""
        result = simulation_service.run_ber_sweep(SimConfig(**sample_sim_config))
        assert result.scheme == "otfs"
        assert result.receiver == "fast"
        assert result.metadata["grid"] == {"m": 16, "n": 8, "delta_f": 15_000.0}
        assert result.metadata["snr_convention"].startswith("Es/N0")

    def test_unknown_profile(self, simulation_service, sample_sim_config):
        """Test unknown profile."""
        with pytest.raises(ProfileNotFoundError):
            simulation_service.run_ber_sweep(SimConfig(**{**sample_sim_config, "profile": "nope"}))

    def test_unexpected_error_is_wrapped(self, simulation_service, sample_sim_config):
        """Unexpected errors surface as SimulationError."""
        with patch('app.services.simulation_service.load_profile', side_effect=RuntimeError("disk gone")):
            with pytest.raises(SimulationError):
                simulation_service.run_ber_sweep(SimConfig(**sample_sim_config))

    def test_dense_receiver_size_limit(self, sample_sim_config):
        """Dense receiver refuses grids above its size limit."""
        with pytest.raises(ValidationError):
            SimConfig(**{**sample_sim_config, "m": 64, "n": 32, "receiver": "dense"})

    def test_full_scale_config(self):
        """Full-size preset keeps the large-block dimensions and 500 km/h."""
        cfg = SimConfig.full_scale(frames=1)
        assert (cfg.m, cfg.n, cfg.qam_order, cfg.profile) == (512, 128, 4, "eva")
        assert cfg.speed_mps == pytest.approx(500 / 3.6)


DESK_SWEEP = dict(m=64, n=32, profile="eva", speed_kmh=500.0, snr_db=[0.0, 5.0, 10.0, 15.0, 20.0], frames=25, seed=7)


def _std_err(point):
    """Monte-Carlo standard error of a BER estimate, floored at one error."""
    p = max(point.ber, 1.0 / point.bits_total)
    return float(np.sqrt(p * (1.0 - p) / point.bits_total))


@pytest.fixture(scope="module")
def desk_sweeps():
    service = SimulationService(workers=1)
    return {
        scheme: service.run_ber_sweep(SimConfig(scheme=scheme, **DESK_SWEEP)).points
        for scheme in (SchemeKind.OTFS, SchemeKind.OFDM)
    }


@pytest.mark.slow
class TestDeskScaleBer:
    """BER behaviour at 64x32 on EVA at 500 km/h with over 1e5 bits per point."""

    def test_enough_bits_per_point(self, desk_sweeps):
        """Each SNR point carries at least 1e5 bits."""
        for points in desk_sweeps.values():
            assert all(p.bits_total >= 100_000 for p in points)

    def test_otfs_beats_ofdm_at_high_snr(self, desk_sweeps):
        """OTFS beats OFDM by more than 3 standard errors at the two highest SNR points."""
        otfs, ofdm = desk_sweeps[SchemeKind.OTFS], desk_sweeps[SchemeKind.OFDM]
        for a, b in zip(otfs[-2:], ofdm[-2:]):
            margin = 3.0 * np.hypot(_std_err(a), _std_err(b))
            assert b.ber - a.ber > margin, (a.snr_db, a.ber, b.ber)

    @pytest.mark.parametrize("scheme", [SchemeKind.OTFS, SchemeKind.OFDM])
    def test_ber_falls_with_snr(self, desk_sweeps, scheme):
        """BER falls with SNR, allowing one rise no larger than 2 standard errors."""
        points = desk_sweeps[scheme]
        rises = [
            (lo, hi) for lo, hi in zip(points, points[1:])
            if hi.ber > lo.ber
        ]
        assert len(rises) <= 1
        for lo, hi in rises:
            assert hi.ber - lo.ber <= 2.0 * np.hypot(_std_err(lo), _std_err(hi))
        assert points[0].ber > points[-1].ber


class TestProfilesForSweeps:
    """Bundled profiles used by the sweeps load with their documented tap counts."""

    @pytest.mark.parametrize("name,taps", [("epa", 7), ("eva", 9), ("etu", 9), ("evb", 6)])
    def test_tap_counts(self, name, taps):
        """Test bundled profile tap counts."""
        assert load_profile(name).num_taps == taps
