"""
Tests for grids, constellations and frame vectorization.
"""
import numpy as np
import pytest
from pydantic import ValidationError

from app.core.exceptions import ConfigurationError, InputShapeError
from app.services.dd_core import (
    DdFrame,
    OtfsGrid,
    get_constellation,
    qam_demap_hard,
    qam_map,
    unvec_columns,
    vec_columns,
)


class TestOtfsGrid:
    """Test cases for frame geometry."""

    def test_critical_sampling(self):
        """T * delta_f is exactly one."""
        grid = OtfsGrid(m=512, n=128, delta_f=15_000.0)
        assert grid.symbol_duration * grid.delta_f == pytest.approx(1.0, abs=1e-15)
        assert grid.bandwidth == pytest.approx(512 * 15_000.0)
        assert grid.frame_duration == pytest.approx(128 / 15_000.0)
        assert grid.mn == 512 * 128

    def test_resolutions(self):
        """Delay and Doppler bins are 1/(M df) and 1/(N T)."""
        grid = OtfsGrid(m=64, n=32)
        assert grid.delay_resolution == pytest.approx(1.0 / (64 * 15_000.0))
        assert grid.doppler_resolution == pytest.approx(15_000.0 / 32)

    @pytest.mark.parametrize("m,n", [(3, 4), (4, 6), (0, 4)])
    def test_rejects_non_powers_of_two(self, m, n):
        """Grid dimensions must be powers of two."""
        with pytest.raises(ValidationError):
            OtfsGrid(m=m, n=n)

    def test_rejects_non_positive_spacing(self):
        """Test non-positive subcarrier spacing."""
        with pytest.raises(ValidationError):
            OtfsGrid(m=4, n=4, delta_f=0.0)


class TestQamConstellation:
    """Test cases for Gray-labelled square QAM."""

    @pytest.mark.parametrize("order", [4, 16, 64])
    def test_unit_average_energy(self, order):
        """Test constellations have unit average energy."""
        points = get_constellation(order).points
        assert np.mean(np.abs(points) ** 2) == pytest.approx(1.0, abs=1e-12)
        assert len(np.unique(np.round(points, 12))) == order

    @pytest.mark.parametrize("order", [4, 16, 64])
    def test_gray_property(self, order):
        """Nearest neighbours differ in exactly one bit."""
        c = get_constellation(order)
        spacing = np.min(np.abs(c.points[0] - c.points[1:]))
        for a in range(order):
            for b in range(a + 1, order):
                if np.isclose(abs(c.points[a] - c.points[b]), spacing):
                    assert np.sum(c.bit_map[a] != c.bit_map[b]) == 1

    def test_qpsk_labels(self):
        """00 in the first quadrant, 11 opposite to it."""
        c = get_constellation(4)
        assert qam_map([0, 0], c)[0] == pytest.approx((1 + 1j) / np.sqrt(2))
        assert qam_map([1, 1], c)[0] == pytest.approx((-1 - 1j) / np.sqrt(2))

    def test_qpsk_counter_clockwise_walk(self):
        """QPSK labels walk the quadrants counter-clockwise."""
        c = get_constellation(4)
        angles = [np.angle(qam_map(bits, c)[0]) % (2 * np.pi) for bits in ([0, 0], [0, 1], [1, 1], [1, 0])]
        assert angles == sorted(angles)

    def test_unsupported_order(self):
        """Test unsupported QAM order."""
        with pytest.raises(ConfigurationError):
            get_constellation(8)


class TestMapping:
    """Test cases for bit mapping and hard decisions."""

    def test_bad_bit_count(self):
        """Bit count must be a multiple of the bits per symbol."""
        with pytest.raises(InputShapeError):
            qam_map([0, 1, 1], get_constellation(4))

    @pytest.mark.parametrize("order", [4, 16, 64])
    def test_noiseless_roundtrip(self, order, rng):
        """Noiseless symbols demap to the original bits."""
        c = get_constellation(order)
        bits = rng.integers(0, 2, size=60 * c.bits_per_symbol)
        assert np.array_equal(qam_demap_hard(qam_map(bits, c), c), bits)

    def test_nearest_neighbour_decision(self):
        """Hard decisions pick the nearest point."""
        c = get_constellation(4)
        assert list(qam_demap_hard([(0.9 + 0.8j) / np.sqrt(2)], c)) == [0, 0]


class TestVectorization:
    """Test cases for column-major stacking."""

    def test_column_stacking(self):
        """vec stacks columns."""
        x = np.array([[1, 3], [2, 4]])
        assert list(vec_columns(x)) == [1, 2, 3, 4]

    def test_second_column_starts_at_m(self):
        """Sample M of the vector is entry (0, 1)."""
        v = np.arange(12)
        assert unvec_columns(v, 4, 3)[0, 1] == 4

    def test_inverse_pair(self, rng):
        """unvec inverts vec."""
        x = rng.standard_normal((8, 4)) + 1j * rng.standard_normal((8, 4))
        assert np.array_equal(unvec_columns(vec_columns(x), 8, 4), x)

    def test_unvec_rejects_wrong_length(self):
        """Test unvec with the wrong length."""
        with pytest.raises(InputShapeError):
            unvec_columns(np.zeros(7), 4, 2)

    def test_frame_shape_checked(self, small_grid):
        """Frame data must be M x N."""
        with pytest.raises(InputShapeError):
            DdFrame(grid=small_grid, data=np.zeros((4, 3)))

    def test_frame_from_vector(self, small_grid):
        """Test frame construction from a vector."""
        v = np.arange(16, dtype=complex)
        frame = DdFrame.from_vector(small_grid, v)
        assert frame.data[1, 0] == 1
        assert np.array_equal(frame.vector, v)
