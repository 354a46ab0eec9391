"""
Tests for quasi-banded assembly and the partitioned LU.
"""
import numpy as np
import pytest

from app.core.exceptions import ConfigurationError, InputShapeError, NumericalSingularityError
from app.services.channel import DdChannel, DdPath, random_channel
from app.services.complexity import CmCounter
from app.services.dd_core import OtfsGrid
from app.services.oracle import dense_channel_matrix, dense_unpivoted_lu
from app.services.qb_linalg import (
    QuasiBandedMatrix,
    assemble_psi,
    factor,
    solve_lower,
    solve_upper,
)


def _dense_psi(ch, nsr):
    h = dense_channel_matrix(ch)
    return h @ h.conj().T + nsr * np.eye(ch.grid.mn)


def _rel(a, b):
    return np.linalg.norm(a - b) / np.linalg.norm(b)


class TestAssemblePsi:
    """Test cases for band-storage assembly of H H^H + nsr I."""

    def test_matches_dense(self, small_channel):
        """Band assembly matches H H^H + nsr I."""
        psi = assemble_psi(small_channel, 0.1)
        np.testing.assert_allclose(psi.to_dense(), _dense_psi(small_channel, 0.1), atol=1e-12)

    def test_random_channels_match_dense(self, rng):
        """Band assembly matches dense on random channels."""
        for _ in range(10):
            ch = random_channel(OtfsGrid(m=8, n=4), num_paths=int(rng.integers(1, 6)), seed=rng)
            psi = assemble_psi(ch, 0.05)
            assert _rel(psi.to_dense(), _dense_psi(ch, 0.05)) < 1e-12

    def test_single_path_is_scaled_identity(self, small_grid):
        """One path gives a scaled identity."""
        ch = DdChannel.from_paths(small_grid, [DdPath(gain=0.6 - 0.8j, delay_bin=0, doppler_bin=2)])
        np.testing.assert_allclose(assemble_psi(ch, 0.25).to_dense(), 1.25 * np.eye(16), atol=1e-14)

    def test_equal_doppler_gives_constant_diagonals(self, small_grid):
        """Paths sharing a Doppler bin make Psi circulant."""
        ch = DdChannel.from_paths(small_grid, [
            DdPath(gain=1.0, delay_bin=0, doppler_bin=1),
            DdPath(gain=0.5j, delay_bin=1, doppler_bin=1),
        ])
        band = assemble_psi(ch, 0.1).band
        np.testing.assert_allclose(band, np.tile(band[0], (16, 1)), atol=1e-14)

    def test_hermitian(self, medium_channel):
        """Test assembled matrix is Hermitian."""
        psi = assemble_psi(medium_channel, 0.01)
        assert psi.hermitian
        assert psi.is_hermitian()
        dense = psi.to_dense()
        np.testing.assert_allclose(dense, dense.conj().T, atol=1e-12)

    def test_band_outside_is_zero(self, medium_channel):
        """Entries beyond cyclic offset alpha-1 are exactly zero."""
        dense = assemble_psi(medium_channel, 0.01).to_dense()
        theta, mn = medium_channel.theta, medium_channel.grid.mn
        for i in range(mn):
            for j in range(mn):
                offset = min((j - i) % mn, (i - j) % mn)
                if offset > theta:
                    assert dense[i, j] == 0

    @pytest.mark.parametrize("nsr", [0.0, -1e-3])
    def test_rejects_non_positive_nsr(self, small_channel, nsr):
        """Test non-positive nsr."""
        with pytest.raises(ConfigurationError):
            assemble_psi(small_channel, nsr)

    def test_assembly_count(self, small_channel):
        """Test assembly CM count."""
        counter = CmCounter()
        assemble_psi(small_channel, 0.1, counter)
        assert counter.assemble == (3 * 3 - 3) * (1 + 16) + 3


class TestQuasiBandedMatrix:
    """Test cases for the storage helpers."""

    def test_matvec(self, small_channel, rng):
        """Band matvec matches the dense product, corners included."""
        psi = assemble_psi(small_channel, 0.3)
        dense = psi.to_dense()
        x = rng.standard_normal(16) + 1j * rng.standard_normal(16)
        np.testing.assert_allclose(psi.matvec(x), dense @ x, atol=1e-12)

    def test_block(self, small_channel):
        """Test dense block extraction."""
        psi = assemble_psi(small_channel, 0.3)
        np.testing.assert_allclose(psi.block(0, 14, 14, 16), psi.to_dense()[:14, 14:], atol=0)

    def test_shape_checked(self):
        """Test band array shape check."""
        with pytest.raises(InputShapeError):
            QuasiBandedMatrix(size=8, half_bw=1, band=np.zeros((8, 2)))

    def test_band_too_wide(self):
        """Test band wider than the matrix."""
        with pytest.raises(ConfigurationError):
            QuasiBandedMatrix(size=4, half_bw=2, band=np.zeros((4, 5)))


class TestFactor:
    """Test cases for the partitioned LU."""

    def test_reconstructs_psi(self, small_channel):
        """Test L U reproduces Psi."""
        psi = assemble_psi(small_channel, 0.1)
        big_l, big_u = factor(psi).dense_factors()
        assert _rel(big_l @ big_u, psi.to_dense()) < 1e-12

    def test_factor_shapes(self, small_channel):
        """Test shapes of T factors, strips and Schur factors."""
        lu = factor(assemble_psi(small_channel, 0.1))
        assert lu.q == 14
        assert lu.lower.shape == (14, 2)
        assert lu.upper.shape == (14, 3)
        assert lu.e.shape == (14, 2)
        assert lu.v.shape == (2, 14)
        assert lu.f.shape == lu.g.shape == (2, 2)

    def test_matches_dense_unpivoted_lu(self, medium_channel):
        """Partitioned factors equal the dense unpivoted LU."""
        psi = assemble_psi(medium_channel, 0.05)
        big_l, big_u = factor(psi).dense_factors()
        ref_l, ref_u = dense_unpivoted_lu(psi.to_dense())
        assert _rel(big_l, ref_l) < 1e-10
        assert _rel(big_u, ref_u) < 1e-10

    def test_random_reconstruction(self, rng):
        """Reconstruction holds on random channels."""
        for _ in range(20):
            ch = random_channel(OtfsGrid(m=8, n=8), num_paths=int(rng.integers(1, 6)), seed=rng)
            psi = assemble_psi(ch, float(10 ** rng.uniform(-3, 0)))
            big_l, big_u = factor(psi).dense_factors()
            assert _rel(big_l @ big_u, psi.to_dense()) < 1e-12

    def test_delay_free_channel(self, small_grid):
        """alpha = 1 leaves no strips and no Schur block."""
        ch = DdChannel.from_paths(small_grid, [
            DdPath(gain=1.0, delay_bin=0, doppler_bin=0),
            DdPath(gain=0.5, delay_bin=0, doppler_bin=1),
        ])
        psi = assemble_psi(ch, 0.2)
        lu = factor(psi)
        assert lu.theta == 0
        assert lu.e.shape == (16, 0)
        rhs = np.arange(16, dtype=complex)
        np.testing.assert_allclose(psi.matvec(lu.solve(rhs)), rhs, atol=1e-12)

    def test_scalar_case(self):
        """Test 1x1 matrix."""
        ch = DdChannel.from_paths(OtfsGrid(m=1, n=1), [DdPath(gain=2.0, delay_bin=0, doppler_bin=0)])
        lu = factor(assemble_psi(ch, 1.0))
        assert lu.solve(np.array([10.0]))[0] == pytest.approx(2.0)

    def test_singular_pivot(self):
        """A zero pivot raises."""
        band = np.zeros((8, 3), dtype=complex)
        band[:, 1] = 1.0
        band[3, 1] = 0.0
        with pytest.raises(NumericalSingularityError):
            factor(QuasiBandedMatrix(size=8, half_bw=1, band=band))

    def test_counts_each_factor_stage(self, medium_channel):
        """Each factorization stage adds to its own counter."""
        counter = CmCounter()
        factor(assemble_psi(medium_channel, 0.1), counter)
        assert counter.factor_core > 0
        assert counter.strips > 0
        assert counter.schur > 0
        assert counter.solve_lower == counter.solve_upper == 0


class TestSolves:
    """Test cases for the two triangular stages."""

    def test_lower_then_upper_inverts_psi(self, medium_channel, rng):
        """Lower then upper solve inverts Psi."""
        psi = assemble_psi(medium_channel, 0.02)
        lu = factor(psi)
        r = rng.standard_normal(64) + 1j * rng.standard_normal(64)
        x = solve_upper(lu, solve_lower(lu, r))
        np.testing.assert_allclose(psi.matvec(x), r, atol=1e-10)
        np.testing.assert_allclose(x, np.linalg.solve(psi.to_dense(), r), rtol=1e-9, atol=1e-12)

    def test_each_stage_matches_dense_triangle(self, small_channel, rng):
        """Each triangular stage matches the dense triangle."""
        lu = factor(assemble_psi(small_channel, 0.1))
        big_l, big_u = lu.dense_factors()
        r = rng.standard_normal(16) + 1j * rng.standard_normal(16)
        np.testing.assert_allclose(big_l @ solve_lower(lu, r), r, atol=1e-12)
        np.testing.assert_allclose(big_u @ solve_upper(lu, r), r, atol=1e-10)

    def test_wrong_length(self, small_channel):
        """Test wrong-length right-hand side."""
        lu = factor(assemble_psi(small_channel, 0.1))
        with pytest.raises(InputShapeError):
            solve_lower(lu, np.zeros(15))

    def test_solve_counts_within_twice_closed_form(self):
        """Solve counts stay within 2x of the closed form."""
        grid = OtfsGrid(m=64, n=16)
        paths = [DdPath(gain=1 / np.sqrt(4), delay_bin=l, doppler_bin=k) for l, k in ((0, 0), (1, 1), (2, -1), (3, 2))]
        ch = DdChannel.from_paths(grid, paths)
        lu = factor(assemble_psi(ch, 0.1))
        counter = CmCounter()
        lu.solve(np.ones(grid.mn), counter)
        alpha, mn = ch.alpha, grid.mn
        closed_form = mn * (2 * alpha - 1) + 1.5 * alpha ** 2 + 0.5 * alpha
        assert counter.solve_lower + counter.solve_upper <= 2 * closed_form
