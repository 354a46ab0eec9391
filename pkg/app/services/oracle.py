"""
Dense reference implementations.

Everything here is built literally from full matrices and general-purpose
scipy solvers, with hard size guards. The fast receiver is checked against
these routines, never the other way round.
"""
from typing import Tuple

import numpy as np
import numpy.typing as npt
from scipy import linalg as sp_linalg

from ..core.config import get_settings
from ..core.exceptions import InputShapeError, NumericalSingularityError, ResourceLimitError
from .channel import DdChannel
from .dd_core import DdFrame, OtfsGrid
from .modem import ModulationScheme, SchemeKind

DenseMatrix = npt.NDArray[np.complex128]


def _guard(mn: int, limit: int, what: str) -> None:
    if mn > limit:
        raise ResourceLimitError(
            f"{what} refused for MN={mn} (limit {limit})",
            details={"mn": mn, "limit": limit}
        )


def _idft_matrix(size: int) -> DenseMatrix:
    """Normalized inverse DFT matrix W_size."""
    idx = np.arange(size)
    return np.exp(2j * np.pi * np.outer(idx, idx) / size) / np.sqrt(size)


def dense_channel_matrix(ch: DdChannel) -> DenseMatrix:
    """H = sum_p h_p Pi^l_p Delta^k_p from explicit matrix powers."""
    mn = ch.grid.mn
    _guard(mn, get_settings().oracle_max_mn_channel, "Dense channel matrix")
    # cyclic down-shift: (Pi x)[q] = x[q - 1]
    pi = np.roll(np.eye(mn, dtype=np.complex128), 1, axis=0)
    delta = np.diag(np.exp(2j * np.pi * np.arange(mn) / mn))
    h = np.zeros((mn, mn), dtype=np.complex128)
    for path in ch.paths:
        shift = np.linalg.matrix_power(pi, path.delay_bin)
        if path.doppler_bin >= 0:
            ramp = np.linalg.matrix_power(delta, path.doppler_bin)
        else:
            ramp = np.linalg.matrix_power(delta.conj(), -path.doppler_bin)
        h += path.gain * shift @ ramp
    return h


def dense_modulation_matrix(scheme: ModulationScheme) -> DenseMatrix:
    """A = W_N (x) I_M for OTFS, I_N (x) W_M for OFDM."""
    grid: OtfsGrid = scheme.grid
    _guard(grid.mn, get_settings().oracle_max_mn_channel, "Dense modulation matrix")
    if scheme.kind is SchemeKind.OTFS:
        return np.kron(_idft_matrix(grid.n), np.eye(grid.m))
    return np.kron(np.eye(grid.n), _idft_matrix(grid.m))


def dense_lmmse(rx: npt.ArrayLike, ch: DdChannel, nsr: float, scheme: ModulationScheme) -> DdFrame:
    """d_hat = (HA)^H [(HA)(HA)^H + nsr I]^-1 r with a pivoted dense solve."""
    mn = ch.grid.mn
    _guard(mn, get_settings().oracle_max_mn_lmmse, "Dense LMMSE")
    rx = np.asarray(rx, dtype=np.complex128)
    if rx.shape != (mn,):
        raise InputShapeError(f"Expected a vector of length {mn}", details={"shape": list(rx.shape)})
    ha = dense_channel_matrix(ch) @ dense_modulation_matrix(scheme)
    gram = ha @ ha.conj().T + nsr * np.eye(mn)
    try:
        z = sp_linalg.solve(gram, rx, assume_a="gen")
    except sp_linalg.LinAlgError as exc:
        raise NumericalSingularityError("Dense LMMSE system is singular", details={"error": str(exc)})
    return DdFrame.from_vector(ch.grid, ha.conj().T @ z)


def dense_unpivoted_lu(a: npt.ArrayLike) -> Tuple[DenseMatrix, DenseMatrix]:
    """Textbook Doolittle elimination, (L unit lower, U upper) with A = L U."""
    u = np.array(a, dtype=np.complex128)
    if u.ndim != 2 or u.shape[0] != u.shape[1]:
        raise InputShapeError("LU needs a square matrix", details={"shape": list(u.shape)})
    n = u.shape[0]
    lo = np.eye(n, dtype=np.complex128)
    for k in range(n):
        if u[k, k] == 0:
            raise NumericalSingularityError(f"Zero pivot at {k}", details={"pivot_index": k})
        lo[k + 1:, k] = u[k + 1:, k] / u[k, k]
        u[k + 1:, :] -= np.outer(lo[k + 1:, k], u[k, :])
    return lo, np.triu(u)


def dense_forward_substitution(lower: npt.ArrayLike, b: npt.ArrayLike, unit_diagonal: bool = True) -> DenseMatrix:
    return sp_linalg.solve_triangular(np.asarray(lower), np.asarray(b), lower=True, unit_diagonal=unit_diagonal)


def dense_backward_substitution(upper: npt.ArrayLike, b: npt.ArrayLike) -> DenseMatrix:
    return sp_linalg.solve_triangular(np.asarray(upper), np.asarray(b), lower=False)


class DenseLmmseReceiver:
    """Drop-in dense counterpart of LmmseFastReceiver for small frames."""

    def __init__(self, ch: DdChannel, nsr: float, scheme: ModulationScheme):
        self.ch = ch
        self.nsr = nsr
        self.scheme = scheme

    def equalize(self, rx: npt.ArrayLike) -> DdFrame:
        return dense_lmmse(rx, self.ch, self.nsr, self.scheme)
