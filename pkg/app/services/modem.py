"""
OTFS and OFDM modulation with a rectangular pulse, plus cyclic-prefix handling.

With W_L the normalized L-point inverse DFT, OTFS uses A = W_N (x) I_M and
OFDM uses A = I_N (x) W_M; both are unitary, and both are applied here as
batches of FFTs on the M x N frame matrix rather than as dense products.
"""
from enum import Enum
from typing import Optional, TYPE_CHECKING

import numpy as np
import numpy.typing as npt
from pydantic import BaseModel, ConfigDict, Field
from scipy import fft as sp_fft

from ..core.exceptions import ConfigurationError, InputShapeError
from .dd_core import ComplexArray, DdFrame, OtfsGrid, unvec_columns, vec_columns

if TYPE_CHECKING:
    from .channel import DdChannel
    from .complexity import CmCounter


class SchemeKind(str, Enum):
    OTFS = "otfs"
    OFDM = "ofdm"


def _check_frame(frame: DdFrame, grid: OtfsGrid) -> None:
    if frame.grid != grid:
        raise InputShapeError(
            "Frame grid does not match the modulation grid",
            details={"frame": frame.grid.model_dump(), "grid": grid.model_dump()}
        )


def _as_rx_vector(r: npt.ArrayLike, grid: OtfsGrid) -> ComplexArray:
    r = np.asarray(r, dtype=np.complex128)
    if r.ndim != 1 or r.size != grid.mn:
        raise InputShapeError(
            f"Expected a vector of length {grid.mn}",
            details={"shape": list(r.shape)}
        )
    return r


def _count_fft(counter: Optional["CmCounter"], batches: int, points: int) -> None:
    # radix-2: (c/2) log2(c) multiplications per c-point transform
    if counter is not None and points > 1:
        counter.add("demod", batches * (points // 2) * int(np.log2(points)))


def otfs_modulate(frame: DdFrame) -> ComplexArray:
    """s = vec{D W_N}: M parallel N-point inverse FFTs along the rows of D."""
    return vec_columns(sp_fft.ifft(frame.data, axis=1, norm="ortho"))


def otfs_demodulate_mf(
    r_ce: npt.ArrayLike,
    grid: OtfsGrid,
    counter: Optional["CmCounter"] = None
) -> DdFrame:
    """d = vec{R W_N^H}, i.e. A^H r_ce, via M N-point forward FFTs."""
    r_ce = _as_rx_vector(r_ce, grid)
    big_r = unvec_columns(r_ce, grid.m, grid.n)
    _count_fft(counter, grid.m, grid.n)
    return DdFrame(grid=grid, data=sp_fft.fft(big_r, axis=1, norm="ortho"))


def ofdm_modulate(frame: DdFrame) -> ComplexArray:
    """s = (I_N (x) W_M) d: N M-point inverse FFTs on the columns of D."""
    return vec_columns(sp_fft.ifft(frame.data, axis=0, norm="ortho"))


def ofdm_demodulate(
    r_ce: npt.ArrayLike,
    grid: OtfsGrid,
    counter: Optional["CmCounter"] = None
) -> DdFrame:
    """(I_N (x) W_M^H) r_ce via N M-point forward FFTs."""
    r_ce = _as_rx_vector(r_ce, grid)
    big_r = unvec_columns(r_ce, grid.m, grid.n)
    _count_fft(counter, grid.n, grid.m)
    return DdFrame(grid=grid, data=sp_fft.fft(big_r, axis=0, norm="ortho"))


class ModulationScheme(BaseModel):
    """Modulation kind bound to a frame grid."""

    model_config = ConfigDict(frozen=True)

    kind: SchemeKind = SchemeKind.OTFS
    grid: OtfsGrid

    def modulate(self, frame: DdFrame) -> ComplexArray:
        _check_frame(frame, self.grid)
        if self.kind is SchemeKind.OTFS:
            return otfs_modulate(frame)
        return ofdm_modulate(frame)

    def demodulate(self, r_ce: npt.ArrayLike, counter: Optional["CmCounter"] = None) -> DdFrame:
        if self.kind is SchemeKind.OTFS:
            return otfs_demodulate_mf(r_ce, self.grid, counter)
        return ofdm_demodulate(r_ce, self.grid, counter)


class CpConfig(BaseModel):
    """Cyclic prefix of cp_len samples prepended to the whole frame."""

    model_config = ConfigDict(frozen=True)

    cp_len: int = Field(default=0, ge=0, description="CP length in samples")

    @classmethod
    def for_channel(cls, ch: "DdChannel") -> "CpConfig":
        """Shortest CP that turns the linear channel into a cyclic one."""
        return cls(cp_len=ch.alpha - 1)

    def check_channel(self, ch: "DdChannel") -> None:
        if self.cp_len < ch.alpha - 1:
            raise ConfigurationError(
                f"CP length {self.cp_len} is shorter than alpha - 1 = {ch.alpha - 1}",
                details={"cp_len": self.cp_len, "alpha": ch.alpha}
            )


def add_cp(s: npt.ArrayLike, cp: CpConfig) -> ComplexArray:
    s = np.asarray(s, dtype=np.complex128)
    if cp.cp_len > s.size:
        raise ConfigurationError(
            f"CP length {cp.cp_len} exceeds the frame length {s.size}",
            details={"cp_len": cp.cp_len, "frame_len": int(s.size)}
        )
    return np.concatenate((s[s.size - cp.cp_len:], s))


def remove_cp(x: npt.ArrayLike, cp: CpConfig) -> ComplexArray:
    x = np.asarray(x, dtype=np.complex128)
    if cp.cp_len > x.size:
        raise ConfigurationError(
            f"CP length {cp.cp_len} exceeds the received length {x.size}",
            details={"cp_len": cp.cp_len, "received_len": int(x.size)}
        )
    return x[cp.cp_len:].copy()
