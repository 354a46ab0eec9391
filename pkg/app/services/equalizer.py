"""
Two-stage LMMSE receiver.

Stage one is channel equalization, r_ce = H^H (H H^H + nsr I)^-1 r, using the
partitioned LU of the quasi-banded Psi; stage two is the matched-filter
demodulator of the chosen scheme. Because the modulation matrix is unitary
this equals the full LMMSE (HA)^H ((HA)(HA)^H + nsr I)^-1 r.
"""
from typing import Optional, TYPE_CHECKING

import numpy.typing as npt

from ..core.config import get_settings
from ..core.exceptions import ConfigurationError
from ..core.logging import LoggerMixin
from .channel import DdChannel, apply_channel_adjoint
from .dd_core import ComplexArray, DdFrame
from .modem import ModulationScheme, SchemeKind, ofdm_demodulate, otfs_demodulate_mf
from .qb_linalg import PartitionedLU, QuasiBandedMatrix, assemble_psi, factor, solve_lower, solve_upper

if TYPE_CHECKING:
    from .complexity import CmCounter


class LmmseFastReceiver(LoggerMixin):
    """LMMSE receiver factored once per (channel, nsr) pair.

    The factors are computed in the constructor and never modified, so
    equalize may be called concurrently on distinct inputs.
    """

    def __init__(
        self,
        ch: DdChannel,
        nsr: float,
        scheme: Optional[ModulationScheme] = None,
        counter: Optional["CmCounter"] = None,
        pivot_rtol: Optional[float] = None
    ):
        if nsr < 0:
            raise ConfigurationError("nsr must be non-negative", details={"nsr": nsr})
        floor = get_settings().nsr_floor
        if nsr < floor:
            self.logger.warning(f"nsr={nsr} raised to the floor {floor} to keep Psi positive definite")
            nsr = floor

        self._ch = ch
        self._nsr = float(nsr)
        self._scheme = scheme or ModulationScheme(kind=SchemeKind.OTFS, grid=ch.grid)
        if self._scheme.grid != ch.grid:
            raise ConfigurationError(
                "Modulation grid does not match the channel grid",
                details={"scheme": self._scheme.grid.model_dump(), "channel": ch.grid.model_dump()}
            )
        self._pivot_rtol = pivot_rtol
        self._psi = assemble_psi(ch, self._nsr, counter)
        self._lu = factor(self._psi, counter, pivot_rtol)
        self.logger.debug(
            f"Factored receiver: MN={ch.grid.mn}, alpha={ch.alpha}, P={ch.num_paths}, nsr={self._nsr:.3e}"
        )

    @property
    def ch(self) -> DdChannel:
        return self._ch

    @property
    def nsr(self) -> float:
        return self._nsr

    @property
    def scheme(self) -> ModulationScheme:
        return self._scheme

    @property
    def psi(self) -> QuasiBandedMatrix:
        return self._psi

    @property
    def lu(self) -> PartitionedLU:
        return self._lu

    def with_nsr(self, nsr: float, counter: Optional["CmCounter"] = None) -> "LmmseFastReceiver":
        """Same channel and scheme, refactored for a new noise level."""
        return LmmseFastReceiver(self._ch, nsr, self._scheme, counter, self._pivot_rtol)

    def channel_equalize(self, rx: npt.ArrayLike, counter: Optional["CmCounter"] = None) -> ComplexArray:
        """r_ce = H^H Psi^-1 r."""
        r1 = solve_lower(self._lu, rx, counter)
        r2 = solve_upper(self._lu, r1, counter)
        return apply_channel_adjoint(r2, self._ch, counter)

    def equalize(self, rx: npt.ArrayLike, counter: Optional["CmCounter"] = None) -> DdFrame:
        """Estimate the delay-Doppler frame with the receiver's scheme."""
        if self._scheme.kind is SchemeKind.OFDM:
            return self.equalize_ofdm(rx, counter)
        r_ce = self.channel_equalize(rx, counter)
        return otfs_demodulate_mf(r_ce, self._ch.grid, counter)

    def equalize_ofdm(self, rx: npt.ArrayLike, counter: Optional["CmCounter"] = None) -> DdFrame:
        r_ce = self.channel_equalize(rx, counter)
        return ofdm_demodulate(r_ce, self._ch.grid, counter)
