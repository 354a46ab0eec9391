"""
Frame geometry, QAM constellations and delay-Doppler frames.

Every vector in the package uses column-major stacking: sample ``q = m + M*n``
holds entry ``(m, n)`` of the M x N frame matrix.
"""
from dataclasses import dataclass
from functools import lru_cache
from typing import Tuple

import numpy as np
import numpy.typing as npt
from pydantic import BaseModel, ConfigDict, Field, field_validator

from ..core.exceptions import ConfigurationError, InputShapeError

ComplexArray = npt.NDArray[np.complex128]
BitArray = npt.NDArray[np.int8]

SUPPORTED_QAM_ORDERS = (4, 16, 64)


def is_power_of_two(value: int) -> bool:
    return value >= 1 and (value & (value - 1)) == 0


class OtfsGrid(BaseModel):
    """Critically sampled OTFS frame geometry (T * delta_f = 1)."""

    model_config = ConfigDict(frozen=True)

    m: int = Field(description="Number of subcarriers / delay bins")
    n: int = Field(description="Number of time slots / Doppler bins")
    delta_f: float = Field(default=15_000.0, gt=0, description="Subcarrier spacing (Hz)")

    @field_validator('m', 'n')
    @classmethod
    def validate_power_of_two(cls, v):
        if not is_power_of_two(v):
            raise ValueError('grid dimensions must be positive powers of two')
        return v

    @property
    def symbol_duration(self) -> float:
        """T = 1 / delta_f."""
        return 1.0 / self.delta_f

    @property
    def bandwidth(self) -> float:
        return self.m * self.delta_f

    @property
    def frame_duration(self) -> float:
        return self.n * self.symbol_duration

    @property
    def mn(self) -> int:
        return self.m * self.n

    @property
    def delay_resolution(self) -> float:
        return 1.0 / (self.m * self.delta_f)

    @property
    def doppler_resolution(self) -> float:
        return 1.0 / (self.n * self.symbol_duration)


def _gray_to_binary(g: int) -> int:
    b = g
    shift = g >> 1
    while shift:
        b ^= shift
        shift >>= 1
    return b


@dataclass(frozen=True, eq=False)
class QamConstellation:
    """Square Gray-labelled QAM with unit average energy.

    ``points[label]`` is the symbol for the integer label whose bits (MSB first)
    are ``bit_map[label]``. The first half of the bits selects the quadrature
    level and the second half the in-phase level; a zero bit on either axis
    selects the positive side, so 4-QAM puts 00 in the first quadrant and
    walks 00 -> 01 -> 11 -> 10 counter-clockwise.
    """

    order: int
    points: ComplexArray
    bit_map: BitArray

    @property
    def bits_per_symbol(self) -> int:
        return int(np.log2(self.order))


@lru_cache(maxsize=None)
def get_constellation(order: int) -> QamConstellation:
    """Build (and cache) the unit-energy square QAM of the given order."""
    if order not in SUPPORTED_QAM_ORDERS:
        raise ConfigurationError(
            f"Unsupported QAM order {order}",
            details={"supported": list(SUPPORTED_QAM_ORDERS)}
        )
    k = int(np.log2(order))
    half = k // 2
    side = 1 << half
    # average energy of the unscaled {+-1, +-3, ...}^2 lattice
    scale = 1.0 / np.sqrt(2.0 * (order - 1) / 3.0)

    labels = np.arange(order)
    q_gray = labels >> half
    i_gray = labels & (side - 1)
    q_level = np.array([(side - 1) - 2 * _gray_to_binary(int(g)) for g in q_gray], dtype=float)
    i_level = np.array([(side - 1) - 2 * _gray_to_binary(int(g)) for g in i_gray], dtype=float)

    points = scale * (i_level + 1j * q_level)
    bit_map = ((labels[:, None] >> np.arange(k - 1, -1, -1)[None, :]) & 1).astype(np.int8)

    points.setflags(write=False)
    bit_map.setflags(write=False)
    return QamConstellation(order=order, points=points, bit_map=bit_map)


def qam_map(bits: npt.ArrayLike, constellation: QamConstellation) -> ComplexArray:
    """Map groups of log2(order) bits onto constellation points."""
    bits = np.asarray(bits, dtype=np.int64).ravel()
    k = constellation.bits_per_symbol
    if bits.size % k != 0:
        raise InputShapeError(
            f"Bit count {bits.size} is not divisible by {k}",
            details={"bits": int(bits.size), "bits_per_symbol": k}
        )
    weights = 1 << np.arange(k - 1, -1, -1)
    labels = bits.reshape(-1, k) @ weights
    return constellation.points[labels].astype(np.complex128)


def qam_demap_hard(symbols: npt.ArrayLike, constellation: QamConstellation) -> BitArray:
    """Nearest-point hard decision, returning the concatenated bit labels."""
    symbols = np.asarray(symbols, dtype=np.complex128).ravel()
    distances = np.abs(symbols[:, None] - constellation.points[None, :]) ** 2
    labels = np.argmin(distances, axis=1)
    return constellation.bit_map[labels].ravel().copy()


def vec_columns(x: npt.ArrayLike) -> ComplexArray:
    """Column-major vectorization vec{X}."""
    x = np.asarray(x)
    if x.ndim != 2:
        raise InputShapeError("vec_columns expects a matrix", details={"ndim": x.ndim})
    return x.reshape(-1, order="F").astype(np.complex128, copy=False)


def unvec_columns(v: npt.ArrayLike, m: int, n: int) -> ComplexArray:
    """Inverse of vec_columns."""
    v = np.asarray(v)
    if v.ndim != 1 or v.size != m * n:
        raise InputShapeError(
            f"Expected a vector of length {m * n}",
            details={"shape": list(v.shape), "m": m, "n": n}
        )
    return v.reshape((m, n), order="F").astype(np.complex128, copy=False)


@dataclass(frozen=True, eq=False)
class DdFrame:
    """M x N delay-Doppler data matrix; entry (l, k) is d(k, l)."""

    grid: OtfsGrid
    data: ComplexArray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.complex128)
        expected: Tuple[int, int] = (self.grid.m, self.grid.n)
        if data.shape != expected:
            raise InputShapeError(
                f"Frame must be {expected[0]}x{expected[1]}",
                details={"shape": list(data.shape)}
            )
        object.__setattr__(self, "data", data)

    @property
    def vector(self) -> ComplexArray:
        """d = vec{D}."""
        return vec_columns(self.data)

    @classmethod
    def from_vector(cls, grid: OtfsGrid, v: npt.ArrayLike) -> "DdFrame":
        return cls(grid=grid, data=unvec_columns(v, grid.m, grid.n))
