"""
Discrete delay-Doppler channel model.

H = sum_p h_p Pi^{l_p} Delta^{k_p}, with Pi the cyclic down-shift by one sample
and Delta = diag{exp(j 2 pi q / MN)}. H and its adjoint are applied as sparse
operators (one shift and one phase ramp per path); H is never materialized.
"""
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, TYPE_CHECKING, Union

import numpy as np
import numpy.typing as npt
from pydantic import BaseModel, ConfigDict, Field

from ..core.config import get_settings
from ..core.exceptions import ConfigurationError, InputShapeError, ProfileNotFoundError
from ..core.logging import get_logger
from .dd_core import ComplexArray, OtfsGrid

if TYPE_CHECKING:
    from .complexity import CmCounter

logger = get_logger(__name__)

SPEED_OF_LIGHT = 299_792_458.0
PROFILE_SUFFIX = ".pdp"

SeedLike = Union[int, np.random.Generator, None]


@dataclass(frozen=True)
class DdPath:
    """One propagation path on the integer delay-Doppler lattice.

    The Doppler bin is signed; negative bins are handled by the phase ramp.
    """

    gain: complex
    delay_bin: int
    doppler_bin: int


@dataclass(frozen=True, eq=False)
class DdChannel:
    grid: OtfsGrid
    paths: Tuple[DdPath, ...]
    alpha: int
    beta: int

    def __post_init__(self):
        if not self.paths:
            raise ConfigurationError("A channel needs at least one path")
        m, n, mn = self.grid.m, self.grid.n, self.grid.mn
        for idx, path in enumerate(self.paths):
            if not 0 <= path.delay_bin <= m - 1:
                raise ConfigurationError(
                    f"Path {idx} delay bin {path.delay_bin} outside [0, {m - 1}]",
                    details={"path": idx, "delay_bin": path.delay_bin}
                )
            if abs(path.doppler_bin) > n - 1:
                raise ConfigurationError(
                    f"Path {idx} Doppler bin {path.doppler_bin} outside [-{n - 1}, {n - 1}]",
                    details={"path": idx, "doppler_bin": path.doppler_bin}
                )
        max_delay = max(p.delay_bin for p in self.paths)
        if self.alpha < max_delay + 1:
            raise ConfigurationError(
                f"alpha={self.alpha} does not cover the largest delay bin {max_delay}",
                details={"alpha": self.alpha, "max_delay_bin": max_delay}
            )
        # the partition needs Q = MN - theta > theta
        if 2 * (self.alpha - 1) >= mn:
            raise ConfigurationError(
                f"Channel delay length alpha={self.alpha} is too large for MN={mn}",
                details={"alpha": self.alpha, "mn": mn}
            )
        if self.beta < 0:
            raise ConfigurationError("beta must be non-negative", details={"beta": self.beta})

    @classmethod
    def from_paths(
        cls,
        grid: OtfsGrid,
        paths: Sequence[DdPath],
        alpha: Optional[int] = None,
        beta: Optional[int] = None
    ) -> "DdChannel":
        paths = tuple(paths)
        if not paths:
            raise ConfigurationError("A channel needs at least one path")
        if alpha is None:
            alpha = max(p.delay_bin for p in paths) + 1
        if beta is None:
            beta = max(abs(p.doppler_bin) for p in paths)
        return cls(grid=grid, paths=paths, alpha=alpha, beta=beta)

    @property
    def theta(self) -> int:
        """Band half-width of Psi."""
        return self.alpha - 1

    @property
    def num_paths(self) -> int:
        return len(self.paths)

    @property
    def gains(self) -> ComplexArray:
        return np.array([p.gain for p in self.paths], dtype=np.complex128)


class NoiseModel(BaseModel):
    """Circularly-symmetric white Gaussian noise, variance sigma_n_sq per sample."""

    model_config = ConfigDict(frozen=True)

    sigma_n_sq: float = Field(ge=0, description="Noise variance per complex sample")
    rng_seed: int = Field(default=0, ge=0, lt=2**64, description="Seed of the noise stream")

    @classmethod
    def from_snr_db(cls, snr_db: float, rng_seed: int = 0, signal_power: float = 1.0) -> "NoiseModel":
        return cls(sigma_n_sq=signal_power * 10.0 ** (-snr_db / 10.0), rng_seed=rng_seed)


@dataclass(frozen=True, eq=False)
class PowerDelayProfile:
    name: str
    delays_ns: npt.NDArray[np.float64]
    powers_db: npt.NDArray[np.float64]

    @property
    def num_taps(self) -> int:
        return int(self.delays_ns.size)

    @property
    def tau_max(self) -> float:
        """Maximum excess delay in seconds."""
        return float(self.delays_ns.max()) * 1e-9

    def normalized_powers(self) -> npt.NDArray[np.float64]:
        linear = 10.0 ** (self.powers_db / 10.0)
        return linear / linear.sum()


def _parse_profile(name: str, text: str) -> PowerDelayProfile:
    delays: List[float] = []
    powers: List[float] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        fields = line.split()
        if len(fields) != 2:
            raise ConfigurationError(
                f"Profile '{name}' line {lineno}: expected 'delay_ns power_dB'",
                details={"line": raw}
            )
        delays.append(float(fields[0]))
        powers.append(float(fields[1]))
    if not delays:
        raise ConfigurationError(f"Profile '{name}' has no taps")
    if min(delays) < 0:
        raise ConfigurationError(f"Profile '{name}' has a negative delay")
    return PowerDelayProfile(
        name=name,
        delays_ns=np.array(delays, dtype=float),
        powers_db=np.array(powers, dtype=float)
    )


def list_profiles(profile_dir: Optional[str] = None) -> List[str]:
    """Names of bundled profiles plus any found in profile_dir."""
    names = {
        Path(entry.name).stem
        for entry in resources.files("app").joinpath("data").iterdir()
        if entry.name.endswith(PROFILE_SUFFIX)
    }
    profile_dir = profile_dir or get_settings().profile_dir
    if profile_dir and Path(profile_dir).is_dir():
        names.update(p.stem for p in Path(profile_dir).glob(f"*{PROFILE_SUFFIX}"))
    return sorted(names)


def load_profile(name_or_path: str, profile_dir: Optional[str] = None) -> PowerDelayProfile:
    """Load a profile by file path, by name from profile_dir, or from the bundled set."""
    candidate = Path(name_or_path)
    if candidate.suffix == PROFILE_SUFFIX or candidate.is_file():
        if not candidate.is_file():
            raise ProfileNotFoundError(
                f"Profile file not found: {name_or_path}",
                details={"path": str(candidate)}
            )
        return _parse_profile(candidate.stem, candidate.read_text())

    name = name_or_path.lower()
    profile_dir = profile_dir or get_settings().profile_dir
    if profile_dir:
        user_file = Path(profile_dir) / f"{name}{PROFILE_SUFFIX}"
        if user_file.is_file():
            return _parse_profile(name, user_file.read_text())

    bundled = resources.files("app").joinpath("data").joinpath(f"{name}{PROFILE_SUFFIX}")
    if not bundled.is_file():
        raise ProfileNotFoundError(
            f"Unknown power-delay profile '{name_or_path}'",
            details={"available": list_profiles(profile_dir)}
        )
    return _parse_profile(name, bundled.read_text())


def max_doppler(speed: float, f_c: float) -> float:
    """nu_max = f_c * v / c (Hz), speed in m/s."""
    return f_c * speed / SPEED_OF_LIGHT


def _ceil_bins(value: float) -> int:
    # guards against 2.0000000001 -> 3 from float round-off
    return int(math.ceil(value - 1e-9))


def delay_length(tau_max: float, grid: OtfsGrid) -> int:
    """alpha = ceil(tau_max * M * delta_f), at least 1."""
    return max(1, _ceil_bins(tau_max * grid.m * grid.delta_f))


def doppler_length(nu_max: float, grid: OtfsGrid) -> int:
    """beta = ceil(nu_max * N * T)."""
    return max(0, _ceil_bins(nu_max * grid.n * grid.symbol_duration))


def _as_generator(seed: SeedLike) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def build_channel_from_profile(
    profile: PowerDelayProfile,
    speed: float,
    f_c: float,
    grid: OtfsGrid,
    seed: SeedLike = None
) -> DdChannel:
    """Draw one Rayleigh realization of the profile with Jakes Doppler.

    speed is in m/s. Gains are complex Gaussian with the normalized tap powers;
    each path gets nu_p = nu_max cos(theta_p), theta_p ~ U[-pi, pi], rounded to
    the nearest (signed) Doppler bin.
    """
    if speed < 0 or f_c <= 0:
        raise ConfigurationError(
            "speed must be non-negative and carrier frequency positive",
            details={"speed": speed, "f_c": f_c}
        )
    rng = _as_generator(seed)
    taps = profile.num_taps
    powers = profile.normalized_powers()
    gains = np.sqrt(powers / 2.0) * (rng.standard_normal(taps) + 1j * rng.standard_normal(taps))
    angles = rng.uniform(-np.pi, np.pi, taps)

    nu_max = max_doppler(speed, f_c)
    delay_bins = np.rint(profile.delays_ns * 1e-9 * grid.m * grid.delta_f).astype(int)
    doppler_bins = np.rint(nu_max * np.cos(angles) * grid.n * grid.symbol_duration).astype(int)

    alpha = max(delay_length(profile.tau_max, grid), int(delay_bins.max()) + 1)
    beta = doppler_length(nu_max, grid)
    if 2 * (alpha - 1) >= grid.mn:
        raise ConfigurationError(
            f"Grid {grid.m}x{grid.n} is too small for profile '{profile.name}' (alpha={alpha})",
            details={"alpha": alpha, "mn": grid.mn, "profile": profile.name}
        )
    if int(delay_bins.max()) > grid.m - 1 or beta > grid.n - 1:
        raise ConfigurationError(
            f"Profile '{profile.name}' does not fit the delay-Doppler lattice",
            details={"max_delay_bin": int(delay_bins.max()), "beta": beta, "m": grid.m, "n": grid.n}
        )

    paths = tuple(
        DdPath(gain=complex(g), delay_bin=int(l), doppler_bin=int(k))
        for g, l, k in zip(gains, delay_bins, doppler_bins)
    )
    logger.debug(f"Drew '{profile.name}' channel: alpha={alpha}, beta={beta}, P={taps}")
    return DdChannel(grid=grid, paths=paths, alpha=alpha, beta=beta)


def random_channel(
    grid: OtfsGrid,
    num_paths: int,
    seed: SeedLike = None,
    max_delay: Optional[int] = None,
    max_doppler_bin: Optional[int] = None
) -> DdChannel:
    """Random integer-bin channel with distinct (delay, Doppler) pairs."""
    rng = _as_generator(seed)
    limit = (grid.mn - 1) // 2
    if max_delay is None:
        max_delay = min(grid.m - 1, limit)
    max_delay = min(max_delay, grid.m - 1, limit)
    if max_doppler_bin is None:
        max_doppler_bin = grid.n - 1
    max_doppler_bin = min(max_doppler_bin, grid.n - 1)

    lattice = [
        (l, k)
        for l in range(max_delay + 1)
        for k in range(-max_doppler_bin, max_doppler_bin + 1)
    ]
    if num_paths > len(lattice):
        raise ConfigurationError(
            f"Cannot place {num_paths} distinct paths on the lattice",
            details={"available": len(lattice)}
        )
    picks = rng.choice(len(lattice), size=num_paths, replace=False)
    gains = (rng.standard_normal(num_paths) + 1j * rng.standard_normal(num_paths)) / np.sqrt(2 * num_paths)
    paths = [
        DdPath(gain=complex(g), delay_bin=lattice[i][0], doppler_bin=lattice[i][1])
        for g, i in zip(gains, picks)
    ]
    return DdChannel.from_paths(grid, paths)


def _check_length(x: npt.ArrayLike, ch: DdChannel) -> ComplexArray:
    x = np.asarray(x, dtype=np.complex128)
    if x.ndim != 1 or x.size != ch.grid.mn:
        raise InputShapeError(
            f"Expected a vector of length {ch.grid.mn}",
            details={"shape": list(x.shape)}
        )
    return x


def doppler_ramp(k: int, mn: int) -> ComplexArray:
    """Diagonal of Delta^k: exp(j 2 pi k q / MN)."""
    return np.exp(2j * np.pi * k * np.arange(mn) / mn)


def apply_channel(s: npt.ArrayLike, ch: DdChannel) -> ComplexArray:
    """r = H s."""
    s = _check_length(s, ch)
    mn = ch.grid.mn
    out = np.zeros(mn, dtype=np.complex128)
    for path in ch.paths:
        out += path.gain * np.roll(s * doppler_ramp(path.doppler_bin, mn), path.delay_bin)
    return out


def apply_channel_adjoint(
    v: npt.ArrayLike,
    ch: DdChannel,
    counter: Optional["CmCounter"] = None
) -> ComplexArray:
    """r_ce = H^H v = sum_p conj(h_p) Delta^{-k_p} Pi^{-l_p} v."""
    v = _check_length(v, ch)
    mn = ch.grid.mn
    out = np.zeros(mn, dtype=np.complex128)
    for path in ch.paths:
        out += np.conj(path.gain) * (doppler_ramp(-path.doppler_bin, mn) * np.roll(v, -path.delay_bin))
    if counter is not None:
        counter.add("adjoint", 2 * mn * ch.num_paths)
    return out


def apply_channel_with_cp(x_ext: npt.ArrayLike, ch: DdChannel, cp_len: int) -> ComplexArray:
    """Time-varying linear convolution of a CP-extended frame.

    Sample q' of the output is sum_p h_p exp(j2pi k_p (q'-cp-l_p)/MN) x[q'-l_p],
    with samples before the start of the burst taken as zero. The Doppler phase
    is referenced to the first sample of the core frame so that removing a CP
    of length >= alpha - 1 leaves exactly H s.
    """
    x_ext = np.asarray(x_ext, dtype=np.complex128)
    mn = ch.grid.mn
    if x_ext.ndim != 1 or x_ext.size != mn + cp_len:
        raise InputShapeError(
            f"Expected a CP-extended vector of length {mn + cp_len}",
            details={"shape": list(x_ext.shape), "cp_len": cp_len}
        )
    q = np.arange(x_ext.size)
    out = np.zeros(x_ext.size, dtype=np.complex128)
    for path in ch.paths:
        delayed = np.zeros_like(x_ext)
        delayed[path.delay_bin:] = x_ext[:x_ext.size - path.delay_bin]
        phase = np.exp(2j * np.pi * path.doppler_bin * (q - cp_len - path.delay_bin) / mn)
        out += path.gain * phase * delayed
    return out


def add_awgn(x: npt.ArrayLike, noise: NoiseModel) -> ComplexArray:
    """x + n with n ~ CN(0, sigma_n_sq I), deterministic for a given seed."""
    x = np.asarray(x, dtype=np.complex128)
    if noise.sigma_n_sq == 0:
        return x.copy()
    rng = np.random.default_rng(noise.rng_seed)
    scale = np.sqrt(noise.sigma_n_sq / 2.0)
    n = scale * (rng.standard_normal(x.shape) + 1j * rng.standard_normal(x.shape))
    return x + n
