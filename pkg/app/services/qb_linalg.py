"""
Quasi-banded matrices and their partitioned LU factorization.

A quasi-banded matrix of size MN with half-bandwidth theta has nonzeros only
on the cyclic diagonals -theta..theta. ``band[q, theta + o]`` holds the entry
at ``(q, (q + o) mod MN)``. With Q = MN - theta it splits as

    [ T  B ]   [ L  0 ] [ U  E ]
    [ S  C ] = [ V  F ] [ 0  G ]

where T is strictly banded (no wrap-around), B and S are thin strips and C is
theta x theta. L, U are banded triangular factors of T, E = L^-1 B,
V = S U^-1 and F G is the LU of the Schur complement C - V E.

No pivoting is performed anywhere; Psi = H H^H + nsr I is Hermitian positive
definite for nsr > 0, so every leading principal minor is nonzero.
"""
from dataclasses import dataclass
from typing import Optional, Tuple, TYPE_CHECKING

import numpy as np
import numpy.typing as npt
from scipy.linalg import solve_triangular

from ..core.config import get_settings
from ..core.exceptions import ConfigurationError, InputShapeError, NumericalSingularityError
from ..core.logging import get_logger
from .channel import DdChannel
from .dd_core import ComplexArray

if TYPE_CHECKING:
    from .complexity import CmCounter

logger = get_logger(__name__)


def _count(counter: Optional["CmCounter"], stage: str, n: int) -> None:
    if counter is not None:
        counter.add(stage, n)


@dataclass(frozen=True, eq=False)
class QuasiBandedMatrix:
    """Square matrix stored by its 2*half_bw + 1 cyclic diagonals."""

    size: int
    half_bw: int
    band: ComplexArray
    hermitian: bool = False

    def __post_init__(self):
        band = np.asarray(self.band, dtype=np.complex128)
        if band.shape != (self.size, 2 * self.half_bw + 1):
            raise InputShapeError(
                "Band storage has the wrong shape",
                details={"shape": list(band.shape), "size": self.size, "half_bw": self.half_bw}
            )
        if self.half_bw and 2 * self.half_bw >= self.size:
            raise ConfigurationError(
                f"Half-bandwidth {self.half_bw} is too large for size {self.size}",
                details={"size": self.size, "half_bw": self.half_bw}
            )
        object.__setattr__(self, "band", band)

    @property
    def core_size(self) -> int:
        """Q = size - half_bw, the order of the banded block T."""
        return self.size - self.half_bw

    def offsets(self) -> range:
        return range(-self.half_bw, self.half_bw + 1)

    def to_dense(self) -> ComplexArray:
        n = self.size
        dense = np.zeros((n, n), dtype=np.complex128)
        rows = np.arange(n)
        for o in self.offsets():
            dense[rows, (rows + o) % n] += self.band[:, self.half_bw + o]
        return dense

    def block(self, r0: int, r1: int, c0: int, c1: int) -> ComplexArray:
        """Dense copy of rows r0:r1, columns c0:c1."""
        out = np.zeros((r1 - r0, c1 - c0), dtype=np.complex128)
        rows = np.arange(r0, r1)
        for o in self.offsets():
            cols = (rows + o) % self.size
            mask = (cols >= c0) & (cols < c1)
            out[rows[mask] - r0, cols[mask] - c0] = self.band[rows[mask], self.half_bw + o]
        return out

    def matvec(self, x: npt.ArrayLike) -> ComplexArray:
        x = np.asarray(x, dtype=np.complex128)
        if x.shape != (self.size,):
            raise InputShapeError(f"Expected a vector of length {self.size}", details={"shape": list(x.shape)})
        y = np.zeros(self.size, dtype=np.complex128)
        for o in self.offsets():
            y += self.band[:, self.half_bw + o] * np.roll(x, -o)
        return y

    def is_hermitian(self, atol: float = 1e-10) -> bool:
        n, t = self.size, self.half_bw
        rows = np.arange(n)
        for o in self.offsets():
            mirror = self.band[(rows + o) % n, t - o]
            if not np.allclose(self.band[:, t + o], np.conj(mirror), atol=atol):
                return False
        return True


@dataclass(frozen=True, eq=False)
class PartitionedLU:
    """Factors of a quasi-banded matrix.

    lower[i, r - 1] = L(i, i - r) for r = 1..theta (unit diagonal implied),
    upper[i, c] = U(i, i + c) for c = 0..theta, inv_diag[i] = 1 / U(i, i).
    """

    n: int
    theta: int
    lower: ComplexArray
    upper: ComplexArray
    inv_diag: ComplexArray
    e: ComplexArray
    v: ComplexArray
    f: ComplexArray
    g: ComplexArray

    @property
    def q(self) -> int:
        return self.n - self.theta

    def dense_factors(self) -> Tuple[ComplexArray, ComplexArray]:
        """Full (L, U) with Psi = L U, for inspection and tests."""
        n, q, t = self.n, self.q, self.theta
        big_l = np.zeros((n, n), dtype=np.complex128)
        big_u = np.zeros((n, n), dtype=np.complex128)
        rows = np.arange(q)
        big_l[rows, rows] = 1.0
        for r in range(1, t + 1):
            sel = rows[rows >= r]
            big_l[sel, sel - r] = self.lower[sel, r - 1]
        for c in range(t + 1):
            sel = rows[rows + c < q]
            big_u[sel, sel + c] = self.upper[sel, c]
        big_l[q:, :q] = self.v
        big_l[q:, q:] = self.f
        big_u[:q, q:] = self.e
        big_u[q:, q:] = self.g
        return big_l, big_u

    def solve(self, r: npt.ArrayLike, counter: Optional["CmCounter"] = None) -> ComplexArray:
        return solve_upper(self, solve_lower(self, r, counter), counter)


def assemble_psi(ch: DdChannel, nsr: float, counter: Optional["CmCounter"] = None) -> QuasiBandedMatrix:
    """Psi = H H^H + nsr I, built directly in band storage.

    Path pair (p, s) lands on the cyclic diagonal l_s - l_p with value
    h_p conj(h_s) exp(j 2 pi (k_p - k_s)(q - l_p) / MN) in row q.
    """
    if not nsr > 0:
        raise ConfigurationError("nsr must be positive to assemble Psi", details={"nsr": nsr})
    mn, theta = ch.grid.mn, ch.theta
    band = np.zeros((mn, 2 * theta + 1), dtype=np.complex128)
    q = np.arange(mn)

    gains = ch.gains
    band[:, theta] = float(np.sum(np.abs(gains) ** 2)) + nsr
    _count(counter, "assemble", ch.num_paths)

    for p, path_p in enumerate(ch.paths):
        for s, path_s in enumerate(ch.paths):
            if p == s:
                continue
            coef = path_p.gain * np.conj(path_s.gain)
            dk = path_p.doppler_bin - path_s.doppler_bin
            phase = np.exp(2j * np.pi * dk * (q - path_p.delay_bin) / mn)
            band[:, theta + path_s.delay_bin - path_p.delay_bin] += coef * phase
            _count(counter, "assemble", 1 + mn)

    return QuasiBandedMatrix(size=mn, half_bw=theta, band=band, hermitian=True)


def _pivot_tolerance(psi: QuasiBandedMatrix, pivot_rtol: Optional[float]) -> float:
    rtol = get_settings().pivot_rtol if pivot_rtol is None else pivot_rtol
    return rtol * float(np.max(np.abs(psi.band)))


def _factor_core(
    psi: QuasiBandedMatrix,
    tol: float,
    counter: Optional["CmCounter"]
) -> Tuple[ComplexArray, ComplexArray, ComplexArray]:
    """Banded Doolittle LU of T without pivoting."""
    t, q = psi.half_bw, psi.core_size
    work = psi.band[:q].copy()
    # drop wrap-around and B entries; T itself never wraps
    for o in psi.offsets():
        cols = np.arange(q) + o
        work[(cols < 0) | (cols >= q), t + o] = 0

    lower = np.zeros((q, t), dtype=np.complex128)
    upper = np.zeros((q, t + 1), dtype=np.complex128)
    inv_diag = np.zeros(q, dtype=np.complex128)

    for k in range(q):
        pivot = work[k, t]
        if abs(pivot) < tol:
            raise NumericalSingularityError(
                f"Pivot {k} of the banded block is numerically zero",
                details={"pivot_index": k, "pivot_abs": float(abs(pivot)), "tolerance": tol}
            )
        inv_diag[k] = 1.0 / pivot
        d = min(t, q - 1 - k)
        upper[k, :d + 1] = work[k, t:t + d + 1]
        if d == 0:
            continue
        rs = np.arange(1, d + 1)
        mults = work[k + rs, t - rs] * inv_diag[k]
        lower[k + rs, rs - 1] = mults
        rows = (k + rs)[:, None]
        cols = (t - rs)[:, None] + rs[None, :]
        work[rows, cols] -= np.outer(mults, upper[k, 1:d + 1])
        _count(counter, "factor_core", d + d * d)

    return lower, upper, inv_diag


def _small_lu(a: ComplexArray, tol: float, counter: Optional["CmCounter"]) -> Tuple[ComplexArray, ComplexArray]:
    """Dense Doolittle LU without pivoting, for the Schur complement."""
    n = a.shape[0]
    u = a.copy()
    lo = np.eye(n, dtype=np.complex128)
    for k in range(n):
        if abs(u[k, k]) < tol:
            raise NumericalSingularityError(
                f"Pivot {k} of the Schur complement is numerically zero",
                details={"pivot_index": k, "pivot_abs": float(abs(u[k, k])), "tolerance": tol}
            )
        rest = n - k - 1
        if rest == 0:
            continue
        lo[k + 1:, k] = u[k + 1:, k] / u[k, k]
        u[k + 1:, k:] -= np.outer(lo[k + 1:, k], u[k, k:])
        u[k + 1:, k] = 0
        _count(counter, "schur", rest + rest * rest)
    return lo, u


def factor(
    psi: QuasiBandedMatrix,
    counter: Optional["CmCounter"] = None,
    pivot_rtol: Optional[float] = None
) -> PartitionedLU:
    """Partitioned LU of a quasi-banded matrix."""
    n, t = psi.size, psi.half_bw
    q = n - t
    tol = _pivot_tolerance(psi, pivot_rtol)

    lower, upper, inv_diag = _factor_core(psi, tol, counter)

    b = psi.block(0, q, q, n)
    s = psi.block(q, n, 0, q)
    c = psi.block(q, n, q, n)

    # E = L^-1 B, forward substitution down the band
    e = b.copy()
    for i in range(1, q):
        d = min(t, i)
        if d == 0:
            continue
        rs = np.arange(1, d + 1)
        e[i] -= lower[i, :d] @ e[i - rs]
        _count(counter, "strips", d * t)

    # V^H = U^-H S^H, forward substitution with the conjugate-transposed band
    y = np.conj(s.T).copy()
    for i in range(q):
        d = min(t, i)
        if d:
            cs = np.arange(1, d + 1)
            y[i] -= np.conj(upper[i - cs, cs]) @ y[i - cs]
        y[i] *= np.conj(inv_diag[i])
        _count(counter, "strips", d * t + t)
    v = np.conj(y.T)

    schur = c - v @ e
    _count(counter, "schur", t * t * q)
    f, g = _small_lu(schur, tol, counter)

    logger.debug(f"Factored quasi-banded matrix: size={n}, theta={t}")
    return PartitionedLU(n=n, theta=t, lower=lower, upper=upper, inv_diag=inv_diag, e=e, v=v, f=f, g=g)


def _check_rhs(lu: PartitionedLU, r: npt.ArrayLike) -> ComplexArray:
    r = np.asarray(r, dtype=np.complex128)
    if r.shape != (lu.n,):
        raise InputShapeError(f"Expected a vector of length {lu.n}", details={"shape": list(r.shape)})
    return r


def solve_lower(lu: PartitionedLU, r: npt.ArrayLike, counter: Optional["CmCounter"] = None) -> ComplexArray:
    """Solve [[L, 0], [V, F]] x = r."""
    r = _check_rhs(lu, r)
    q, t = lu.q, lu.theta
    x = r.copy()
    for i in range(1, q):
        d = min(t, i)
        if d == 0:
            continue
        x[i] -= lu.lower[i, :d] @ x[i - np.arange(1, d + 1)]
        _count(counter, "solve_lower", d)

    if t:
        tail = x[q:] - lu.v @ x[:q]
        x[q:] = solve_triangular(lu.f, tail, lower=True, unit_diagonal=True)
        _count(counter, "solve_lower", t * q + t * (t - 1) // 2)
    return x


def solve_upper(lu: PartitionedLU, r: npt.ArrayLike, counter: Optional["CmCounter"] = None) -> ComplexArray:
    """Solve [[U, E], [0, G]] x = r."""
    r = _check_rhs(lu, r)
    q, t = lu.q, lu.theta
    x = np.zeros(lu.n, dtype=np.complex128)

    if t:
        if np.any(np.diag(lu.g) == 0):
            raise NumericalSingularityError("Schur factor G has a zero on its diagonal")
        x[q:] = solve_triangular(lu.g, r[q:], lower=False)
        _count(counter, "solve_upper", t * (t + 1) // 2)

    tail = x[q:]
    for i in range(q - 1, -1, -1):
        d = min(t, q - 1 - i)
        acc = r[i]
        if d:
            acc -= lu.upper[i, 1:d + 1] @ x[i + 1:i + d + 1]
        if t:
            acc -= lu.e[i] @ tail
        x[i] = acc * lu.inv_diag[i]
        _count(counter, "solve_upper", d + t + 1)
    return x
