"""
Oracle-equivalence suite run by ``selftest``.

Each random instance draws a small grid and channel and compares the fast
path against the dense references.
"""
from typing import Dict, List, Tuple

import numpy as np

from ..core.logging import get_logger
from ..models.responses import SelfTestCase, SelfTestReport
from .channel import apply_channel, apply_channel_adjoint, random_channel
from .dd_core import OtfsGrid
from .equalizer import LmmseFastReceiver
from .modem import ModulationScheme, SchemeKind
from .oracle import dense_channel_matrix, dense_lmmse
from .qb_linalg import assemble_psi, factor

logger = get_logger(__name__)

TOLERANCE = 1e-8
# MN in {16, 64, 128}
GRID_CHOICES = ((4, 4), (8, 2), (8, 8), (16, 4), (16, 8), (32, 4))
MAX_PATHS = 5
NSR_CHOICES = (1.0, 0.1, 0.01)
CASE_NAMES = (
    "psi_matches_dense",
    "lu_reconstructs_psi",
    "adjoint_identity",
    "otfs_fast_vs_dense",
    "ofdm_fast_vs_dense",
)


def _rel_err(a: np.ndarray, b: np.ndarray) -> float:
    scale = max(np.linalg.norm(b), 1e-300)
    return float(np.linalg.norm(a - b) / scale)


def _crandn(rng: np.random.Generator, size: int) -> np.ndarray:
    return (rng.standard_normal(size) + 1j * rng.standard_normal(size)) / np.sqrt(2)


def run_selftest(instances: int = 200, seed: int = 0) -> SelfTestReport:
    rng = np.random.default_rng(seed)
    # case -> (max error, instance that produced it)
    worst: Dict[str, Tuple[float, str]] = {name: (0.0, "") for name in CASE_NAMES}

    def record(case: str, err: float, where: str) -> None:
        if err >= worst[case][0]:
            worst[case] = (err, where)

    for idx in range(instances):
        m, n = GRID_CHOICES[rng.integers(len(GRID_CHOICES))]
        grid = OtfsGrid(m=int(m), n=int(n))
        num_paths = int(rng.integers(1, MAX_PATHS + 1))
        ch = random_channel(grid, num_paths=num_paths, seed=rng)
        nsr = float(rng.choice(NSR_CHOICES))
        h = dense_channel_matrix(ch)
        where = f"instance {idx}: M={m} N={n} P={num_paths} nsr={nsr:.3g}"

        psi = assemble_psi(ch, nsr)
        dense_psi = h @ h.conj().T + nsr * np.eye(grid.mn)
        record("psi_matches_dense", _rel_err(psi.to_dense(), dense_psi), where)

        big_l, big_u = factor(psi).dense_factors()
        record("lu_reconstructs_psi", _rel_err(big_l @ big_u, dense_psi), where)

        x, y = _crandn(rng, grid.mn), _crandn(rng, grid.mn)
        lhs = np.vdot(y, apply_channel(x, ch))
        rhs = np.vdot(apply_channel_adjoint(y, ch), x)
        record("adjoint_identity", float(abs(lhs - rhs) / max(abs(lhs), 1e-300)), where)

        rx = _crandn(rng, grid.mn)
        for kind, case in ((SchemeKind.OTFS, "otfs_fast_vs_dense"), (SchemeKind.OFDM, "ofdm_fast_vs_dense")):
            scheme = ModulationScheme(kind=kind, grid=grid)
            fast = LmmseFastReceiver(ch, nsr, scheme).equalize(rx)
            dense = dense_lmmse(rx, ch, nsr, scheme)
            record(case, _rel_err(fast.data, dense.data), where)

    cases: List[SelfTestCase] = [
        SelfTestCase(name=name, passed=err <= TOLERANCE, max_error=err, detail=where or None)
        for name, (err, where) in worst.items()
    ]
    for case in cases:
        log = logger.info if case.passed else logger.error
        log(f"selftest {case.name}: max relative error {case.max_error:.2e} ({case.detail})")
    return SelfTestReport(passed=all(c.passed for c in cases), cases=cases)
