"""
Complex-multiplication (CM) accounting.

CmCounter is threaded through the solver as an optional argument; passing
None skips all bookkeeping. CmFormula evaluates the closed-form costs of the
proposed receiver (per operation and per receiver) exactly, as rationals.
"""
from dataclasses import dataclass, field, fields
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from ..core.exceptions import InvalidParameterError
from ..models.responses import AuditReport, StageAudit
from .dd_core import is_power_of_two
from .modem import SchemeKind

COUNTER_STAGES = (
    "assemble",
    "factor_core",
    "strips",
    "schur",
    "solve_lower",
    "solve_upper",
    "adjoint",
    "demod",
)

# audit row -> counter stages summed into it
AUDIT_ROWS: Tuple[Tuple[str, Tuple[str, ...]], ...] = (
    ("assemble", ("assemble",)),
    ("factor_core", ("factor_core",)),
    ("strips", ("strips",)),
    ("schur", ("schur",)),
    ("solve", ("solve_lower", "solve_upper")),
    ("adjoint", ("adjoint",)),
    ("demod", ("demod",)),
)

FLAG_FACTOR = 2

# Stages whose measured count sits above the closed form for a structural reason.
KNOWN_OVERHEAD = {
    "strips": (
        "E and V are dense, so building them costs about Q*theta^2 CMs on top of the "
        "banded estimate; the ratio is expected and is not a regression"
    ),
}


@dataclass
class CmCounter:
    """Per-stage CM tallies for one receiver run."""

    assemble: int = 0
    factor_core: int = 0
    strips: int = 0
    schur: int = 0
    solve_lower: int = 0
    solve_upper: int = 0
    adjoint: int = 0
    demod: int = 0

    def add(self, stage: str, count: int) -> None:
        if stage not in COUNTER_STAGES:
            raise InvalidParameterError(f"Unknown counter stage '{stage}'", details={"stages": list(COUNTER_STAGES)})
        if count < 0:
            raise InvalidParameterError("CM counts cannot decrease", details={"stage": stage, "count": count})
        setattr(self, stage, getattr(self, stage) + int(count))

    @property
    def total(self) -> int:
        return sum(getattr(self, f.name) for f in fields(self))

    def as_dict(self) -> Dict[str, int]:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def merge(self, other: "CmCounter") -> "CmCounter":
        merged = CmCounter()
        for name in COUNTER_STAGES:
            setattr(merged, name, getattr(self, name) + getattr(other, name))
        return merged

    def __add__(self, other: "CmCounter") -> "CmCounter":
        return self.merge(other)


@dataclass(frozen=True)
class CmFormula:
    """Closed-form CM counts for frame size M x N and channel (alpha, beta, P)."""

    m: int
    n: int
    alpha: int
    beta: int
    p: int
    scheme: SchemeKind = field(default=SchemeKind.OTFS)

    def __post_init__(self):
        if not (is_power_of_two(self.m) and is_power_of_two(self.n)):
            raise InvalidParameterError(
                "M and N must be positive powers of two",
                details={"m": self.m, "n": self.n}
            )
        if self.alpha < 1 or self.beta < 0 or self.p < 1:
            raise InvalidParameterError(
                "Require alpha >= 1, beta >= 0, P >= 1",
                details={"alpha": self.alpha, "beta": self.beta, "p": self.p}
            )

    @property
    def mn(self) -> int:
        return self.m * self.n

    def _fft_cost(self) -> Fraction:
        points = self.n if self.scheme is SchemeKind.OTFS else self.m
        return Fraction(self.mn, 2) * (points.bit_length() - 1)

    # per-operation costs

    def psi_assembly(self) -> Fraction:
        p, mn = self.p, self.mn
        return Fraction((p * p - p) * (2 * self.beta + 1) * mn + p)

    def banded_lu(self) -> Fraction:
        a = self.alpha
        return Fraction((a * a + 2 * a) * self.mn)

    def strips(self) -> Fraction:
        a = self.alpha
        return a * self.mn - Fraction(3 * a ** 3 + a, 2)

    def schur(self) -> Fraction:
        a, mn = self.alpha, self.mn
        return a * a * mn - mn + Fraction(2 * a ** 3, 3)

    def solves(self) -> Fraction:
        a = self.alpha
        return self.mn * (2 * a - 1) + Fraction(3 * a * a, 2) + Fraction(a, 2)

    def adjoint(self) -> Fraction:
        return Fraction(self.p * (self.beta + 1) * self.mn)

    def demod(self) -> Fraction:
        return self._fft_cost()

    def operation_cost(self, stage: str) -> Fraction:
        rows = {
            "assemble": self.psi_assembly,
            "factor_core": self.banded_lu,
            "strips": self.strips,
            "schur": self.schur,
            "solve": self.solves,
            "adjoint": self.adjoint,
            "demod": self.demod,
        }
        if stage not in rows:
            raise InvalidParameterError(f"Unknown cost row '{stage}'", details={"stages": list(rows)})
        value = rows[stage]()
        if value <= 0:
            raise InvalidParameterError(
                f"Stage '{stage}' formula is non-positive; alpha is not small against MN",
                details={"stage": stage, "alpha": self.alpha, "mn": self.mn}
            )
        return value

    # per-receiver totals

    def direct_total(self) -> Fraction:
        mn = self.mn
        return self._fft_cost() + Fraction(8, 6) * mn ** 3 + 2 * mn ** 2

    def proposed_total(self) -> Fraction:
        a, b, p, mn = self.alpha, self.beta, self.p, self.mn
        per_sample = 2 * a * a + 2 * p * p * b + 9 * a - p * b - 3
        return self._fft_cost() + mn * per_sample + Fraction(2 * a ** 3, 3) + 2 * a + p


def formula_table1(
    stage: str,
    m: int,
    n: int,
    alpha: int,
    beta: int,
    p: int,
    scheme: SchemeKind = SchemeKind.OTFS
) -> Fraction:
    return CmFormula(m=m, n=n, alpha=alpha, beta=beta, p=p, scheme=scheme).operation_cost(stage)


def formula_direct(m: int, n: int, scheme: SchemeKind = SchemeKind.OTFS) -> Fraction:
    """Direct LMMSE cost; independent of the channel parameters."""
    return CmFormula(m=m, n=n, alpha=1, beta=0, p=1, scheme=scheme).direct_total()


def formula_table2_proposed(
    m: int,
    n: int,
    alpha: int,
    beta: int,
    p: int,
    scheme: SchemeKind = SchemeKind.OTFS
) -> Fraction:
    return CmFormula(m=m, n=n, alpha=alpha, beta=beta, p=p, scheme=scheme).proposed_total()


def audit_run(counter: CmCounter, params: CmFormula) -> AuditReport:
    """Compare measured CMs against the per-operation closed forms, flagging stages above FLAG_FACTOR x."""
    rows: List[StageAudit] = []
    for row, stages in AUDIT_ROWS:
        measured = sum(getattr(counter, s) for s in stages)
        try:
            analytic: Optional[float] = float(params.operation_cost(row))
        except InvalidParameterError:
            analytic = None
        ratio = measured / analytic if analytic else None
        rows.append(StageAudit(
            stage=row,
            measured=measured,
            analytic=analytic,
            ratio=ratio,
            flagged=bool(analytic is not None and measured > FLAG_FACTOR * analytic)
        ))
    return AuditReport(
        params={
            "m": params.m, "n": params.n, "alpha": params.alpha,
            "beta": params.beta, "p": params.p, "scheme": params.scheme.value
        },
        rows=rows,
        total_measured=counter.total,
        flagged_stages=[r.stage for r in rows if r.flagged],
        notes={r.stage: KNOWN_OVERHEAD[r.stage] for r in rows if r.flagged and r.stage in KNOWN_OVERHEAD}
    )


def audit_to_frame(report: AuditReport) -> pd.DataFrame:
    return pd.DataFrame(
        [{"stage": r.stage, "measured": r.measured, "analytic": r.analytic, "ratio": r.ratio} for r in report.rows],
        columns=["stage", "measured", "analytic", "ratio"]
    )


def format_audit(report: AuditReport) -> str:
    lines = [
        "CM audit (" + ", ".join(f"{k}={v}" for k, v in report.params.items()) + ")",
        f"{'stage':<12}{'measured':>14}{'analytic':>16}{'ratio':>9}",
    ]
    for r in report.rows:
        analytic = f"{r.analytic:.1f}" if r.analytic is not None else "n/a"
        ratio = f"{r.ratio:.3f}" if r.ratio is not None else "n/a"
        flag = "  <-- above 2x" if r.flagged else ""
        lines.append(f"{r.stage:<12}{r.measured:>14}{analytic:>16}{ratio:>9}{flag}")
    lines.append(f"{'total':<12}{report.total_measured:>14}")
    for stage, note in report.notes.items():
        lines.append(f"note: {stage}: {note}")
    return "\n".join(lines)


def fit_scaling_exponent(sizes: Sequence[int], counts: Sequence[int]) -> float:
    """Least-squares slope of log(count) against log(size)."""
    slope, _ = np.polyfit(np.log(np.asarray(sizes, dtype=float)), np.log(np.asarray(counts, dtype=float)), 1)
    return float(slope)
