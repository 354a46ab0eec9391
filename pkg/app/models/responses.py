"""
Response models for the OTFS LMMSE simulator.
"""
from datetime import datetime
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, Field, model_validator


class BerPoint(BaseModel):
    """Bit error statistics at one SNR point."""

    snr_db: float = Field(description="SNR (dB), E_s/N_0 per QAM symbol")
    bit_errors: int = Field(ge=0, description="Number of bit errors")
    bits_total: int = Field(ge=0, description="Number of bits sent")
    ber: float = Field(ge=0, le=1, description="bit_errors / bits_total")
    frames: int = Field(ge=0, description="Frames simulated")

    @model_validator(mode='after')
    def validate_counts(self):
        if self.bit_errors > self.bits_total:
            raise ValueError('bit_errors cannot exceed bits_total')
        return self

    @classmethod
    def from_counts(cls, snr_db: float, bit_errors: int, bits_total: int, frames: int) -> "BerPoint":
        ber = bit_errors / bits_total if bits_total else 0.0
        return cls(snr_db=snr_db, bit_errors=bit_errors, bits_total=bits_total, ber=ber, frames=frames)


class BerSweepResponse(BaseModel):
    """BER curve for one scheme / receiver combination."""

    success: bool = Field(default=True, description="Request success status")
    scheme: str = Field(description="Modulation scheme")
    receiver: str = Field(description="Equalizer implementation")
    points: List[BerPoint] = Field(description="One entry per SNR point")
    csv_filename: Optional[str] = Field(None, description="CSV export path")
    metadata: Dict[str, Any] = Field(default_factory=dict, description="Grid, channel and SNR convention")


class ComplexityRow(BaseModel):
    """Closed-form CM counts at one point of the M sweep."""

    profile: str
    scheme: str
    m: int
    n: int
    alpha: int
    beta: int
    p: int
    direct_cm: float
    proposed_cm: float
    ratio: float


class ComplexityReport(BaseModel):
    success: bool = Field(default=True)
    rows: List[ComplexityRow]
    max_ratio: Dict[str, float] = Field(description="Largest direct/proposed ratio per (scheme, N)")
    csv_filename: Optional[str] = None


class StageAudit(BaseModel):
    """Measured vs closed-form CMs for one receiver stage."""

    stage: str
    measured: int = Field(ge=0)
    analytic: Optional[float] = Field(None, description="Closed-form count, None outside its validity range")
    ratio: Optional[float] = None
    flagged: bool = Field(default=False, description="measured > 2x analytic")


class AuditReport(BaseModel):
    params: Dict[str, Any]
    rows: List[StageAudit]
    total_measured: int
    flagged_stages: List[str] = Field(default_factory=list)
    notes: Dict[str, str] = Field(default_factory=dict)
    csv_filename: Optional[str] = None

    def row(self, stage: str) -> StageAudit:
        for r in self.rows:
            if r.stage == stage:
                return r
        raise KeyError(stage)


class SelfTestCase(BaseModel):
    name: str
    passed: bool
    max_error: float
    detail: Optional[str] = None


class SelfTestReport(BaseModel):
    passed: bool
    cases: List[SelfTestCase]


class HealthCheck(BaseModel):
    """Health check response."""

    status: str = Field(default="healthy", description="Service status")
    timestamp: datetime = Field(default_factory=datetime.utcnow, description="Check timestamp")
    version: str = Field(description="API version")


class ErrorResponse(BaseModel):
    """Error response model."""

    success: bool = Field(default=False, description="Request success status")
    error_code: str = Field(description="Error code")
    message: str = Field(description="Error message")
    details: Optional[Dict[str, Any]] = Field(None, description="Error details")
