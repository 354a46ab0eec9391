"""
Request models for the OTFS LMMSE simulator.
"""
from enum import Enum
from typing import List, Optional

from pydantic import BaseModel, Field, field_validator, model_validator

from ..core.config import get_settings
from ..services.dd_core import SUPPORTED_QAM_ORDERS, OtfsGrid, is_power_of_two
from ..services.modem import SchemeKind


class ReceiverKind(str, Enum):
    FAST = "fast"
    DENSE = "dense"


def _check_power_of_two(v: int) -> int:
    if not is_power_of_two(v):
        raise ValueError('must be a positive power of two')
    return v


class SimConfig(BaseModel):
    """Monte-Carlo BER sweep configuration."""

    m: int = Field(default_factory=lambda: get_settings().default_m, description="Subcarriers (delay bins)")
    n: int = Field(default_factory=lambda: get_settings().default_n, description="Time slots (Doppler bins)")
    delta_f: float = Field(default_factory=lambda: get_settings().default_delta_f, gt=0, description="Subcarrier spacing (Hz)")
    scheme: SchemeKind = Field(default=SchemeKind.OTFS, description="Modulation scheme")
    receiver: ReceiverKind = Field(default=ReceiverKind.FAST, description="Equalizer implementation")
    qam_order: int = Field(default=4, description="QAM constellation order")
    profile: str = Field(default_factory=lambda: get_settings().default_profile, description="Profile name or .pdp file")
    speed_kmh: float = Field(default_factory=lambda: get_settings().default_speed_kmh, ge=0, description="UE speed (km/h)")
    fc_hz: float = Field(default_factory=lambda: get_settings().default_fc, gt=0, description="Carrier frequency (Hz)")
    snr_db: List[float] = Field(default_factory=lambda: [0.0, 5.0, 10.0, 15.0, 20.0], description="SNR points (dB)")
    frames: int = Field(default=10, ge=1, description="Frames per SNR point")
    seed: int = Field(default=0, ge=0, description="Master seed")
    use_cp: bool = Field(default=False, description="Transmit a CP and apply the channel as a linear convolution")
    snr_includes_cp: bool = Field(default=False, description="Count CP energy against the SNR")
    output: Optional[str] = Field(default=None, description="CSV output path")

    @field_validator('m', 'n')
    @classmethod
    def validate_dims(cls, v):
        return _check_power_of_two(v)

    @field_validator('qam_order')
    @classmethod
    def validate_qam_order(cls, v):
        if v not in SUPPORTED_QAM_ORDERS:
            raise ValueError(f'qam_order must be one of {list(SUPPORTED_QAM_ORDERS)}')
        return v

    @field_validator('snr_db')
    @classmethod
    def validate_snr_list(cls, v):
        if not v:
            raise ValueError('snr_db must contain at least one point')
        return v

    @model_validator(mode='after')
    def validate_dense_size(self):
        limit = get_settings().oracle_max_mn_lmmse
        if self.receiver is ReceiverKind.DENSE and self.m * self.n > limit:
            raise ValueError(f'dense receiver needs M*N <= {limit}')
        return self

    @property
    def grid(self) -> OtfsGrid:
        return OtfsGrid(m=self.m, n=self.n, delta_f=self.delta_f)

    @property
    def speed_mps(self) -> float:
        return self.speed_kmh / 3.6

    @classmethod
    def full_scale(cls, **overrides) -> "SimConfig":
        """Full-size grid: 512 x 128, 15 kHz, 4-QAM, EVA at 500 km/h, 4 GHz."""
        params = dict(
            m=512, n=128, delta_f=15_000.0, qam_order=4, profile="eva",
            speed_kmh=500.0, fc_hz=4e9, receiver=ReceiverKind.FAST
        )
        params.update(overrides)
        return cls(**params)


class ComplexityRequest(BaseModel):
    """Parameters of the direct-vs-proposed CM sweep over M."""

    profile: str = Field(default_factory=lambda: get_settings().default_profile, description="Profile name or .pdp file")
    n_values: List[int] = Field(default_factory=lambda: [16, 128], description="Block sizes N")
    m_max: int = Field(default=4096, description="Largest M in the sweep")
    delta_f: float = Field(default_factory=lambda: get_settings().default_delta_f, gt=0)
    speed_kmh: float = Field(default_factory=lambda: get_settings().default_speed_kmh, ge=0)
    fc_hz: float = Field(default_factory=lambda: get_settings().default_fc, gt=0)
    output: Optional[str] = Field(default=None, description="CSV output path")

    @field_validator('m_max')
    @classmethod
    def validate_m_max(cls, v):
        if v < 2:
            raise ValueError('m_max must be at least 2')
        return _check_power_of_two(v)

    @field_validator('n_values')
    @classmethod
    def validate_n_values(cls, v):
        if not v:
            raise ValueError('n_values must contain at least one block size')
        for n in v:
            _check_power_of_two(n)
        return v

    @property
    def speed_mps(self) -> float:
        return self.speed_kmh / 3.6


class AuditRequest(BaseModel):
    """One instrumented receiver run compared against the closed forms."""

    m: int = Field(default=64, description="Subcarriers")
    n: int = Field(default=16, description="Time slots")
    delta_f: float = Field(default_factory=lambda: get_settings().default_delta_f, gt=0)
    scheme: SchemeKind = Field(default=SchemeKind.OTFS)
    profile: str = Field(default_factory=lambda: get_settings().default_profile)
    speed_kmh: float = Field(default_factory=lambda: get_settings().default_speed_kmh, ge=0)
    fc_hz: float = Field(default_factory=lambda: get_settings().default_fc, gt=0)
    snr_db: float = Field(default=15.0)
    seed: int = Field(default=0, ge=0)
    output: Optional[str] = Field(default=None, description="CSV output path")

    @field_validator('m', 'n')
    @classmethod
    def validate_dims(cls, v):
        return _check_power_of_two(v)

    @property
    def grid(self) -> OtfsGrid:
        return OtfsGrid(m=self.m, n=self.n, delta_f=self.delta_f)

    @property
    def speed_mps(self) -> float:
        return self.speed_kmh / 3.6
