"""
Version 1 API endpoints for BER sweeps and complexity reports.
"""
from typing import Any, Dict, NoReturn

from fastapi import APIRouter, Depends, HTTPException
from fastapi.concurrency import run_in_threadpool

from ...core.config import Settings, get_settings
from ...core.exceptions import OtfsSimException, http_status
from ...core.logging import get_logger
from ...models.requests import AuditRequest, ComplexityRequest, SimConfig
from ...models.responses import AuditReport, BerSweepResponse, ComplexityReport, ErrorResponse, HealthCheck
from ...services.channel import list_profiles, load_profile
from ...services.simulation_service import SimulationService

router = APIRouter(prefix="/v1", tags=["Simulations v1"])
logger = get_logger(__name__)

ERROR_RESPONSES = {
    400: {"model": ErrorResponse, "description": "Bad Request"},
    404: {"model": ErrorResponse, "description": "Profile Not Found"},
    413: {"model": ErrorResponse, "description": "Frame Too Large"},
    500: {"model": ErrorResponse, "description": "Internal Server Error"}
}


def get_simulation_service() -> SimulationService:
    """Dependency to get simulation service instance."""
    return SimulationService()


def _raise_http(e: Exception) -> NoReturn:
    if isinstance(e, OtfsSimException):
        status = http_status(e)
        log = logger.warning if status < 500 else logger.error
        log(f"{e.error_code}: {e.message}")
        detail = {"error_code": e.error_code, "message": e.message, "details": e.details}
    else:
        status = 500
        logger.error(f"Unexpected error: {e}")
        detail = {
            "error_code": "INTERNAL_ERROR",
            "message": "An unexpected error occurred",
            "details": {"error": str(e)}
        }
    raise HTTPException(status_code=status, detail=detail)


@router.post(
    "/simulations/ber",
    response_model=BerSweepResponse,
    responses=ERROR_RESPONSES,
    summary="Run BER Sweep",
    description="Monte-Carlo BER of the LMMSE receiver over a list of SNR points"
)
async def run_ber_sweep(
    cfg: SimConfig,
    service: SimulationService = Depends(get_simulation_service)
) -> BerSweepResponse:
    """
    Simulate cfg.frames frames per SNR point and count bit errors.

    - **scheme**: otfs or ofdm
    - **receiver**: fast (partitioned LU) or dense (reference solve, M*N <= 1024)
    - **snr_db**: SNR points, E_s/N_0 per QAM symbol
    """
    try:
        return await run_in_threadpool(service.run_ber_sweep, cfg)
    except Exception as e:
        _raise_http(e)


@router.post(
    "/complexity",
    response_model=ComplexityReport,
    responses=ERROR_RESPONSES,
    summary="Complexity Sweep",
    description="Closed-form CM counts of the direct and proposed receivers for M = 2 .. m_max"
)
async def complexity_report(
    request: ComplexityRequest,
    service: SimulationService = Depends(get_simulation_service)
) -> ComplexityReport:
    try:
        return service.run_complexity_report(request)
    except Exception as e:
        _raise_http(e)


@router.post(
    "/complexity/audit",
    response_model=AuditReport,
    responses=ERROR_RESPONSES,
    summary="CM Audit",
    description="Instrumented receiver run compared stage by stage against the closed forms"
)
async def complexity_audit(
    request: AuditRequest,
    service: SimulationService = Depends(get_simulation_service)
) -> AuditReport:
    try:
        return await run_in_threadpool(service.run_audit, request)
    except Exception as e:
        _raise_http(e)


@router.get(
    "/health",
    response_model=HealthCheck,
    summary="Health Check",
    description="Check API health status"
)
async def health_check(settings: Settings = Depends(get_settings)) -> HealthCheck:
    """Check the health status of the API."""
    return HealthCheck(
        status="healthy",
        version=settings.api_version
    )


@router.get(
    "/profiles",
    summary="List Power-Delay Profiles",
    description="Bundled and user-supplied power-delay profiles"
)
async def get_profiles(settings: Settings = Depends(get_settings)) -> Dict[str, Any]:
    profiles = []
    for name in list_profiles(settings.profile_dir):
        profile = load_profile(name, settings.profile_dir)
        profiles.append({"name": name, "taps": profile.num_taps, "tau_max_ns": float(profile.delays_ns.max())})
    return {"profiles": profiles, "default": settings.default_profile}
