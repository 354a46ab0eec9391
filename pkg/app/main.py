"""
Main FastAPI application.
"""
import time
from contextlib import asynccontextmanager

from fastapi import FastAPI, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse

from .api import api_router
from .core.config import get_settings
from .core.exceptions import OtfsSimException, http_status
from .core.logging import get_logger, setup_logging
from .services.channel import list_profiles

setup_logging()
logger = get_logger(__name__)

app_start_time = time.time()


@asynccontextmanager
async def lifespan(app: FastAPI):
    settings = get_settings()
    profiles = list_profiles(settings.profile_dir)
    logger.info(f"🚀 OTFS LMMSE simulator {settings.api_version} starting (debug={settings.debug})")
    logger.info(f"📡 Profiles: {', '.join(profiles)} (default '{settings.default_profile}')")
    logger.info(
        f"⚙️  Sweeps use {settings.workers} worker(s), {settings.max_frame_retries} retries per frame; "
        f"dense reference limited to MN <= {settings.oracle_max_mn_lmmse}"
    )
    if settings.default_profile not in profiles:
        logger.warning(f"Default profile '{settings.default_profile}' is not installed")

    yield

    logger.info("👋 OTFS LMMSE simulator shutting down")


def create_app() -> FastAPI:
    """Create the FastAPI application."""
    settings = get_settings()

    app = FastAPI(
        title=settings.api_title,
        description=settings.api_description,
        version=settings.api_version,
        debug=settings.debug,
        lifespan=lifespan,
        docs_url="/docs",
        redoc_url="/redoc",
        openapi_url="/openapi.json"
    )

    app.add_middleware(
        CORSMiddleware,
        allow_origins=settings.cors_origins,
        allow_methods=settings.cors_allow_methods,
        allow_headers=settings.cors_allow_headers,
    )

    @app.middleware("http")
    async def log_requests(request: Request, call_next):
        start_time = time.time()
        logger.info(f"📨 {request.method} {request.url.path}")

        response = await call_next(request)

        elapsed = time.time() - start_time
        response.headers["X-Process-Time"] = f"{elapsed:.3f}"
        logger.info(f"📤 {request.method} {request.url.path} -> {response.status_code} in {elapsed:.3f}s")
        return response

    @app.exception_handler(OtfsSimException)
    async def otfs_sim_exception_handler(request: Request, exc: OtfsSimException):
        status = http_status(exc)
        log = logger.warning if status < 500 else logger.error
        log(f"{exc.error_code} on {request.url.path}: {exc.message}")
        return JSONResponse(
            status_code=status,
            content={
                "success": False,
                "error_code": exc.error_code,
                "message": exc.message,
                "details": exc.details
            }
        )

    app.include_router(api_router)

    @app.get("/", tags=["Root"])
    async def root():
        return {
            "message": "OTFS LMMSE Simulator",
            "version": settings.api_version,
            "docs_url": "/docs",
            "health_check": "/api/v1/health",
            "endpoints": [route.path for route in api_router.routes],
            "uptime_seconds": time.time() - app_start_time
        }

    return app


app = create_app()
