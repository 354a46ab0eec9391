"""
API router configuration.
"""
from fastapi import APIRouter
from .v1 import simulations

api_router = APIRouter(prefix="/api")

# Include v1 routes
api_router.include_router(simulations.router)
