"""
Oracle and verification API endpoints.
"""

from fastapi import APIRouter, Query

from models.requests import SearchRequest, VerifyRequest
from routers.common import raise_http
from services.oracle_bench import competitor_search, search_report, singular_flux
from services.property_suite import property_suite
from services.reporting import to_plain
from services.revolution_lab import surface_preset

router = APIRouter(prefix="/api", tags=["oracle"])


@router.post("/oracle/search")
async def search(request: SearchRequest):
    """
    Seeded competitor search against the parallel circle.

    Beating the circle is reported in the result; it is never an error.
    """
    try:
        result = competitor_search(
            surface_preset(request.surface), request.v, modes=request.modes, trials=request.trials, seed=request.seed
        )
        return to_plain({"result": result, "report": search_report(result)})
    except Exception as e:
        raise_http("Competitor search", e)


@router.get("/oracle/flux")
async def flux(r: float = Query(..., description="Chart radius in (0, log 2]"), u_p: float = 1.0):
    """Flux of the calibrating form across the model circle."""
    try:
        return to_plain(singular_flux(r, u_p))
    except Exception as e:
        raise_http("Flux", e)


@router.post("/verify")
async def verify(request: VerifyRequest):
    """Run the property suite for the selected modules."""
    try:
        return to_plain(property_suite(request.targets or None, seed=request.seed, full=request.full))
    except Exception as e:
        raise_http("Verification", e)
