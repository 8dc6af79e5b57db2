"""
Conformal construction API endpoints.
"""

from fastapi import APIRouter

from models.requests import ConformalRequest, VanishingRequest
from routers.common import raise_http
from services.conformal_forge import (
    asymptotic_diagnostics,
    conformal_report,
    conformal_solve,
    vanishing_profile_construction,
)
from services.reporting import to_plain
from services.revolution_lab import profile_preset

router = APIRouter(prefix="/api/conformal", tags=["conformal"])


@router.post("/solve")
async def solve(request: ConformalRequest):
    """Solve for the level volume V(t) and report the grid invariants."""
    try:
        sol = conformal_solve(profile_preset(request.preset), n=request.n, t0=request.t0)
        result = {"solution": sol, "report": conformal_report(sol)}
        if request.diagnostics and sol.blowup and sol.n == 2:
            result["diagnostics"] = asymptotic_diagnostics(sol)
        return to_plain(result)
    except Exception as e:
        raise_http("Conformal solve", e)


@router.post("/vanishing")
async def vanishing(request: VanishingRequest):
    """Bands with prescribed volume and vanishing boundary measure."""
    try:
        return to_plain(vanishing_profile_construction(request.targets))
    except Exception as e:
        raise_http("Vanishing construction", e)
