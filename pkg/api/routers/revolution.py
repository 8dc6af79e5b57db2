"""
Surface-of-revolution API endpoints.
"""

import numpy as np
from fastapi import APIRouter

from models.requests import CapRequest, ProfileRequest, StabilityRequest
from routers.common import raise_http
from services.errors import BadParameters
from services.reporting import to_plain
from services.revolution_lab import (
    build_cap,
    metric_from_profile,
    profile_from_description,
    profile_preset,
    roundtrip_error,
    stability_and_spectrum,
    surface_preset,
)

router = APIRouter(prefix="/api/rev", tags=["revolution"])


@router.post("/profile")
async def profile(request: ProfileRequest):
    """
    Sample a profile given by preset or by an inline profile file.

    Returns (v, I, K) samples and the grid-verified shape flags; with
    `metric` set, also the profile-to-metric roundtrip error.
    """
    try:
        if request.profile is not None:
            prof = profile_from_description(request.profile, name="inline")
        elif request.preset:
            prof = profile_preset(request.preset)
        else:
            raise BadParameters("Give a preset or a profile")
        result = {"profile": prof, "samples": prof.samples(request.points)}
        if request.metric:
            surface = metric_from_profile(prof)
            result["surface"] = surface
            result["roundtrip_error"] = roundtrip_error(prof, surface)
        return to_plain(result)
    except Exception as e:
        raise_http("Profile", e)


@router.post("/cap")
async def cap(request: CapRequest):
    """Build the prescribed cap and return its validation report and samples."""
    try:
        result = build_cap(request.delta, request.k, request.alpha)
        return to_plain({"cap": result, "samples": result.profile.samples(request.points)})
    except Exception as e:
        raise_http("Cap construction", e)


@router.post("/stability")
async def stability(request: StabilityRequest):
    """Strict stability and spectral margin of parallel circles."""
    try:
        surface = surface_preset(request.surface)
        rows = [stability_and_spectrum(surface, float(r)) for r in np.asarray(request.radii)]
        return to_plain({"surface": request.surface, "rows": rows})
    except Exception as e:
        raise_http("Stability", e)
