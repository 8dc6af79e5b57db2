"""
Singular surface API endpoints.
"""

from fastapi import APIRouter

from models.requests import CoverageRequest, SurfaceRequest
from routers.common import raise_http
from services.calibration_engine import parse_total, pipe_clearing_coverage
from services.cusp_assembly import assemble_surface, sublevel_samples, surface_dump, surface_report
from services.level_graph import validate_graph
from services.reporting import to_plain

router = APIRouter(prefix="/api/surface", tags=["surface"])


@router.post("/assemble")
async def assemble(request: SurfaceRequest):
    """Assemble the singular surface and evaluate sublevel areas at the given levels."""
    try:
        s = assemble_surface(validate_graph(request.graph))
        return to_plain({
            "surface": surface_dump(s),
            "areas": sublevel_samples(s, request.t),
            "report": surface_report(s),
        })
    except Exception as e:
        raise_http("Assembly", e)


@router.post("/coverage")
async def coverage(request: CoverageRequest):
    """
    Pipe-clearing coverage of (0, total).

    A connected critical level leaves a gap, reported in the `gaps`
    section rather than as an error unless `strict` is set.
    """
    try:
        s = assemble_surface(validate_graph(request.graph))
        total = parse_total(request.total)
        return to_plain(pipe_clearing_coverage(s, total=total, strict=request.strict))
    except Exception as e:
        raise_http("Coverage", e)
