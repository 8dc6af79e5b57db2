"""
Level graph API endpoints.
"""

from fastapi import APIRouter

from models.requests import GraphRequest
from routers.common import raise_http
from services.level_graph import (
    assign_weights,
    check_weight_bounds,
    renormalize_levels,
    validate_graph,
    verify_level_sums,
)
from services.reporting import to_plain

router = APIRouter(prefix="/api/graph", tags=["graph"])


@router.post("/validate")
async def validate(request: GraphRequest):
    """
    Validate a Morse description and derive its exact data.

    Returns the graph summary, edge weights, renormalized level exponents
    and the weight-sum and weight-bound reports.
    """
    try:
        g = validate_graph(request.graph, nu=request.nu)
        w = assign_weights(g)
        u = renormalize_levels(g)
        return to_plain({
            "graph": g.summary(),
            "weights": w,
            "levels": u,
            "level_sums": verify_level_sums(g, w),
            "weight_bounds": check_weight_bounds(g, w, u),
        })
    except Exception as e:
        raise_http("Graph validation", e)
