"""Request models for API endpoints."""

from typing import Optional
from pydantic import BaseModel, Field

from models.geometry import GraphDescription, ProfileDescription


class GraphRequest(BaseModel):
    """Graph validation request."""
    graph: GraphDescription
    nu: Optional[int] = Field(None, ge=1, description="Overrides the description's nu")


class SurfaceRequest(BaseModel):
    """Assembly request with optional sublevel parameters."""
    graph: GraphDescription
    t: list[float] = Field(default_factory=list, description="Levels for sublevel areas")


class CoverageRequest(BaseModel):
    graph: GraphDescription
    total: Optional[str] = Field(None, description="Upper end of the area range, as 'p/q' or a decimal")
    strict: bool = False


class ProfileRequest(BaseModel):
    """Either a preset name or an inline profile file."""
    preset: Optional[str] = Field(None, description="euclidean, hyperbolic, bolfiala:k, linear or vlogv")
    profile: Optional[ProfileDescription] = None
    points: int = Field(101, ge=2, le=10_000)
    metric: bool = Field(False, description="Also integrate the metric and report the roundtrip error")


class CapRequest(BaseModel):
    delta: float = Field(1.5, gt=0)
    k: float = Field(100.0, gt=0)
    alpha: float = Field(10.0, gt=0)
    points: int = Field(101, ge=2, le=10_000)


class StabilityRequest(BaseModel):
    surface: str = Field("hyperbolic", description="Surface preset")
    radii: list[float] = Field(..., min_length=1)


class ConformalRequest(BaseModel):
    preset: str = Field("vlogv", description="Profile preset")
    n: int = Field(2, ge=2)
    t0: float = Field(1.0, gt=0)
    diagnostics: bool = True


class VanishingRequest(BaseModel):
    targets: list[tuple[float, float]] = Field(..., min_length=1, description="(v*, eps) pairs")


class SearchRequest(BaseModel):
    """Competitor search request."""
    surface: str = Field("euclidean", description="Surface preset")
    v: float = Field(..., gt=0)
    modes: int = Field(8, ge=1, le=32)
    trials: int = Field(20, ge=1, le=2000)
    seed: int = 42


class VerifyRequest(BaseModel):
    targets: list[str] = Field(default_factory=list)
    seed: int = 42
    full: bool = False
