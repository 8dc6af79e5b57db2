"""Input description models for graphs and profiles."""

from typing import Any, Optional, TypeVar

from pydantic import BaseModel, Field, StrictInt, ValidationError

from services.errors import GraphFormatError

Description = TypeVar("Description", bound=BaseModel)


class VertexSpec(BaseModel):
    """A critical point of the Morse description."""
    id: str = Field(..., min_length=1)
    f: StrictInt = Field(..., description="Integer critical value")


class EdgeSpec(BaseModel):
    """An oriented edge; endpoints are vertex ids or the open ends '-inf'/'+inf'."""
    id: Optional[str] = None
    src: str = Field(..., description="Vertex id or '-inf'")
    dst: str = Field(..., description="Vertex id or '+inf'")


class GraphDescription(BaseModel):
    """Combinatorial Morse description as read from JSON."""
    vertices: list[VertexSpec] = Field(default_factory=list)
    edges: list[EdgeSpec] = Field(..., min_length=1)
    nu: Optional[int] = Field(None, ge=1, description="Renormalization exponent, N <= 2^nu")


class ProfilePoint(BaseModel):
    v: float = Field(..., ge=0)
    I2: float = Field(..., ge=0)


class ProfileAnchors(BaseModel):
    d1: float = Field(..., description="(I^2)'(0)")
    d2: Optional[float] = Field(None, description="(I^2)''(0)")


class ProfileDescription(BaseModel):
    """Profile file: samples of I^2 plus anchor derivatives at the origin."""
    grid: list[ProfilePoint] = Field(..., min_length=4)
    anchors: ProfileAnchors


def parse_description(model: type[Description], data: Any, kind: str) -> Description:
    """Validate raw input as `model`; the first pydantic error becomes a GraphFormatError with its location."""
    if isinstance(data, model):
        return data
    try:
        return model.model_validate(data)
    except ValidationError as e:
        err = e.errors()[0]
        location = "/".join(str(p) for p in err["loc"])
        raise GraphFormatError(f"Invalid {kind}: {err['msg']}", location=location) from e
