"""
Hyperbolic annuli glued along the level graph.

Each edge e becomes the annulus A_{weight(e), u(src), u(dst)} of constant
curvature -1. At every vertex the circles of length weight*u on both
sides are glued, producing a singular pair of pants with a cone point of
angle 4*pi.
"""

import cmath
import logging
import math
from fractions import Fraction
from typing import Any, Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator
from scipy import integrate

from models.reports import VerificationReport
from services.errors import BadParameters, GluingMismatch, OutOfChart
from services.level_graph import (
    LevelGraph,
    RenormalizedLevels,
    Weighting,
    assign_weights,
    renormalize_levels,
)

logger = logging.getLogger(__name__)

Number = Union[int, float, Fraction]
LOG2 = math.log(2.0)


def _exact(x: Any) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, float) and not math.isfinite(x):
        raise BadParameters(f"Non-finite parameter: {x}")
    return Fraction(x)


def _log(x: Fraction) -> float:
    """log of a positive rational without converting it to float."""
    return math.log(x.numerator) - math.log(x.denominator)


class Annulus(BaseModel):
    """A_{tau,c,c'}: c = 0 is a cusp, c_prime = None an anticusp."""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    tau: Fraction
    c: Fraction
    c_prime: Optional[Fraction] = None

    @field_validator("tau", "c", mode="before")
    @classmethod
    def _coerce(cls, v: Any) -> Fraction:
        return _exact(v)

    @field_validator("c_prime", mode="before")
    @classmethod
    def _coerce_top(cls, v: Any) -> Optional[Fraction]:
        if v is None or (isinstance(v, float) and v == math.inf):
            return None
        return _exact(v)

    def model_post_init(self, __context: Any) -> None:
        if self.tau <= 0:
            raise BadParameters(f"tau must be positive, got {self.tau}", tau=str(self.tau))
        if self.c < 0:
            raise BadParameters(f"c must be nonnegative, got {self.c}", c=str(self.c))
        if self.c_prime is not None and self.c >= self.c_prime:
            raise BadParameters("c must be below c'", c=str(self.c), c_prime=str(self.c_prime))

    @property
    def is_cusp(self) -> bool:
        return self.c == 0

    @property
    def is_anticusp(self) -> bool:
        return self.c_prime is None

    def normalized(self) -> "Annulus":
        """The isometric annulus A_{c*tau, 1, c'/c}."""
        if self.is_cusp:
            raise BadParameters("A cusp has no normalized form")
        top = None if self.c_prime is None else self.c_prime / self.c
        return Annulus(tau=self.c * self.tau, c=Fraction(1), c_prime=top)


class AnnulusGeometry(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    area: Optional[Fraction] = Field(None, description="None when infinite")
    boundary_lengths: list[Fraction]
    height: float


def annulus_geometry(a: Annulus) -> AnnulusGeometry:
    """Area tau(c'-c), boundary lengths c*tau and c'*tau, height log(c'/c)."""
    area = None if a.is_anticusp else a.tau * (a.c_prime - a.c)
    lengths = []
    if not a.is_cusp:
        lengths.append(a.c * a.tau)
    if not a.is_anticusp:
        lengths.append(a.c_prime * a.tau)
    if a.is_cusp or a.is_anticusp:
        height = math.inf
    else:
        height = _log(a.c_prime) - _log(a.c)
    return AnnulusGeometry(area=area, boundary_lengths=lengths, height=height)


class PantsPiece(BaseModel):
    """P(e): the annulus of one edge."""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    edge_id: str
    src: str
    dst: str
    weight: Fraction
    annulus: Annulus

    @property
    def area(self) -> Optional[Fraction]:
        return annulus_geometry(self.annulus).area


class GluedCircle(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    edge_id: str
    length: Fraction


class Gluing(BaseModel):
    """Identification at a vertex: one circle on the single side, two arcs on the other."""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    vertex_id: str
    kind: Literal["split", "merge"]
    u: Fraction
    single: GluedCircle
    pair: tuple[GluedCircle, GluedCircle]
    # arc endpoints on the single circle, measured from the marked point at angle 0
    marked_points: tuple[Fraction, Fraction]


class SingularPoint(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    vertex_id: str
    log16_u: int
    cone_angle: float = 4 * math.pi


class SingularSurface(BaseModel):
    """Glued singular surface with level coordinate u."""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    graph: LevelGraph
    weights: Weighting
    levels: RenormalizedLevels
    pieces: tuple[PantsPiece, ...]
    gluings: tuple[Gluing, ...]
    singular_points: tuple[SingularPoint, ...]

    def piece(self, eid: str) -> PantsPiece:
        for p in self.pieces:
            if p.edge_id == eid:
                return p
        raise KeyError(eid)

    def critical_values(self) -> list[Fraction]:
        return sorted(self.levels.value(v.id) for v in self.graph.vertices)

    @property
    def total_area(self) -> Optional[Fraction]:
        areas = [p.area for p in self.pieces]
        return None if any(a is None for a in areas) else sum(areas, Fraction(0))


def edge_annulus(g: LevelGraph, w: Weighting, u: RenormalizedLevels, eid: str) -> Annulus:
    e = g.edge(eid)
    return Annulus(tau=w[eid], c=u.endpoint(e.src), c_prime=u.endpoint(e.dst))


def assemble_surface(
    g: LevelGraph,
    w: Optional[Weighting] = None,
    u: Optional[RenormalizedLevels] = None,
) -> SingularSurface:
    """
    Glue the per-edge annuli into a singular surface.

    Args:
        g: Validated level graph
        w: Weights (computed when omitted)
        u: Renormalized levels (computed when omitted)

    Returns:
        SingularSurface with exact gluing data
    """
    w = w or assign_weights(g)
    u = u or renormalize_levels(g)
    pieces = tuple(
        PantsPiece(edge_id=e.id, src=e.src, dst=e.dst, weight=w[e.id], annulus=edge_annulus(g, w, u, e.id))
        for e in g.edges
    )

    gluings = []
    for p in g.vertices:
        value = u.value(p.id)
        ins, outs = g.in_edges(p.id), g.out_edges(p.id)
        kind = "split" if len(ins) == 1 else "merge"
        single_edge, pair_edges = (ins[0], outs) if kind == "split" else (outs[0], ins)
        single = GluedCircle(edge_id=single_edge.id, length=w[single_edge.id] * value)
        pair = tuple(GluedCircle(edge_id=e.id, length=w[e.id] * value) for e in pair_edges)
        if pair[0].length + pair[1].length != single.length:
            raise GluingMismatch(
                f"Circles at {p.id} do not match",
                vertex=p.id,
                single=str(single.length),
                pair=[str(c.length) for c in pair],
            )
        gluings.append(
            Gluing(
                vertex_id=p.id,
                kind=kind,
                u=value,
                single=single,
                pair=pair,
                marked_points=(Fraction(0), pair[0].length),
            )
        )

    points = tuple(SingularPoint(vertex_id=p.id, log16_u=u.exponents[p.id]) for p in g.vertices)
    logger.debug(f"Assembled surface: {len(pieces)} pieces, {len(gluings)} gluings")
    return SingularSurface(
        graph=g, weights=w, levels=u, pieces=pieces, gluings=tuple(gluings), singular_points=points
    )


def sublevel_area(s: SingularSurface, t: Number) -> Number:
    """
    Area of {u <= t}: sum of weight * |[c, c'] intersected with (0, t]|.

    Exact for int/Fraction input. A float t is converted exactly and the
    exact result is returned as float.
    """
    exact = _exact(t)
    if exact <= 0:
        return 0.0 if isinstance(t, float) else Fraction(0)
    total = Fraction(0)
    for piece in s.pieces:
        a = piece.annulus
        top = exact if a.c_prime is None else min(exact, a.c_prime)
        if top > a.c:
            total += piece.weight * (top - a.c)
    return float(total) if isinstance(t, float) else total


def band_area(s: SingularSurface, lo: Number, hi: Number) -> Number:
    """area({lo < u <= hi}) = hi - lo."""
    return sublevel_area(s, hi) - sublevel_area(s, lo)


def sublevel_samples(s: SingularSurface, ts: list[float]) -> dict[str, list[float]]:
    return {"t": list(ts), "area": [sublevel_area(s, float(t)) for t in ts]}


def surface_dump(s: SingularSurface) -> dict:
    """Per-edge and per-vertex data; levels are given by their base-16 exponent."""
    u = s.levels
    edges = {}
    for piece in s.pieces:
        area = piece.area
        edges[piece.edge_id] = {
            "weight": piece.weight,
            "log16_c": None if piece.src == "-inf" else u.exponents[piece.src],
            "log16_c_prime": None if piece.dst == "+inf" else u.exponents[piece.dst],
            "area": "inf" if area is None else float(area),
        }
    vertices = {}
    for gl in s.gluings:
        vertices[gl.vertex_id] = {
            "log16_u": u.exponents[gl.vertex_id],
            "u": u.as_float(gl.vertex_id),
            "kind": gl.kind,
            "glued_circles": {
                "single": {gl.single.edge_id: float(gl.single.length)},
                "pair": {c.edge_id: float(c.length) for c in gl.pair},
            },
        }
    return {"graph": s.graph.summary(), "edges": edges, "vertices": vertices}


def surface_report(s: SingularSurface, rng: Optional[np.random.Generator] = None, samples: int = 50) -> VerificationReport:
    """Gluing consistency, sublevel linearity and critical-level spacing."""
    report = VerificationReport(title="surface")
    for gl in s.gluings:
        arcs = (gl.marked_points[1] - gl.marked_points[0], gl.single.length - gl.marked_points[1])
        proportional = all(
            arc * s.weights[gl.single.edge_id] == s.weights[c.edge_id] * gl.single.length
            for arc, c in zip(arcs, gl.pair)
        )
        report.add(f"gluing[{gl.vertex_id}]", proportional and sum(arcs) == gl.single.length)

    crit = s.critical_values()
    rng = rng or np.random.default_rng(0)
    hi = crit[-1] * 4 if crit else Fraction(4)
    for i in range(samples):
        num = int(rng.integers(1, 10**6))
        t = hi * Fraction(num, 10**6)
        area = sublevel_area(s, t)
        report.add(f"sublevel_linear[{i}]", area == t, measured=area, expected=t)
        lo = t * Fraction(int(rng.integers(0, 10**6)), 10**6)
        band = band_area(s, lo, t)
        report.add(f"band[{i}]", band == t - lo, measured=band, expected=t - lo)

    for a, b in zip(crit, crit[1:]):
        ratio = b / a
        report.add(
            f"level_spacing[{a}]",
            ratio >= 256,
            measured=_log(ratio) / math.log(16),
            expected=2.0,
            detail="log16 of adjacent critical value ratio",
        )
    return report


class SingularModelEval(BaseModel):
    """Model function, conformal factor and local diagnostics at z."""
    w0: float
    conformal_factor: float
    curvature: Optional[float] = None
    grad_ratio: Optional[float] = None
    chart_radius: float


def chart_radius(r: float = LOG2) -> float:
    if not 0 < r <= LOG2 + 1e-15:
        raise OutOfChart(f"Chart radius r must lie in (0, log 2], got {r}", r=r)
    return math.sqrt(math.tanh(r))


def model_w0(u_p: float, z: complex) -> float:
    return u_p * abs(z * z - 1j) ** 2 / (1 - abs(z) ** 4)


def model_w0_radial_log_derivative(z: complex) -> float:
    """rho d/drho log w0 at z = rho e^(i theta); independent of u_p."""
    z = complex(z)
    m4 = abs(z) ** 4
    return 2 * (2 * z * z / (z * z - 1j)).real + 4 * m4 / (1 - m4)


def model_lambda(z: complex) -> float:
    """Conformal factor of 16|z|^2 (1 - |z|^4)^-2 |dz|^2."""
    m = abs(z)
    return 16 * m * m / (1 - m**4) ** 2


def singular_model_eval(u_p: float, z: complex, r: float = LOG2) -> SingularModelEval:
    """
    Evaluate the double-cover model near a critical point.

    Curvature is -Laplacian(log lambda) / (2 lambda) by a 5-point stencil;
    the gradient ratio is |grad w0|_g / w0. Both are skipped at z = 0
    where the metric degenerates.
    """
    z = complex(z)
    radius = chart_radius(r)
    if abs(z) >= radius:
        raise OutOfChart(f"|z|={abs(z):.6g} outside chart of radius {radius:.6g}", z=str(z), radius=radius)

    lam = model_lambda(z)
    result = SingularModelEval(w0=model_w0(u_p, z), conformal_factor=lam, chart_radius=radius)
    if z == 0:
        return result

    h = 1e-3
    log_lam = lambda q: math.log(model_lambda(q))
    lap = (
        log_lam(z + h) + log_lam(z - h) + log_lam(z + 1j * h) + log_lam(z - 1j * h) - 4 * log_lam(z)
    ) / (h * h)
    result.curvature = -lap / (2 * lam)

    d = 1e-6
    wx = (model_w0(u_p, z + d) - model_w0(u_p, z - d)) / (2 * d)
    wy = (model_w0(u_p, z + 1j * d) - model_w0(u_p, z - 1j * d)) / (2 * d)
    result.grad_ratio = math.hypot(wx, wy) / (math.sqrt(lam) * result.w0)
    return result


def cone_angle(s: float = 0.1) -> float:
    """
    Total angle at the model singular point.

    Length of |z| = s divided by sinh of its distance to 0; for a cone of
    angle A in curvature -1 this ratio is A.
    """
    length, _ = integrate.quad(lambda th: s * math.sqrt(model_lambda(s * cmath.exp(1j * th))), 0, 2 * math.pi)
    dist, _ = integrate.quad(lambda q: math.sqrt(model_lambda(q)), 0, s)
    return length / math.sinh(dist)
