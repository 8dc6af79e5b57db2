"""
Calibration lower bounds, the rearrangement bound, and pipe-clearing coverage.

Coverage works in exact arithmetic: sublevels B_t are calibrated for t
outside the exclusion intervals (c/2, 2c); inside, the C and D families
built on a spare component of the critical level fill the gap.
"""

import logging
import math
from fractions import Fraction
from typing import Callable, Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict
from scipy import integrate

from models.reports import VerificationReport
from services.cusp_assembly import SingularSurface
from services.errors import BadParameters, ExclusionOverlap, NoSpareComponent, NotSublevel
from services.revolution_lab import RevolutionSurface

logger = logging.getLogger(__name__)

Interval = tuple[Fraction, Optional[Fraction]]


class CalibratedFamily(BaseModel):
    """Family of domains whose area is affine in its parameter; hi=None means unbounded."""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    kind: Literal["sublevel", "C", "D"]
    lo: Fraction
    hi: Optional[Fraction]
    slope: Fraction
    intercept: Fraction
    edge_id: Optional[str] = None
    critical_value: Optional[Fraction] = None

    def area(self, s: Fraction) -> Fraction:
        return self.slope * s + self.intercept

    @property
    def area_range(self) -> Interval:
        return self.area(self.lo), None if self.hi is None else self.area(self.hi)

    def achieves(self, v) -> bool:
        a, b = self.area_range
        v = Fraction(v)
        return a <= v and (b is None or v <= b)

    def to_dict(self) -> dict:
        a, b = self.area_range
        return {
            "kind": self.kind,
            "edge": self.edge_id,
            "parameter": [self.lo, "inf" if self.hi is None else self.hi],
            "area": [a, "inf" if b is None else b],
        }


class CalibrationBound(BaseModel):
    c: float
    v: float
    value: float
    equality: bool = False


def calibration_lower_bound(c: float, v: float, family: Optional[CalibratedFamily] = None) -> CalibrationBound:
    """I(v) >= c*v for d(omega) = c vol; equality when a calibrated family reaches area v."""
    if c < 0 or v < 0:
        raise BadParameters("Calibration needs c >= 0 and v >= 0", c=c, v=v)
    equality = family is not None and family.achieves(Fraction(v))
    return CalibrationBound(c=c, v=v, value=c * v, equality=equality)


def yau_ball_bound(n: int, rho: float, v: float) -> CalibrationBound:
    """Balls in curvature <= -rho^2: I(v) >= (n-1) rho v."""
    return calibration_lower_bound((n - 1) * rho, v)


def cusp_profile(n: int, v: float) -> CalibrationBound:
    """Constant-curvature cusp: horoball sublevels are calibrated, so I(v) = (n-1) v."""
    bound = calibration_lower_bound(n - 1, v)
    return bound.model_copy(update={"equality": True})


class RearrangementResult(BaseModel):
    r0: float
    integral: float
    area: float
    boundary_length: float
    flux: float
    inner_boundary: float
    equality: bool


def rearrangement_bound(
    surface: RevolutionSurface,
    r0: float,
    density: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    tol: float = 1e-8,
) -> RearrangementResult:
    """
    Integral of a nondecreasing level density over V = {r <= r0}.

    The default density is f'/f, the divergence of omega = f dtheta. Then
    the integral equals the flux 2 pi (f(r0) - f(r_min)), and V is
    calibrated when the inner boundary has zero length.
    """
    r_min, r_max = float(surface.r[0]), float(surface.r[-1])
    if not r_min < r0 <= r_max:
        raise NotSublevel(f"r0={r0} outside ({r_min}, {r_max}]", r0=r0)

    grid = surface.r[(surface.r > r_min) & (surface.r <= r0)]
    if density is None:
        integrand = lambda r: 2 * math.pi * float(surface.df_at(r))
        values = surface.df_at(grid) / surface.f_at(grid)
    else:
        integrand = lambda r: float(density(np.asarray(r))) * 2 * math.pi * float(surface.f_at(r))
        values = np.asarray(density(grid), dtype=float)
    if np.any(np.diff(values) < -1e-12 * max(1.0, float(np.max(np.abs(values))))):
        raise NotSublevel("Density is not nondecreasing on the sublevel", r0=r0)

    integral, _ = integrate.quad(integrand, r_min, r0, limit=400)
    f_lo, f_hi = float(surface.f_at(r_min)), float(surface.f_at(r0))
    boundary = 2 * math.pi * f_hi
    inner = 2 * math.pi * f_lo
    equality = density is None and abs(integral - boundary) <= tol * max(1.0, boundary)
    return RearrangementResult(
        r0=r0,
        integral=integral,
        area=float(surface.area_at(r0)),
        boundary_length=boundary,
        flux=boundary - inner,
        inner_boundary=inner,
        equality=equality,
    )


def merge_intervals(intervals: list[Interval]) -> list[Interval]:
    """Union of closed intervals; None as an upper end means +inf."""
    ordered = sorted(intervals, key=lambda ab: ab[0])
    merged: list[list] = []
    for a, b in ordered:
        if merged and (merged[-1][1] is None or a <= merged[-1][1]):
            if merged[-1][1] is not None and (b is None or b > merged[-1][1]):
                merged[-1][1] = b
        else:
            merged.append([a, b])
    return [(a, b) for a, b in merged]


def uncovered(intervals: list[Interval], lo: Fraction, hi: Fraction) -> list[tuple[Fraction, Fraction]]:
    """Open gaps of (lo, hi) left by a union of closed intervals."""
    gaps = []
    cursor = lo
    for a, b in merge_intervals(intervals):
        if cursor >= hi:
            break
        if a > cursor:
            gaps.append((cursor, min(a, hi)))
        if b is None:
            cursor = hi
        else:
            cursor = max(cursor, b)
    if cursor < hi:
        gaps.append((cursor, hi))
    return gaps


def pipe_clearing_margin(weight, c, c_prime, c_second) -> dict:
    """
    The pipe-clearing inequality chain for one edge.

    Returns the chain bound weight*c''/4 - 2c and the exact
    area(C at c''/2) - area(D at 2c').
    """
    w, c, c1 = Fraction(weight), Fraction(c), Fraction(c_prime)
    c2 = None if c_second is None else Fraction(c_second)
    d_min = 2 * c - w * (2 * c - 2 * c1)
    if c2 is None:
        return {"chain_bound": "inf", "c_max": "inf", "d_min": d_min, "difference": "inf"}
    c_max = c / 2 + w * (c2 / 2 - c / 2)
    return {
        "chain_bound": w * c2 / 4 - 2 * c,
        "c_max": c_max,
        "d_min": d_min,
        "difference": c_max - d_min,
    }


def _log16(x: Fraction) -> str:
    e = round(math.log(x.numerator) / math.log(16) - math.log(x.denominator) / math.log(16))
    return f"16^{e}" if Fraction(16) ** e == x else str(x)


def pipe_clearing_coverage(
    s: SingularSurface,
    total: Optional[Fraction] = None,
    strict: bool = False,
) -> VerificationReport:
    """
    Check that calibrated families cover every area in (0, total).

    Args:
        s: Assembled singular surface
        total: Upper end T of the area range (default 4 * largest critical value)
        strict: Raise NoSpareComponent instead of reporting a gap

    Returns:
        Report with one pipe check per critical value and the gap list
    """
    g, w, u = s.graph, s.weights, s.levels
    crit = sorted(((u.value(p.id), p.id) for p in g.vertices), key=lambda cv: cv[0])
    for (a, pa), (b, pb) in zip(crit, crit[1:]):
        if 2 * a >= b / 2:
            raise ExclusionOverlap(f"Exclusion intervals of {pa} and {pb} overlap", low=pa, high=pb)

    if total is None:
        total = 4 * crit[-1][0] if crit else Fraction(1)
    total = Fraction(total)

    report = VerificationReport(title="pipe_clearing")
    families: list[CalibratedFamily] = []
    cuts = [Fraction(0)]
    for c, _ in crit:
        cuts += [c / 2, 2 * c]
    cuts.append(None)
    for a, b in zip(cuts[::2], cuts[1::2]):
        families.append(CalibratedFamily(kind="sublevel", lo=a, hi=b, slope=Fraction(1), intercept=Fraction(0)))

    coverage = {}
    for c, pid in crit:
        entry = {"families": [], "covered": False, "gaps": []}
        candidates = []
        for e in g.edges:
            lo_end, hi_end = u.endpoint(e.src), u.endpoint(e.dst)
            if lo_end < c and (hi_end is None or c < hi_end):
                candidates.append((e, lo_end, hi_end))
        if not candidates:
            if strict:
                raise NoSpareComponent(f"Critical level of {pid} is connected", vertex=pid)
            entry["gaps"] = [[c / 2, 2 * c]]
            coverage[_log16(c)] = entry
            report.add(f"spare_component[{pid}]", False, detail="critical level is connected")
            continue

        def rank(item):
            e, _, hi_end = item
            # anticusp edges first, then largest weight * c'', then id
            return (hi_end is not None, 0 if hi_end is None else -w[e.id] * hi_end, e.id)

        e, c1, c2 = min(candidates, key=rank)
        weight = w[e.id]
        fam_c = CalibratedFamily(
            kind="C", lo=c / 2, hi=None if c2 is None else c2 / 2,
            slope=weight, intercept=c / 2 - weight * c / 2, edge_id=e.id, critical_value=c,
        )
        fam_d = CalibratedFamily(
            kind="D", lo=2 * c1, hi=2 * c,
            slope=weight, intercept=2 * c - weight * 2 * c, edge_id=e.id, critical_value=c,
        )
        families += [fam_c, fam_d]
        margin = pipe_clearing_margin(weight, c, c1, c2)
        c_max = fam_c.area_range[1]
        d_min = fam_d.area_range[0]
        holds = c_max is None or c_max >= d_min
        report.add(
            f"pipe_inequality[{pid}]",
            holds,
            measured=margin["difference"],
            expected=0,
            margin=margin["chain_bound"],
            detail=f"edge {e.id}",
        )
        entry["families"] = [fam_c, fam_d]
        entry["covered"] = holds
        entry["gaps"] = [] if holds else [[c_max, d_min]]
        coverage[_log16(c)] = entry

    gaps = uncovered([f.area_range for f in families], Fraction(0), total)
    report.add("coverage", not gaps, measured=len(gaps), expected=0, detail=f"(0, {total})")
    report.sections["coverage"] = coverage
    report.sections["gaps"] = [[a, b] for a, b in gaps]
    report.sections["total"] = total
    logger.debug(f"Coverage of (0, {total}): {len(gaps)} gaps")
    return report


def parse_total(text: Optional[str]) -> Optional[Fraction]:
    """'p/q', integer or decimal -> Fraction; empty means the default range."""
    if not text:
        return None
    try:
        return Fraction(text)
    except (ValueError, ZeroDivisionError) as e:
        raise BadParameters(f"Cannot parse total {text!r}", total=text) from e
