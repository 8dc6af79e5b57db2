"""
Surfaces of revolution dr^2 + f(r)^2 dtheta^2 and their isoperimetric profiles.

Profiles are stored through I^2, which stays smooth at v = 0 where I has
a square-root singularity. Going from metric to profile uses
I(V(r)) = 2 pi f(r); going back integrates dV/dr = I(V) from the pole.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Callable, NamedTuple, Optional, Sequence, Union

import numpy as np
from pydantic import BaseModel
from scipy import integrate
from scipy.interpolate import BPoly, CubicHermiteSpline, CubicSpline
from scipy.optimize import brentq

from models.geometry import ProfileDescription, parse_description
from models.reports import VerificationReport
from services.errors import (
    BadOrigin,
    BadParameters,
    ConstraintViolation,
    DomainError,
    GraphFormatError,
    HypothesisFailure,
    NonPositiveProfile,
)
from services.settings import get_settings

logger = logging.getLogger(__name__)

FOUR_PI = 4 * math.pi
ArrayFn = Callable[[np.ndarray], np.ndarray]
CAP_ROUNDTRIP_TOL = 1e-5


class ClosedForm(NamedTuple):
    f: ArrayFn
    df: ArrayFn
    d2f: ArrayFn
    area: ArrayFn


@dataclass(frozen=True, eq=False)
class RevolutionSurface:
    """Sampled rotation metric with cumulative area V(r) = 2 pi int f."""
    r: np.ndarray
    f: np.ndarray
    df: np.ndarray
    d2f: np.ndarray
    area: np.ndarray
    is_cap: bool
    name: str = "custom"
    exact: Optional[ClosedForm] = None
    # relative 2 pi f against I(V) for surfaces built from a profile
    roundtrip: Optional[float] = None

    @cached_property
    def _f_spline(self) -> CubicHermiteSpline:
        return CubicHermiteSpline(self.r, self.f, self.df)

    @cached_property
    def _df_spline(self) -> CubicHermiteSpline:
        return CubicHermiteSpline(self.r, self.df, self.d2f)

    @cached_property
    def _d2f_spline(self) -> CubicSpline:
        return CubicSpline(self.r, self.d2f)

    @cached_property
    def _area_spline(self) -> CubicHermiteSpline:
        return CubicHermiteSpline(self.r, self.area, 2 * np.pi * self.f)

    def f_at(self, r):
        return self.exact.f(np.asarray(r, dtype=float)) if self.exact else self._f_spline(r)

    def df_at(self, r):
        return self.exact.df(np.asarray(r, dtype=float)) if self.exact else self._df_spline(r)

    def d2f_at(self, r):
        return self.exact.d2f(np.asarray(r, dtype=float)) if self.exact else self._d2f_spline(r)

    def area_at(self, r):
        return self.exact.area(np.asarray(r, dtype=float)) if self.exact else self._area_spline(r)

    def curvature(self, r=None) -> np.ndarray:
        """Gaussian curvature -f''/f (skipping the pole of a cap)."""
        r = self.r if r is None else np.asarray(r, dtype=float)
        r = r[self.f_at(r) > 0]
        return -self.d2f_at(r) / self.f_at(r)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "is_cap": self.is_cap,
            "r_range": [float(self.r[0]), float(self.r[-1])],
            "total_area": float(self.area[-1] - self.area[0]),
            "points": len(self.r),
            "roundtrip": self.roundtrip,
        }

    def radius_for_area(self, v: float) -> float:
        """r with V(r) = v."""
        if not self.area[0] < v < self.area[-1]:
            raise BadParameters(f"Area {v} outside ({self.area[0]}, {self.area[-1]})", v=v)
        i = int(np.searchsorted(self.area, v))
        return brentq(lambda r: float(self.area_at(r)) - v, self.r[i - 1], self.r[i], xtol=1e-15, rtol=1e-15)

    @classmethod
    def from_function(
        cls,
        f: ArrayFn,
        df: ArrayFn,
        d2f: ArrayFn,
        r: np.ndarray,
        is_cap: bool,
        name: str = "custom",
        area: Optional[ArrayFn] = None,
    ) -> "RevolutionSurface":
        """Sample closed forms; V is the closed form when given, else adaptive quadrature."""
        r = np.asarray(r, dtype=float)
        if area is None:
            pieces = [integrate.quad(lambda x: float(f(np.asarray(x))), a, b)[0] for a, b in zip(r[:-1], r[1:])]
            areas = 2 * np.pi * np.concatenate([[0.0], np.cumsum(pieces)])
            exact = None
        else:
            areas = area(r)
            exact = ClosedForm(f, df, d2f, area)
        return cls(r=r, f=f(r), df=df(r), d2f=d2f(r), area=areas, is_cap=is_cap, name=name, exact=exact)


def surface_preset(name: str, radius: float = 3.0, points: int = 2001) -> RevolutionSurface:
    """
    Named closed-form surfaces.

    euclidean, hyperbolic, spherical:k, cusp (f = e^r from r = -40), cosh.
    """
    if name == "euclidean":
        return RevolutionSurface.from_function(
            lambda r: r, np.ones_like, np.zeros_like, np.linspace(0, radius, points), True, name,
            area=lambda r: np.pi * r**2,
        )
    if name == "hyperbolic":
        return RevolutionSurface.from_function(
            np.sinh, np.cosh, np.sinh, np.linspace(0, radius, points), True, name,
            area=lambda r: 2 * np.pi * (np.cosh(r) - 1),
        )
    if name.startswith("spherical"):
        k = float(name.split(":")[1]) if ":" in name else 1.0
        if k <= 0:
            raise BadParameters("spherical:k needs k > 0", k=k)
        sk = math.sqrt(k)
        top = min(radius, 0.95 * math.pi / sk)
        return RevolutionSurface.from_function(
            lambda r: np.sin(sk * r) / sk,
            lambda r: np.cos(sk * r),
            lambda r: -sk * np.sin(sk * r),
            np.linspace(0, top, points), True, name,
            area=lambda r: 2 * np.pi * (1 - np.cos(sk * r)) / k,
        )
    if name == "cusp":
        r_min = -40.0
        return RevolutionSurface.from_function(
            np.exp, np.exp, np.exp, np.linspace(r_min, radius, points), False, name,
            area=lambda r: 2 * np.pi * (np.exp(r) - math.exp(r_min)),
        )
    if name == "cosh":
        return RevolutionSurface.from_function(
            np.cosh, np.sinh, np.cosh, np.linspace(0, radius, points), False, name,
            area=lambda r: 2 * np.pi * np.sinh(r),
        )
    raise BadParameters(f"Unknown surface preset: {name}", name=name)


class ProfileClosedForm(NamedTuple):
    i2: ArrayFn
    di2: ArrayFn
    d2i2: ArrayFn


@dataclass(frozen=True, eq=False)
class ProfileFunction:
    """
    Candidate profile I stored as samples of I^2 with two derivatives.

    Between samples I^2 is the quintic Hermite interpolant (C^2). When a
    closed form is attached it is used for evaluation, including beyond
    the grid.
    """
    v: np.ndarray
    i2: np.ndarray
    di2: np.ndarray
    d2i2: np.ndarray
    name: str = "custom"
    exact: Optional[ProfileClosedForm] = None

    def __post_init__(self):
        if self.v[0] != 0 or np.any(np.diff(self.v) <= 0):
            raise BadParameters("Profile grid must start at 0 and increase strictly")
        if np.any(self.i2 < -1e-12 * max(1.0, float(np.max(np.abs(self.i2))))):
            raise BadParameters("I^2 must be nonnegative")

    @property
    def v_max(self) -> float:
        return float(self.v[-1])

    @property
    def anchors(self) -> dict[str, float]:
        return {"I2": float(self.i2[0]), "d1": float(self.di2[0]), "d2": float(self.d2i2[0])}

    @cached_property
    def _poly(self) -> BPoly:
        return BPoly.from_derivatives(self.v, np.column_stack([self.i2, self.di2, self.d2i2]))

    @cached_property
    def _dpoly(self) -> BPoly:
        return self._poly.derivative()

    @cached_property
    def _d2poly(self) -> BPoly:
        return self._poly.derivative(2)

    def i2_at(self, v):
        return self.exact.i2(np.asarray(v, dtype=float)) if self.exact else self._poly(v)

    def di2_at(self, v):
        return self.exact.di2(np.asarray(v, dtype=float)) if self.exact else self._dpoly(v)

    def d2i2_at(self, v):
        return self.exact.d2i2(np.asarray(v, dtype=float)) if self.exact else self._d2poly(v)

    def i_at(self, v):
        return np.sqrt(np.maximum(self.i2_at(v), 0.0))

    def flags(self, tol: float = 1e-9) -> dict[str, bool]:
        """Shape flags verified on the grid."""
        scale = max(1.0, float(np.max(np.abs(self.i2))))
        v, h, dh, d2h = self.v, self.i2, self.di2, self.d2i2
        return {
            "nondecreasing": bool(np.all(dh >= -tol * scale)),
            "ratio_nonincreasing": bool(np.all(v * dh - 2 * h <= tol * scale)),
            "convex": bool(np.all(2 * h * d2h - dh**2 >= -tol * scale**2)),
        }

    def to_dict(self) -> dict:
        return {"name": self.name, "v_max": self.v_max, "anchors": self.anchors, "flags": self.flags()}

    def samples(self, points: int = 501) -> dict[str, np.ndarray]:
        """(v, I, K) columns for plotting."""
        v = np.linspace(0, self.v_max, points)
        return {"v": v, "I": self.i_at(v), "K": -0.5 * self.d2i2_at(v)}

    @classmethod
    def from_closed_form(cls, form: ProfileClosedForm, v: np.ndarray, name: str) -> "ProfileFunction":
        v = np.asarray(v, dtype=float)
        return cls(v=v, i2=form.i2(v), di2=form.di2(v), d2i2=form.d2i2(v), name=name, exact=form)


def _default_grid(v_max: float, points: int = 2001) -> np.ndarray:
    tiny = np.geomspace(1e-10 * v_max, v_max, points // 2)
    return np.unique(np.concatenate([[0.0], tiny, np.linspace(0, v_max, points)]))


def vlogv_blend(x: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """phi, phi', phi'' of the convex C^3 blend from 1 (x <= 0) to x (x >= 2)."""
    x = np.asarray(x, dtype=float)
    y = np.clip(x / 2, 0.0, 1.0)
    phi = np.where(x <= 0, 1.0, np.where(x >= 2, x, 1 + 2 * (y**6 - 3 * y**5 + 2.5 * y**4)))
    dphi = np.where(x >= 2, 1.0, 6 * y**5 - 15 * y**4 + 10 * y**3)
    d2phi = np.where(x >= 2, 0.0, 15 * y**2 * (y - 1) ** 2)
    return phi, dphi, d2phi


def vlogv_form(t0: float = 1.0) -> ProfileClosedForm:
    """I(v) = v phi(log(v/t0)): equal to v below t0, to v log(v/t0) beyond e^2 t0."""

    def parts(v):
        v = np.asarray(v, dtype=float)
        with np.errstate(divide="ignore"):
            x = np.where(v > 0, np.log(np.where(v > 0, v, 1.0) / t0), -np.inf)
        phi, dphi, d2phi = vlogv_blend(x)
        i = v * phi
        di = phi + dphi
        d2i = np.where(v > 0, (dphi + d2phi) / np.where(v > 0, v, 1.0), 0.0)
        return i, di, d2i

    def i2(v):
        return parts(v)[0] ** 2

    def di2(v):
        i, di, _ = parts(v)
        return 2 * i * di

    def d2i2(v):
        i, di, d2i = parts(v)
        return 2 * (di**2 + i * d2i)

    return ProfileClosedForm(i2, di2, d2i2)


def profile_preset(name: str, v_max: Optional[float] = None, points: int = 2001) -> ProfileFunction:
    """
    Named profiles: euclidean, hyperbolic, bolfiala:k, linear, vlogv.
    """
    if name == "euclidean":
        form = ProfileClosedForm(lambda v: FOUR_PI * v, lambda v: np.full_like(v, FOUR_PI), np.zeros_like)
    elif name == "hyperbolic":
        form = ProfileClosedForm(lambda v: v**2 + FOUR_PI * v, lambda v: 2 * v + FOUR_PI, lambda v: np.full_like(v, 2.0))
    elif name.startswith("bolfiala:"):
        k = float(name.split(":")[1])
        form = ProfileClosedForm(
            lambda v: FOUR_PI * v - k * v**2, lambda v: FOUR_PI - 2 * k * v, lambda v: np.full_like(v, -2 * k)
        )
        if k > 0:
            limit = 0.9 * FOUR_PI / k
            v_max = limit if v_max is None else min(v_max, limit)
    elif name == "linear":
        form = ProfileClosedForm(lambda v: v**2, lambda v: 2 * v, lambda v: np.full_like(v, 2.0))
    elif name == "vlogv":
        form = vlogv_form()
    else:
        raise BadParameters(f"Unknown profile preset: {name}", name=name)
    return ProfileFunction.from_closed_form(form, _default_grid(v_max or 50.0, points), name)


def profile_from_description(desc: Union[dict, ProfileDescription], name: str = "file") -> ProfileFunction:
    """Profile file -> ProfileFunction; derivatives from a spline clamped by the anchors."""
    desc = parse_description(ProfileDescription, desc, "profile description")
    v = np.array([p.v for p in desc.grid])
    i2 = np.array([p.I2 for p in desc.grid])
    order = np.argsort(v)
    v, i2 = v[order], i2[order]
    if v[0] != 0:
        raise GraphFormatError("Profile grid must start at v=0", location="grid/0/v")
    spline = CubicSpline(v, i2, bc_type=((1, desc.anchors.d1), "not-a-knot"))
    d2 = spline(v, 2)
    if desc.anchors.d2 is not None:
        d2[0] = desc.anchors.d2
    return ProfileFunction(v=v, i2=i2, di2=spline(v, 1), d2i2=d2, name=name)


def profile_from_metric(surface: RevolutionSurface) -> ProfileFunction:
    """
    I(V(r)) = 2 pi f(r), assuming disks of revolution are extremal.

    (I^2)' = 4 pi f' follows from the chain rule; (I^2)'' is taken by
    finite differences in v, independently of f''.
    """
    interior = surface.f[1:] if surface.is_cap else surface.f
    if np.any(interior <= 0):
        raise NonPositiveProfile(f"f vanishes inside {surface.name}", surface=surface.name)
    v = surface.area - surface.area[0]
    i2 = (2 * np.pi * surface.f) ** 2
    di2 = FOUR_PI * surface.df
    d2i2 = np.gradient(di2, v, edge_order=2)
    return ProfileFunction(v=v, i2=i2, di2=di2, d2i2=d2i2, name=f"profile({surface.name})")


def metric_from_profile(
    profile: ProfileFunction,
    points: int = 2001,
    rtol: Optional[float] = None,
    atol: Optional[float] = None,
    v0: float = 1e-8,
    roundtrip_tol: float = 1e-6,
    retries: int = 3,
) -> RevolutionSurface:
    """
    Cap whose disks of revolution have boundary length I(area).

    Integrates dV/dr = I(V) from V0 = 1e-8 at r0 = sqrt(V0/pi); then
    f = I(V)/2pi, f' = (I^2)'(V)/4pi and f'' = I(V) (I^2)''(V)/4pi. The area
    column is recomputed from f so that the roundtrip is a real check; its
    error is kept on the surface as `roundtrip` and can exceed roundtrip_tol
    once every retry misses.
    """
    settings = get_settings()
    rtol = rtol or settings.rtol
    atol = atol or settings.atol
    d1 = float(profile.di2_at(0.0))
    if abs(float(profile.i2_at(0.0))) > 1e-12 or abs(d1 - FOUR_PI) > 1e-6 * FOUR_PI:
        raise BadOrigin(f"(I^2)'(0) = {d1:.10g}, need 4 pi for a smooth pole", d1=d1)

    for attempt in range(retries + 1):
        surface = _integrate_cap(profile, points, rtol, atol, v0)
        error = roundtrip_error(profile, surface)
        if error < roundtrip_tol:
            break
        if attempt < retries:
            logger.warning(f"Roundtrip error {error:.3g} for {profile.name}; halving tolerances")
            rtol, atol = rtol / 2, atol / 2
    else:
        logger.warning(f"Roundtrip error {error:.3g} for {profile.name} above {roundtrip_tol:g} after {retries} retries")
    return replace(surface, roundtrip=error)


def _integrate_cap(profile: ProfileFunction, points: int, rtol: float, atol: float, v0: float) -> RevolutionSurface:
    v_stop = profile.v_max * (1 - 1e-12)

    def rhs(r, V):
        return [float(profile.i_at(V[0]))]

    def reached(r, V):
        return V[0] - v_stop

    reached.terminal = True
    r0 = math.sqrt(v0 / math.pi)
    sol = integrate.solve_ivp(
        rhs, (r0, r0 + 1e4), [v0], method="DOP853", rtol=rtol, atol=atol, dense_output=True, events=reached
    )
    r_end = float(sol.t[-1])
    r = np.unique(np.concatenate([
        np.geomspace(r0, r_end, points // 2),
        np.linspace(r0, r_end, points // 2),
    ]))
    V = np.minimum(sol.sol(r)[0], profile.v_max)
    i = profile.i_at(V)
    f = np.concatenate([[0.0], i / (2 * np.pi)])
    df = np.concatenate([[1.0], profile.di2_at(V) / FOUR_PI])
    d2f = np.concatenate([[0.0], i * profile.d2i2_at(V) / FOUR_PI])
    r = np.concatenate([[0.0], r])
    area = 2 * np.pi * CubicHermiteSpline(r, f, df).antiderivative()(r)
    logger.debug(f"Integrated {profile.name} to r={r_end:.6g} in {sol.nfev} evaluations")
    return RevolutionSurface(r=r, f=f, df=df, d2f=d2f, area=area, is_cap=True, name=f"metric({profile.name})")


def roundtrip_error(profile: ProfileFunction, surface: RevolutionSurface, v_lo: float = 1e-6) -> float:
    """Sup relative error of 2 pi f against I at V(r), over V >= v_lo."""
    mask = surface.area >= v_lo
    expected = profile.i_at(surface.area[mask])
    measured = 2 * np.pi * surface.f[mask]
    return float(np.max(np.abs(measured - expected) / expected))


def curvature_of_profile(profile: ProfileFunction, v) -> np.ndarray:
    """K = -(I^2)''(v) / 2."""
    return -0.5 * profile.d2i2_at(v)


@dataclass(frozen=True)
class RadialMetric:
    """g, g' and the primitive G with area(D) = int G(rho) dtheta."""
    g: ArrayFn
    dg: ArrayFn
    G: ArrayFn
    name: str = "custom"

    @classmethod
    def preset(cls, name: str) -> "RadialMetric":
        if name == "euclidean":
            return cls(lambda r: r, np.ones_like, lambda r: r**2 / 2, name)
        if name == "hyperbolic":
            return cls(np.sinh, np.cosh, lambda r: np.cosh(r) - 1, name)
        if name.startswith("spherical"):
            k = float(name.split(":")[1]) if ":" in name else 1.0
            sk = math.sqrt(k)
            return cls(lambda r: np.sin(sk * r) / sk, lambda r: np.cos(sk * r), lambda r: (1 - np.cos(sk * r)) / k, name)
        if name == "cusp":
            return cls(np.exp, np.exp, np.exp, name)
        raise BadParameters(f"Unknown metric preset: {name}", name=name)

    @classmethod
    def from_surface(cls, surface: RevolutionSurface) -> "RadialMetric":
        return cls(surface.f_at, surface.df_at, lambda r: surface.area_at(r) / (2 * np.pi), surface.name)


@dataclass(frozen=True, eq=False)
class FourierCurve:
    """rho(theta) = r0 + sum_m a_m cos(m theta) + b_m sin(m theta)."""
    r0: float
    a: np.ndarray = field(default_factory=lambda: np.zeros(0))
    b: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def modes(self) -> np.ndarray:
        return np.arange(1, len(self.a) + 1)

    def derivatives(self, theta: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        m = self.modes[:, None]
        c, s = np.cos(m * theta), np.sin(m * theta)
        a, b = np.asarray(self.a)[:, None], np.asarray(self.b)[:, None]
        rho = self.r0 + np.sum(a * c + b * s, axis=0)
        drho = np.sum(m * (b * c - a * s), axis=0)
        d2rho = -np.sum(m**2 * (a * c + b * s), axis=0)
        return rho, drho, d2rho


class GeodesicCurvature(BaseModel):
    model_config = {"arbitrary_types_allowed": True}

    theta: np.ndarray
    kappa: np.ndarray
    length: float
    area: float


def uniform_theta(n: int) -> np.ndarray:
    return 2 * np.pi * np.arange(n) / n


def geodesic_curvature(metric: RadialMetric, curve: FourierCurve, theta: Optional[np.ndarray] = None, n: int = 512) -> GeodesicCurvature:
    """
    Geodesic curvature of {r = rho(theta)}:

        kappa = (-g rho'' + g' g^2 + 2 g' rho'^2) / (g^2 + rho'^2)^(3/2)

    with length and enclosed area by the trapezoid rule on a uniform grid.
    """
    grid = uniform_theta(n)
    rho, d1, _ = curve.derivatives(grid)
    g = metric.g(rho)
    length = float(np.mean(np.sqrt(g**2 + d1**2)) * 2 * np.pi)
    area = float(np.mean(metric.G(rho)) * 2 * np.pi)

    theta = grid if theta is None else np.asarray(theta, dtype=float)
    rho, d1, d2 = curve.derivatives(theta)
    g, dg = metric.g(rho), metric.dg(rho)
    kappa = (-g * d2 + dg * g**2 + 2 * dg * d1**2) / (g**2 + d1**2) ** 1.5
    return GeodesicCurvature(theta=theta, kappa=kappa, length=length, area=area)


class StabilityResult(BaseModel):
    r: float
    q: float
    strictly_stable: bool
    spectral_margin: float
    nearest_square: int
    resonant: bool


def stability_and_spectrum(surface: RevolutionSurface, r: float, resonance_tol: float = 1e-9) -> StabilityResult:
    """
    q = f'^2 - f'' f at r.

    The parallel circle is strictly stable iff q < 1; the spectral margin
    is the distance from q to the nearest m^2, m >= 1.
    """
    f, df, d2f = (float(surface.f_at(r)), float(surface.df_at(r)), float(surface.d2f_at(r)))
    q = df * df - d2f * f
    root = math.sqrt(max(q, 0.0))
    candidates = {max(1, math.floor(root)), max(1, math.ceil(root))}
    m = min(candidates, key=lambda c: (abs(q - c * c), c))
    margin = abs(q - m * m)
    return StabilityResult(
        r=r, q=q, strictly_stable=q < 1, spectral_margin=margin, nearest_square=m * m, resonant=margin < resonance_tol
    )


@dataclass(frozen=True, eq=False)
class Cap:
    """Prescribed cap: profile, surface and its construction parameters."""
    profile: ProfileFunction
    surface: RevolutionSurface
    delta: float
    k: float
    alpha: float
    j: float
    n: float
    report: VerificationReport

    def to_dict(self) -> dict:
        return {
            "params": {"delta": self.delta, "k": self.k, "alpha": self.alpha, "j": self.j, "n": self.n},
            "profile": self.profile,
            "surface": self.surface,
            "report": self.report,
        }


def cap_form(delta: float, k: float) -> tuple[ProfileClosedForm, float, float]:
    """
    C^2 closed form of I^2 on [0, delta], continued by v^2.

    With x = v/delta, y = 1 - x and s = 4 pi/delta, h = delta^2 p(x) where
    p = s (1 - y^(n+1))/(n+1) + x^2 - 2a + 2 y^(j+1) (a + b x + c x^2),
    n = 2k/s and j solves (j+2)(j+3) = 6(2k+s)/s^2. The anchors are
    (0, 4 pi, -2k) at 0 and (delta^2, 2 delta, 2) at delta.
    """
    s = FOUR_PI / delta
    n = 2 * k / s
    R = 6 * (2 * k + s) / s**2
    j = (-5 + math.sqrt(1 + 4 * R)) / 2
    if j <= 1:
        raise ConstraintViolation("smooth join", v=delta, j=j)
    a = 3 / ((j + 2) * (j + 3))
    b = 3 * (j + 1) / ((j + 2) * (j + 3))
    c = j / (j + 3)

    def split(v):
        v = np.asarray(v, dtype=float)
        x = np.clip(v / delta, 0.0, 1.0)
        return v, x, 1 - x, v < delta

    def i2(v):
        v, x, y, inner = split(v)
        p = s * (1 - y ** (n + 1)) / (n + 1) + x**2 - 2 * a + 2 * y ** (j + 1) * (a + b * x + c * x**2)
        return np.where(inner, delta**2 * p, v**2)

    def di2(v):
        v, x, y, inner = split(v)
        sigma = 1 - y**j * (1 + j * x)
        return np.where(inner, delta * (s * y**n + 2 * x * sigma), 2 * v)

    def d2i2(v):
        v, x, y, inner = split(v)
        sigma = 1 - y**j * (1 + j * x)
        dsigma = j * (j + 1) * x * y ** (j - 1)
        return np.where(inner, -s * n * y ** (n - 1) + 2 * sigma + 2 * x * dsigma, 2.0)

    return ProfileClosedForm(i2, di2, d2i2), j, n


def build_cap(delta: float = 1.5, k: float = 100.0, alpha: float = 10.0, points: int = 4001) -> Cap:
    """
    Cap with I(v) = v on [delta, alpha] and curvature k at the pole.

    Args:
        delta: Area of the curved disk
        k: Curvature at the pole, (I^2)''(0) = -2k
        alpha: End of the linear range; the profile continues as v up to 2 alpha

    Returns:
        Cap with the validated profile and the surface from metric_from_profile

    Raises:
        BadParameters: unless 0 < delta < alpha and k > 0
        ConstraintViolation: naming the first property that fails
    """
    if not 0 < delta < alpha or k <= 0:
        raise BadParameters("Need 0 < delta < alpha and k > 0", delta=delta, k=k, alpha=alpha)
    if FOUR_PI * delta - k * delta**2 > delta**2:
        raise ConstraintViolation("lower bound", v=delta)

    form, j, n = cap_form(delta, k)
    v_max = 2 * alpha
    fine = np.unique(np.concatenate([np.linspace(0, delta, 20001), np.linspace(delta, v_max, 2001)]))
    h, dh, d2h = form.i2(fine), form.di2(fine), form.d2i2(fine)
    tol = 1e-12 * max(1.0, v_max**2)
    report = VerificationReport(title="cap")

    lower = FOUR_PI * fine - k * fine**2
    checks = [
        ("nondecreasing", dh >= -tol),
        ("ratio nonincreasing", fine * dh - 2 * h <= tol),
        ("curvature bound", d2h >= -2 * k - tol),
        ("lower bound", (lower <= 0) | (h >= lower - tol)),
    ]
    for prop, ok in checks:
        bad = np.flatnonzero(~ok)
        report.add(prop, bad.size == 0, measured=None if bad.size == 0 else float(fine[bad[0]]))
        if bad.size:
            raise ConstraintViolation(prop, v=float(fine[bad[0]]))
    linear = (fine >= delta) & (fine <= alpha)
    report.add("linear range", bool(np.allclose(h[linear], fine[linear] ** 2, rtol=1e-12)))
    report.add("pole curvature", True, measured=float(-0.5 * d2h[0]), expected=k)

    grid = np.unique(np.concatenate([
        np.geomspace(1e-10 * delta, delta, 1000), np.linspace(0, delta, points), np.linspace(delta, v_max, points // 2),
    ]))
    profile = ProfileFunction.from_closed_form(form, grid, f"cap(delta={delta:g},k={k:g},alpha={alpha:g})")
    surface = metric_from_profile(profile, roundtrip_tol=CAP_ROUNDTRIP_TOL)
    report.add("metric roundtrip", surface.roundtrip < CAP_ROUNDTRIP_TOL, measured=surface.roundtrip, tolerance=CAP_ROUNDTRIP_TOL)
    logger.info(f"Built cap delta={delta} k={k} alpha={alpha}: j={j:.6g}, n={n:.6g}")
    return Cap(profile=profile, surface=surface, delta=delta, k=k, alpha=alpha, j=j, n=n, report=report)


@dataclass(frozen=True, eq=False)
class MergedProfile:
    profile: ProfileFunction
    seam: float
    unique_minimizer: Optional[int] = None

    def to_dict(self) -> dict:
        return {"profile": self.profile, "seam": self.seam, "unique_minimizer": self.unique_minimizer}


def _grid_check(bullet: str, ok: bool, **context) -> None:
    if not ok:
        raise HypothesisFailure(bullet, **context)


def merge_profiles(
    caps: Sequence[ProfileFunction],
    manifold: ProfileFunction,
    m: int,
    delta: float,
    alpha: float,
    tol: float = 1e-9,
) -> MergedProfile:
    """
    Profile after replacing m cusps by caps.

    min_j I_Sj on [0, m delta], I_M beyond. Hypotheses are checked on the
    grids in order and the first failure raises HypothesisFailure.
    """
    _grid_check("0 < delta < alpha/m", m >= 1 and 0 < delta < alpha / m, m=m, delta=delta, alpha=alpha)
    _grid_check("m caps", len(caps) == m, supplied=len(caps), m=m)
    for idx, cap in enumerate(caps):
        flags = cap.flags()
        _grid_check("I_S nondecreasing", flags["nondecreasing"], cap=idx)
        _grid_check("I_S/v nonincreasing", flags["ratio_nonincreasing"], cap=idx)
        lin = np.linspace(delta, min(alpha, cap.v_max), 201)
        _grid_check("I_S = v on [delta, alpha]", np.allclose(cap.i_at(lin), lin, rtol=tol), cap=idx)
    _grid_check("I_M nondecreasing", manifold.flags()["nondecreasing"])
    seam = m * delta
    for idx, cap in enumerate(caps):
        top = min(m * alpha, cap.v_max, manifold.v_max)
        window = np.linspace(seam, top, 201)
        _grid_check("I_M = I_S on [m delta, m alpha]", np.allclose(manifold.i_at(window), cap.i_at(window), rtol=tol), cap=idx)

    v = np.unique(np.concatenate([
        manifold.v[manifold.v >= seam],
        *[cap.v[cap.v <= seam] for cap in caps],
        [seam],
    ]))
    below = v <= seam
    stack = np.array([cap.i2_at(v[below]) for cap in caps])
    choice = np.argmin(stack, axis=0)
    cols = np.arange(below.sum())
    d1 = np.array([cap.di2_at(v[below]) for cap in caps])[choice, cols]
    d2 = np.array([cap.d2i2_at(v[below]) for cap in caps])[choice, cols]
    upper = v[~below]
    merged = ProfileFunction(
        v=v,
        i2=np.concatenate([stack[choice, cols], manifold.i2_at(upper)]),
        di2=np.concatenate([d1, manifold.di2_at(upper)]),
        d2i2=np.concatenate([d2, manifold.d2i2_at(upper)]),
        name="merged",
    )

    scale = max(1.0, float(np.max(stack)))
    unique = None
    for idx in range(len(caps)):
        others = np.delete(stack, idx, axis=0)
        if others.size and np.all(stack[idx] <= others + 1e-12 * scale) and np.any(stack[idx] < others - tol * 1e-3 * scale):
            unique = idx
            break
    return MergedProfile(profile=merged, unique_minimizer=unique, seam=seam)


def profile_regimes(merged: MergedProfile, m: int, alpha: float) -> VerificationReport:
    """Subadditive below the seam, linear on [m delta, m alpha], convex beyond."""
    prof = merged.profile
    report = VerificationReport(title="regimes")
    low = prof.v[(prof.v > 0) & (prof.v <= merged.seam)]
    ratio = prof.i_at(low) / low
    report.add("subadditive", bool(np.all(np.diff(ratio) <= 1e-9 * max(1.0, float(ratio.max())))))
    mid = np.linspace(merged.seam, min(m * alpha, prof.v_max), 201)
    report.add("linear", bool(np.allclose(prof.i_at(mid), mid, rtol=1e-9)))
    high = prof.v[prof.v >= min(m * alpha, prof.v_max)]
    h, dh, d2h = prof.i2_at(high), prof.di2_at(high), prof.d2i2_at(high)
    report.add("convex", bool(np.all(2 * h * d2h - dh**2 >= -1e-9 * max(1.0, float(np.max(h))) ** 2)))
    return report


class ShapePredicates(BaseModel):
    ratio_nonincreasing: bool
    subadditive_certificate: bool
    spot_check: Optional[dict] = None
    counterexample: Optional[dict] = None


def _as_callable(F) -> ArrayFn:
    return F.i_at if isinstance(F, ProfileFunction) else F


def shape_predicates(F, v_grid: Optional[np.ndarray] = None, tol: float = 1e-12) -> ShapePredicates:
    """
    v -> F(v)/v nonincreasing certifies F(v + v') <= F(v) + F(v').

    Without the certificate, a counterexample F(2v) > 2F(v) is searched,
    starting with v = 1.
    """
    fn = _as_callable(F)
    if v_grid is None:
        top = F.v_max / 2 if isinstance(F, ProfileFunction) else 10.0
        v_grid = np.linspace(top / 2000, top, 2000)
    v = np.asarray(v_grid, dtype=float)
    v = v[v > 0]
    vals = np.asarray(fn(v), dtype=float)
    ratio = vals / v
    ok = bool(np.all(np.diff(ratio) <= tol * max(1.0, float(np.max(np.abs(ratio))))))

    spot = None
    if v[-1] >= 1:
        f1, f2 = float(fn(np.array(1.0))), float(fn(np.array(2.0)))
        spot = {"v": 1.0, "F(2v)": f2, "2F(v)": 2 * f1, "holds": f2 <= 2 * f1 + tol}
    counter = None
    if not ok:
        candidates = ([1.0] if v[-1] >= 1 else []) + v.tolist()
        for x in candidates:
            lhs, rhs = float(fn(np.array(2 * x))), 2 * float(fn(np.array(x)))
            if lhs > rhs + tol:
                counter = {"v": x, "v_prime": x, "F(v+v')": lhs, "F(v)+F(v')": rhs}
                break
    return ShapePredicates(ratio_nonincreasing=ok, subadditive_certificate=ok, spot_check=spot, counterexample=counter)


def min_closure(*fns: ArrayFn) -> ArrayFn:
    def closure(v):
        return np.min(np.array([np.asarray(fn(v), dtype=float) for fn in fns]), axis=0)

    return closure


def splice(f: ArrayFn, g: ArrayFn, delta: float) -> ArrayFn:
    """h = f on [0, delta] and g beyond."""
    def spliced(v):
        v = np.asarray(v, dtype=float)
        return np.where(v <= delta, f(v), g(v))

    return spliced


def subadditivity_sample(F, rng: np.random.Generator, v_max: float, pairs: int = 10_000) -> float:
    """Largest F(v+v') - F(v) - F(v') over random pairs with v + v' <= v_max."""
    fn = _as_callable(F)
    v = rng.uniform(0, v_max / 2, pairs)
    w = rng.uniform(0, v_max / 2, pairs)
    return float(np.max(fn(v + w) - fn(v) - fn(w)))


def bol_fiala_bound(k: float, v) -> np.ndarray:
    """J_k(v) = sqrt(4 pi v - k v^2)."""
    v = np.asarray(v, dtype=float)
    inside = FOUR_PI * v - k * v**2
    if np.any(v < 0) or np.any(inside < -1e-12 * np.maximum(1.0, FOUR_PI * v)):
        raise DomainError("4 pi v - k v^2 < 0", k=k, v=v.tolist())
    return np.sqrt(np.maximum(inside, 0.0))


def small_volume_threshold(k: float) -> float:
    """Supremum 2 pi/k of the volumes eta where J_k bounds the disk profile (inf for k <= 0)."""
    return 2 * math.pi / k if k > 0 else math.inf


def ultrahyperbolic_bound(a: float, L: float) -> float:
    """rho(a, L) = -((4/L) arcosh(1 + a/2pi))^2."""
    if a <= 0 or L <= 0:
        raise BadParameters("Need a > 0 and L > 0", a=a, L=L)
    return -((4 / L) * math.acosh(1 + a / (2 * math.pi))) ** 2


def bol_fiala_tools(
    k: Optional[float] = None,
    v: Optional[float] = None,
    a: Optional[float] = None,
    L: Optional[float] = None,
) -> dict:
    """Evaluate whichever of J_k(v), eta(k) and rho(a, L) the arguments allow."""
    out: dict = {}
    if k is not None:
        out["eta"] = small_volume_threshold(k)
        if v is not None:
            out["J"] = float(bol_fiala_bound(k, v))
    if a is not None and L is not None:
        out["rho"] = ultrahyperbolic_bound(a, L)
    return out
