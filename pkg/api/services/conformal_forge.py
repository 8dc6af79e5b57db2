"""
Conformal constructions with a prescribed level-volume profile.

The level volume V(t) of the new metric satisfies

    V'(t)^((n-1)/n) t = I(V(t)),   V(t0) = t0,

Separating variables gives the identity

    (t^-beta - tau^-beta) / beta = int_V(t)^inf I^(-n/(n-1)),   beta = 1/(n-1),

with tau^-beta = t0^-beta - beta int_t0^inf I^(-n/(n-1)), zero when there is
no finite blow-up. The forward equation for t(V) is unstable near the
no-blow-up boundary (I = v gives V = t exactly), so the tail
T(y) = beta int_(e^y)^inf I^(-n/(n-1)) is integrated backward in y = log V
from V = 1e12, where it is a sum of positive terms, and
t = (tau^-beta + T)^(-1/beta).
"""

import logging
import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
import sympy as sp
from pydantic import BaseModel
from scipy import integrate
from scipy.optimize import brentq

from models.reports import VerificationReport
from services.errors import BadParameters, NoBlowup, NonConvexProfile, TargetUnreachable
from services.revolution_lab import ProfileFunction, curvature_of_profile
from services.settings import get_settings

logger = logging.getLogger(__name__)

V_CEILING = 1e12
RESOLVED = 1e-8
IDENTITY_FLOOR = 1e-4
GRID_FLOOR = 1e-10


@dataclass(frozen=True, eq=False)
class ConformalSolution:
    """Samples of V(t), f = V'^(1/n) and h = I'(V) on a grid in [t0, tau)."""

    n: int
    t0: float
    t: np.ndarray
    V: np.ndarray
    f: np.ndarray
    h: np.ndarray
    tau: float
    tau_from_ode: float
    blowup: bool
    profile: ProfileFunction
    residual: float

    @property
    def beta(self) -> float:
        return 1 / (self.n - 1)

    def curvature(self) -> np.ndarray:
        return curvature_of_profile(self.profile, self.V)

    def samples(self) -> dict[str, np.ndarray]:
        return {"t": self.t, "V": self.V, "f": self.f, "K": self.curvature()}

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "t0": self.t0,
            "tau": self.tau,
            "tau_from_ode": self.tau_from_ode,
            "blowup": self.blowup,
            "profile": self.profile.name,
            "points": len(self.t),
            "t_last": float(self.t[-1]),
            "V_last": float(self.V[-1]),
            "residual": self.residual,
        }


def tail_integral(profile: ProfileFunction, V: float, p: float) -> float:
    """int_V^inf I(v)^-p dv, integrated in s with v = V e^s."""
    def integrand(s):
        v = V * math.exp(s)
        with np.errstate(over="ignore"):
            i = float(profile.i_at(v))
        return v / i**p if math.isfinite(i) and i > 0 else 0.0

    value, _ = integrate.quad(integrand, 0.0, 600.0, limit=500, epsabs=0.0, epsrel=1e-13)
    return value


def partial_integral(profile: ProfileFunction, a: float, b: float, p: float) -> float:
    """int_a^b I(v)^-p dv, in y = log v."""
    if b <= a:
        return 0.0
    value, _ = integrate.quad(
        lambda y: math.exp(y) / float(profile.i_at(math.exp(y))) ** p,
        math.log(a), math.log(b), limit=500, epsabs=0.0, epsrel=1e-13,
    )
    return value


def _check_profile(profile: ProfileFunction, t0: float, v_top: float) -> None:
    if profile.exact is None:
        raise BadParameters("Conformal solving needs a closed-form profile", profile=profile.name)
    seam = np.linspace(t0 / 1000, t0, 200)
    if not np.allclose(profile.i_at(seam), seam, rtol=1e-9, atol=0):
        raise BadParameters("I(v) = v on [0, t0] required", t0=t0)
    v = np.geomspace(t0 / 1000, v_top, 4000)
    h, dh, d2h = profile.i2_at(v), profile.di2_at(v), profile.d2i2_at(v)
    # sign of I'' is the sign of 2 I^2 (I^2)'' - ((I^2)')^2
    bad = np.flatnonzero(2 * h * d2h - dh**2 < -1e-9 * dh**2)
    if bad.size:
        raise NonConvexProfile(f"I is not convex near v={v[bad[0]]:.6g}", v=float(v[bad[0]]))


def conformal_solve(
    profile: ProfileFunction,
    n: int = 2,
    t0: float = 1.0,
    require_blowup: bool = False,
    per_halving: int = 4,
    points: int = 200,
    rtol: Optional[float] = None,
) -> ConformalSolution:
    """
    Solve for V(t) up to V = 1e12.

    Args:
        profile: Convex closed-form profile with I(v) = v on [0, t0]
        n: Dimension
        t0: Seam level, V(t0) = t0
        require_blowup: Raise NoBlowup instead of returning tau = inf
        per_halving: Grid points per halving of tau - t
        points: Grid size when there is no blow-up
        rtol: Solver tolerance (default min(settings rtol, 1e-12))

    Returns:
        ConformalSolution on a grid geometric toward tau
    """
    if n < 2 or t0 <= 0:
        raise BadParameters("Need n >= 2 and t0 > 0", n=n, t0=t0)
    _check_profile(profile, t0, V_CEILING)
    rtol = rtol or min(get_settings().rtol, 1e-12)
    beta = 1 / (n - 1)
    p = n / (n - 1)

    denominator = t0**-beta - beta * tail_integral(profile, t0, p)
    blowup = denominator > 1e-9 * t0**-beta
    if not blowup and require_blowup:
        raise NoBlowup("Tail integral of I^(-n/(n-1)) is too large for a finite blow-up", t0=t0, n=n)
    tau = denominator ** (-1 / beta) if blowup else math.inf

    def rhs(y, T):
        V = math.exp(y)
        return [-beta * V / float(profile.i_at(V)) ** p]

    y0, y_end = math.log(t0), math.log(V_CEILING)
    T_end = beta * tail_integral(profile, V_CEILING, p)
    sol = integrate.solve_ivp(rhs, (y_end, y0), [T_end], method="DOP853", rtol=rtol, atol=1e-300, dense_output=True)
    if not sol.success:
        raise BadParameters(f"Tail integration failed: {sol.message}", profile=profile.name, n=n)
    tau_pow = max(denominator, 0.0) if blowup else 0.0

    def t_of(y: float) -> float:
        return (tau_pow + float(sol.sol(y)[0])) ** (-1 / beta)

    t_end = t_of(y_end)
    logger.info(f"Conformal solve n={n} t0={t0} for {profile.name}: tau={tau:.17g}, t(V=1e12)={t_end:.17g}")

    if blowup:
        # same blow-up level from the integrated tail instead of the quadrature
        tau_ode = (t0**-beta - float(sol.sol(y0)[0])) ** (-1 / beta)
        j = np.arange(0, 64 * per_halving)
        grid = tau - (tau - t0) * 2.0 ** (-j / per_halving)
        grid = grid[(grid <= t_end) & (tau - grid >= GRID_FLOOR * tau)]
    else:
        tau_ode = math.inf
        grid = np.geomspace(t0, t_end, points)

    def level(t_target: float) -> float:
        if t_target <= t0:
            return y0
        return brentq(lambda y: t_of(y) - t_target, y0, y_end, xtol=1e-15, rtol=1e-15)

    y = np.array([level(t) for t in grid])
    V = np.exp(y)
    I = profile.i_at(V)
    f = (I / grid) ** beta
    h = profile.di2_at(V) / (2 * I)

    residual = identity_residual(profile, grid, V, n, tau)
    return ConformalSolution(
        n=n, t0=t0, t=grid, V=V, f=f, h=h, tau=tau, tau_from_ode=tau_ode, blowup=blowup,
        profile=profile, residual=residual,
    )


def identity_residual(profile: ProfileFunction, t: np.ndarray, V: np.ndarray, n: int, tau: float) -> float:
    """Largest relative gap between t and the level recovered from V by the tail quadrature."""
    beta, p = 1 / (n - 1), n / (n - 1)
    tau_pow = 0.0 if math.isinf(tau) else tau**-beta
    tails = np.array([tail_integral(profile, v, p) for v in V])
    recovered = (tau_pow + beta * tails) ** (-1 / beta)
    return float(np.max(np.abs(recovered - t) / t))


def conformal_report(sol: ConformalSolution, rtol: float = 1e-8) -> VerificationReport:
    """Grid invariants: identity residual, seam value, monotone V and h."""
    report = VerificationReport(title="conformal")
    report.add("identity_residual", sol.residual < rtol, measured=sol.residual, tolerance=rtol)
    report.add("seam", abs(sol.f[0] - 1) < 1e-12, measured=float(sol.f[0]), expected=1.0)
    report.add("V_increasing", bool(np.all(np.diff(sol.V) > 0)))
    report.add("density_nondecreasing", bool(np.all(np.diff(sol.h) >= -1e-12)))
    if sol.blowup:
        mask = sol.tau - sol.t >= IDENTITY_FLOOR * sol.tau
        beta, p = sol.beta, sol.n / (sol.n - 1)
        lhs = (sol.t[mask] ** -beta - sol.tau**-beta) / beta
        rhs = np.array([tail_integral(sol.profile, v, p) for v in sol.V[mask]])
        err = float(np.max(np.abs(lhs - rhs) / rhs))
        report.add("tau_identity", err < 1e-6, measured=err, tolerance=1e-6)
        drift = abs(sol.tau_from_ode - sol.tau) / sol.tau
        report.add("tau_extrapolation", drift < 1e-9, measured=drift, tolerance=1e-9)
    else:
        err = float(np.max(np.abs(sol.V - sol.t) / sol.t))
        report.add("no_blowup", math.isinf(sol.tau), measured=err, detail="tau = inf")
    return report


def _second_order_log(X: float) -> tuple[float, float]:
    """Solve L = log X - 2 log L + log c(L), c = 1 - 2/L + 6/L^2."""
    L = math.log(X)
    for _ in range(100):
        c = 1 - 2 / L + 6 / L**2
        nxt = math.log(X) - 2 * math.log(L) + math.log(c)
        if abs(nxt - L) < 1e-15 * L:
            break
        L = nxt
    return L, 1 - 2 / L + 6 / L**2


def asymptotic_diagnostics(sol: ConformalSolution) -> VerificationReport:
    """
    Blow-up diagnostics for I = v log v in dimension 2.

    Asymptote ratio over the last resolved decade, completeness partial
    integrals against log log X with X = tau t/(tau - t), and the
    curvature trend K(V) = -(log^2 V + 3 log V + 1).
    """
    if not sol.blowup:
        raise NoBlowup("Diagnostics need a finite blow-up level", profile=sol.profile.name)
    if sol.n != 2:
        raise BadParameters("Asymptotic diagnostics are for n = 2", n=sol.n)
    tau = sol.tau
    report = VerificationReport(title="asymptotics")

    resolved = sol.tau - sol.t >= RESOLVED * tau
    t, f, V = sol.t[resolved], sol.f[resolved], sol.V[resolved]
    X = tau * t / (tau - t)
    final = X >= X[-1] / 10
    second = []
    for Xi, ti, fi in zip(X[final], t[final], f[final]):
        L, c = _second_order_log(Xi)
        second.append(fi * ti * L / (Xi * c))
    second = np.array(second)
    report.add(
        "asymptote_ratio", bool(np.all(np.abs(second - 1) <= 0.05)),
        measured=[float(second.min()), float(second.max())], expected=1.0, tolerance=0.05,
        detail=f"X in [{X[final][0]:.6g}, {X[-1]:.6g}]",
    )
    tail = V >= math.exp(8)
    leading = f[tail] * t[tail] * np.log(X[tail]) / X[tail]
    report.add(
        "leading_ratio_improves", abs(leading[-1] - 1) < abs(leading[0] - 1),
        measured=float(leading[-1]), margin=float(abs(leading[0] - 1) - abs(leading[-1] - 1)),
    )

    eps = 10.0 ** -np.arange(2, 7)
    partials, loglog = [], []
    for e in eps:
        V_e = _volume_at(sol, tau - e)
        partials.append(partial_integral(sol.profile, sol.t0, V_e, 1.0))
        loglog.append(math.log(math.log(tau * (tau - e) / e)))
    partials, loglog = np.array(partials), np.array(loglog)
    rates = np.diff(partials) / np.diff(loglog)
    report.add("completeness_increasing", bool(np.all(np.diff(partials) > 0)), measured=partials.tolist())
    report.add(
        "completeness_rate", bool(np.all((rates >= 0.5) & (rates <= 2.0))),
        measured=rates.tolist(), expected=1.0, detail="ratio to log log X increments",
    )

    K_last = float(sol.curvature()[-1])
    L_last = math.log(sol.V[-1])
    closed = -(L_last**2 + 3 * L_last + 1)
    report.add("curvature_to_minus_inf", K_last < -100, measured=K_last, expected=closed)
    report.add("curvature_closed_form", abs(K_last - closed) <= 1e-8 * abs(closed), measured=K_last, expected=closed)
    report.sections["partials"] = {"eps": eps, "P": partials, "loglogX": loglog}
    return report


def _volume_at(sol: ConformalSolution, t: float) -> float:
    """V at level t by bisection in the monotone grid and quadrature inversion."""
    beta, p = sol.beta, sol.n / (sol.n - 1)
    target = (sol.t0**-beta - t**-beta) / beta

    def gap(y):
        return partial_integral(sol.profile, sol.t0, math.exp(y), p) - target

    i = int(np.searchsorted(sol.t, t))
    hi = math.log(sol.V[min(i, len(sol.V) - 1)])
    lo = math.log(sol.V[i - 1]) if i > 0 else math.log(sol.t0)
    return math.exp(brentq(gap, lo, hi, xtol=1e-14))


class Band(BaseModel):
    v_star: float
    eps: float
    s: float
    t: float
    volume: float
    boundary: float


class VanishingConstruction(BaseModel):
    bands: list[Band]
    report: VerificationReport
    certificate: Optional[dict] = None

    def to_dict(self) -> dict:
        return {"bands": self.bands, "report": self.report, "certificate": self.certificate}


def _default_certificate() -> dict:
    t = sp.symbols("t", positive=True)
    v = 2 * sp.pi * t
    u = 1 / ((1 + t**2) * v)
    h = 1 + t**2
    return {
        "integral_h": str(sp.integrate(h, (t, 1, sp.oo))),
        "h_u_v": str(sp.simplify(h * u * v)),
        "limit_u_v": str(sp.limit(u * v, t, sp.oo)),
    }


def _bracket_up(fn: Callable[[float], float], start: float, limit: float = 1e8) -> float:
    """Smallest doubling of start where fn becomes negative."""
    x = max(start, 1.0)
    while fn(x) >= 0:
        x *= 2
        if x > limit:
            raise TargetUnreachable(f"No bracket below {limit:g}", limit=limit)
    return x


def vanishing_profile_construction(
    targets: Sequence[tuple[float, float]],
    u: Optional[Callable[[float], float]] = None,
    h: Optional[Callable[[float], float]] = None,
    base_volume: Optional[Callable[[float], float]] = None,
) -> VanishingConstruction:
    """
    Bands {s < w < t} with volume >= v* and boundary u v(s) + u v(t) <= eps.

    The band volume is int_s^t h u v. Defaults on the Euclidean plane
    (v = 2 pi t, u = 1/((1+t^2) v), h = 1 + t^2) give volume t - s and
    boundary 1/(1+s^2) + 1/(1+t^2).
    """
    defaults = u is None and h is None and base_volume is None
    v = base_volume or (lambda t: 2 * math.pi * t)
    u = u or (lambda t: 1 / ((1 + t * t) * v(t)))
    h = h or (lambda t: 1 + t * t)
    if defaults:
        # u v = 1/(1+t^2), also defined at t = 0
        uv = lambda t: 1 / (1 + t * t)
    else:
        uv = lambda t: u(t) * v(t)

    def volume(s, t):
        return integrate.quad(lambda r: h(r) * uv(r), s, t, limit=200)[0]

    report = VerificationReport(title="vanishing")
    bands = []
    for v_star, eps in targets:
        half = eps / 2
        if uv(0.0) <= half:
            s = 0.0
        else:
            hi = _bracket_up(lambda x: uv(x) - half, 1.0)
            s = brentq(lambda x: uv(x) - half, 0.0, hi, xtol=1e-14)
            s = s * (1 + 1e-9)
        if defaults:
            t = s + v_star
        else:
            top = _bracket_up(lambda x: v_star - volume(s, x), s + 1.0)
            t = brentq(lambda x: volume(s, x) - v_star, s, top, xtol=1e-12)
        while volume(s, t) < v_star:
            t = t * (1 + 1e-12) + 1e-12
        band = Band(v_star=v_star, eps=eps, s=s, t=t, volume=volume(s, t), boundary=uv(s) + uv(t))
        bands.append(band)
        report.add(
            f"band[{v_star:g},{eps:g}]", band.volume >= v_star and band.boundary <= eps,
            measured={"volume": band.volume, "boundary": band.boundary}, expected={"volume": v_star, "boundary": eps},
        )
    certificate = _default_certificate() if defaults else None
    if certificate:
        report.add("integral_h_diverges", certificate["integral_h"] == "oo", measured=certificate["integral_h"])
    return VanishingConstruction(bands=bands, report=report, certificate=certificate)
