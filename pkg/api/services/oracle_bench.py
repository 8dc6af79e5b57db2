"""
Brute-force oracles.

Competitor search looks for domains {r < rho(theta)} with
rho = r0 + sum a_m cos(m theta) + b_m sin(m theta) that beat the
parallel circle of the same area. r0 is always re-solved so the enclosed
area is exact; the remaining coefficients follow a projected gradient
with backtracking. Each trial draws from default_rng([seed, trial]) so
results do not depend on thread scheduling.
"""

import cmath
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict
from scipy import integrate
from scipy.optimize import brentq

from models.reports import VerificationReport
from services.cusp_assembly import chart_radius, model_lambda, model_w0_radial_log_derivative
from services.errors import BadParameters
from services.revolution_lab import (
    FourierCurve,
    RadialMetric,
    RevolutionSurface,
    geodesic_curvature,
    uniform_theta,
)
from services.settings import get_settings

logger = logging.getLogger(__name__)

DEGENERACY = 1e-6
AREA_TOL = 1e-10


class CompetitorCurve(BaseModel):
    """Fourier graph r = rho(theta) with its length and enclosed area."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    r0: float
    a: np.ndarray
    b: np.ndarray
    length: float
    area: float

    @property
    def curve(self) -> FourierCurve:
        return FourierCurve(self.r0, self.a, self.b)

    def rho(self, theta: np.ndarray) -> np.ndarray:
        return self.curve.derivatives(theta)[0]

    def kappa(self, metric: RadialMetric, n: int = 512) -> np.ndarray:
        return geodesic_curvature(metric, self.curve, n=n).kappa

    def samples(self, n: int = 512) -> dict[str, np.ndarray]:
        theta = uniform_theta(n)
        return {"theta": theta, "rho": self.rho(theta)}


class LengthFunctional:
    """Trapezoid length and area of Fourier graphs on a fixed theta grid."""

    def __init__(self, surface: RevolutionSurface, modes: int, n: int = 512):
        self.surface = surface
        self.modes = modes
        self.n = n
        self.theta = uniform_theta(n)
        m = np.arange(1, modes + 1)[:, None]
        self.m = m
        self.cos = np.cos(m * self.theta)
        self.sin = np.sin(m * self.theta)
        self.r_lo = float(surface.r[0])
        self.r_hi = float(surface.r[-1])
        self.offset = float(surface.area[0])

    def split(self, c: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return c[: self.modes], c[self.modes:]

    def oscillation(self, c: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        a, b = self.split(c)
        osc = a @ self.cos + b @ self.sin
        drho = (self.m[:, 0] * b) @ self.cos - (self.m[:, 0] * a) @ self.sin
        return osc, drho

    def area(self, r0: float, osc: np.ndarray) -> float:
        return float(np.mean(self.surface.area_at(r0 + osc)) - self.offset)

    def length(self, r0: float, c: np.ndarray) -> float:
        osc, drho = self.oscillation(c)
        g = self.surface.f_at(r0 + osc)
        return float(2 * np.pi * np.mean(np.sqrt(g**2 + drho**2)))

    def project(self, c: np.ndarray, v: float, r_guess: Optional[float] = None) -> Optional[float]:
        """r0 with area exactly v, or None when rho cannot stay inside the chart."""
        osc, _ = self.oscillation(c)
        lo = self.r_lo - osc.min()
        hi = self.r_hi - osc.max()
        if lo >= hi:
            return None
        lo += 1e-12 * max(1.0, abs(lo))
        if not self.area(lo, osc) < v < self.area(hi, osc):
            return None

        r0 = r_guess if r_guess is not None and lo < r_guess < hi else 0.5 * (lo + hi)
        for _ in range(30):
            gap = self.area(r0, osc) - v
            if abs(gap) < 1e-13 * max(1.0, v):
                return r0
            slope = float(2 * np.pi * np.mean(self.surface.f_at(r0 + osc)))
            r0 -= gap / slope
            if not lo < r0 < hi:
                break
        return brentq(lambda r: self.area(r, osc) - v, lo, hi, xtol=1e-15, rtol=1e-15)

    def gradients(self, r0: float, c: np.ndarray) -> dict[str, np.ndarray]:
        """Analytic derivatives of length and area in (r0, a, b)."""
        osc, drho = self.oscillation(c)
        rho = r0 + osc
        g, dg = self.surface.f_at(rho), self.surface.df_at(rho)
        s = np.sqrt(g**2 + drho**2)
        ggp = g * dg / s
        m = self.m
        dL_da = 2 * np.pi * np.mean(ggp * self.cos - (drho / s) * m * self.sin, axis=1)
        dL_db = 2 * np.pi * np.mean(ggp * self.sin + (drho / s) * m * self.cos, axis=1)
        dA_da = 2 * np.pi * np.mean(g * self.cos, axis=1)
        dA_db = 2 * np.pi * np.mean(g * self.sin, axis=1)
        return {
            "L_r0": float(2 * np.pi * np.mean(ggp)),
            "A_r0": float(2 * np.pi * np.mean(g)),
            "L_c": np.concatenate([dL_da, dL_db]),
            "A_c": np.concatenate([dA_da, dA_db]),
        }

    def reduced_gradient(self, r0: float, c: np.ndarray) -> np.ndarray:
        d = self.gradients(r0, c)
        return d["L_c"] - (d["L_r0"] / d["A_r0"]) * d["A_c"]

    def reduced_length(self, c: np.ndarray, v: float, r_guess: Optional[float] = None) -> float:
        r0 = self.project(c, v, r_guess)
        return math.inf if r0 is None else self.length(r0, c)


class SearchResult(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    surface: str
    v: float
    r_v: float
    disk_length: float
    best_length: float
    best_curve: CompetitorCurve
    relative_gap: float
    beats_disk: bool
    trials: int
    modes: int
    seed: int
    running_min: list[float]
    hessian_eigenvalues: list[float]
    degenerate_modes: list[int]
    curvature_bound: float
    bol_fiala_margin: float
    max_area_error: float

    def to_dict(self) -> dict:
        data = self.model_dump(exclude={"best_curve"})
        data["best_curve"] = {
            "r0": self.best_curve.r0, "a": self.best_curve.a, "b": self.best_curve.b,
            "length": self.best_curve.length, "area": self.best_curve.area,
        }
        return data


def _descend(fn: LengthFunctional, c: np.ndarray, v: float, r_v: float, max_iter: int) -> tuple[float, np.ndarray, float]:
    """Projected gradient descent with Armijo backtracking from c."""
    for _ in range(20):
        r0 = fn.project(c, v, r_v)
        if r0 is not None:
            break
        c = c / 2
    else:
        c = np.zeros_like(c)
        r0 = fn.project(c, v, r_v)

    L = fn.length(r0, c)
    step = r_v
    for _ in range(max_iter):
        grad = fn.reduced_gradient(r0, c)
        norm2 = float(grad @ grad)
        if norm2 < (1e-12 * L) ** 2:
            break
        accepted = False
        for _ in range(50):
            trial = c - step * grad
            r_new = fn.project(trial, v, r0)
            if r_new is not None:
                L_new = fn.length(r_new, trial)
                if L_new <= L - 1e-4 * step * norm2:
                    c, r0, L = trial, r_new, L_new
                    accepted = True
                    break
            step /= 2
        if not accepted:
            break
        step *= 2
    return r0, c, L


def _stable_length(fn: LengthFunctional, r0: float, c: np.ndarray, max_points: int = 4096) -> tuple[float, int]:
    """Length with the theta grid doubled until two resolutions agree."""
    n, L = fn.n, fn.length(r0, c)
    while n < max_points:
        finer = LengthFunctional(fn.surface, fn.modes, 2 * n)
        L_fine = finer.length(r0, c)
        if abs(L_fine - L) <= 1e-12 * L:
            return L, n
        logger.warning(f"Quadrature at {n} points off by {abs(L_fine - L):.3g}; doubling")
        n, L = 2 * n, L_fine
    return L, n


def disk_hessian(fn: LengthFunctional, v: float, r_v: float, step: float = 1e-3) -> np.ndarray:
    """Central-difference Hessian of the area-constrained length at the parallel circle."""
    dim = 2 * fn.modes
    h = step * r_v
    base = fn.reduced_length(np.zeros(dim), v, r_v)

    def at(*shifts: tuple[int, float]) -> float:
        c = np.zeros(dim)
        for i, s in shifts:
            c[i] += s
        return fn.reduced_length(c, v, r_v)

    H = np.zeros((dim, dim))
    for i in range(dim):
        H[i, i] = (at((i, h)) - 2 * base + at((i, -h))) / h**2
        for j in range(i + 1, dim):
            H[i, j] = H[j, i] = (
                at((i, h), (j, h)) - at((i, h), (j, -h)) - at((i, -h), (j, h)) + at((i, -h), (j, -h))
            ) / (4 * h * h)
    return H


def degenerate_modes(H: np.ndarray, modes: int) -> tuple[np.ndarray, list[int]]:
    """Eigenvalues and the Fourier modes m of those below 1e-6 of the largest."""
    values, vectors = np.linalg.eigh(H)
    top = float(np.max(np.abs(values)))
    flagged = sorted({int(np.argmax(np.abs(vectors[:, k]))) % modes + 1
                      for k in range(len(values)) if abs(values[k]) < DEGENERACY * top})
    return values, flagged


def _bol_fiala_floor(k: float, area: float) -> float:
    inside = 4 * math.pi * area - k * area * area
    return math.sqrt(inside) if inside > 0 else 0.0


def competitor_search(
    surface: RevolutionSurface,
    v: float,
    modes: int = 8,
    trials: int = 200,
    seed: int = 42,
    quad_points: int = 512,
    max_iter: int = 100,
    threads: Optional[int] = None,
    hessian: bool = True,
) -> SearchResult:
    """
    Seeded Fourier competitor search at area v.

    Args:
        surface: Surface of revolution (a cap or a cusp end)
        v: Target area, below the total area
        modes: Highest Fourier mode M
        trials: Random initializations
        seed: Base seed; trial i uses default_rng([seed, i])
        quad_points: Uniform theta points
        max_iter: Descent iterations per trial
        threads: Worker cap (default ISOPROFILE_THREADS)
        hessian: Also compute the Hessian spectrum at the parallel circle

    Returns:
        SearchResult with the best competitor and the parallel circle's length
    """
    if modes < 1 or trials < 1:
        raise BadParameters("Need modes >= 1 and trials >= 1", modes=modes, trials=trials)
    total = float(surface.area[-1] - surface.area[0])
    if not 0 < v < total:
        raise BadParameters(f"Area {v} outside (0, {total})", v=v)

    fn = LengthFunctional(surface, modes, quad_points)
    r_v = surface.radius_for_area(v + float(surface.area[0]))
    disk_length = float(2 * np.pi * surface.f_at(r_v))
    k = float(np.max(surface.curvature()))
    weights = 1.0 / np.arange(1, modes + 1) ** 2

    def run(i: int) -> CompetitorCurve:
        rng = np.random.default_rng([seed, i])
        c = 0.05 * r_v * rng.standard_normal(2 * modes) * np.concatenate([weights, weights])
        r0, c, L = _descend(fn, c, v, r_v, max_iter)
        osc, _ = fn.oscillation(c)
        a, b = fn.split(c)
        return CompetitorCurve(r0=r0, a=a.copy(), b=b.copy(), length=L, area=fn.area(r0, osc))

    threads = threads or get_settings().threads
    logger.info(f"Competitor search on {surface.name} at v={v}: {trials} trials, M={modes}, {threads} threads")
    with ThreadPoolExecutor(max_workers=threads) as pool:
        found = list(pool.map(run, range(trials)))

    running, best = [], found[0]
    for cur in found:
        if cur.length < best.length:
            best = cur
        running.append(best.length)
    best_length, points = _stable_length(fn, best.r0, np.concatenate([best.a, best.b]))
    best = best.model_copy(update={"length": best_length})

    eigen, flagged = ([], [])
    if hessian:
        values, flagged = degenerate_modes(disk_hessian(fn, v, r_v), modes)
        eigen = values.tolist()

    margin = min(cur.length - _bol_fiala_floor(k, cur.area) for cur in found)
    gap = (best.length - disk_length) / disk_length
    logger.info(f"Best length {best.length:.12g} against disk {disk_length:.12g} (gap {gap:.3g})")
    return SearchResult(
        surface=surface.name, v=v, r_v=r_v, disk_length=disk_length, best_length=best.length, best_curve=best,
        relative_gap=gap, beats_disk=gap < -1e-6, trials=trials, modes=modes, seed=seed, running_min=running,
        hessian_eigenvalues=eigen, degenerate_modes=flagged, curvature_bound=k, bol_fiala_margin=margin,
        max_area_error=max(abs(cur.area - v) for cur in found),
    )


def search_report(result: SearchResult) -> VerificationReport:
    report = VerificationReport(title="competitor_search", seed=result.seed)
    report.add("disk_not_beaten", not result.beats_disk, measured=result.relative_gap, tolerance=1e-6)
    report.add("area_projection", result.max_area_error < AREA_TOL, measured=result.max_area_error, tolerance=AREA_TOL)
    report.add("bol_fiala_floor", result.bol_fiala_margin >= -1e-6, measured=result.bol_fiala_margin)
    report.add(
        "running_min_monotone", all(b <= a for a, b in zip(result.running_min, result.running_min[1:])),
    )
    return report


class FluxResult(BaseModel):
    r: float
    u_p: float
    radius: float
    flux: float
    enclosed_area: float
    closed_form: float
    hyperbolic_disk_area: float
    error: float
    positive: bool


def singular_flux(r: float, u_p: float = 1.0) -> FluxResult:
    """
    Flux of the calibrating form across |z| = sqrt(tanh r).

    The form is the normal derivative of log w0, so the flux is the line
    integral int_0^2pi rho d/drho log w0(rho e^(i theta)) d theta. It is
    compared with the enclosed model area 2 pi int 16 s^3 (1 - s^4)^-2 ds
    and with twice the area of the hyperbolic disk of model radius tanh r;
    all three equal 8 pi sinh^2 r. The flux does not depend on u_p.
    """
    radius = chart_radius(r)
    flux, _ = integrate.quad(
        lambda theta: model_w0_radial_log_derivative(cmath.rect(radius, theta)),
        0.0, 2 * math.pi, limit=200, epsabs=0.0, epsrel=1e-13,
    )
    area, _ = integrate.quad(lambda s: 2 * math.pi * model_lambda(s) * s, 0.0, radius, epsabs=0.0, epsrel=1e-13)
    x = math.tanh(r)
    disk = 4 * math.pi * x * x / (1 - x * x)
    closed = 8 * math.pi * math.sinh(r) ** 2
    error = max(abs(flux - 2 * disk), abs(flux - area))
    logger.info(f"Flux at r={r}: line {flux:.17g}, area {area:.17g}, closed form {closed:.17g}")
    return FluxResult(
        r=r, u_p=u_p, radius=radius, flux=flux, enclosed_area=area, closed_form=closed,
        hyperbolic_disk_area=disk, error=error, positive=flux > 0,
    )


def check_gradients(surface: RevolutionSurface, curve: FourierCurve, h: float = 1e-6, n: int = 512) -> VerificationReport:
    """Analytic length and area derivatives against central differences."""
    modes = len(curve.a)
    fn = LengthFunctional(surface, modes, n)
    c = np.concatenate([curve.a, curve.b])
    d = fn.gradients(curve.r0, c)

    def both(r0, cc):
        osc, _ = fn.oscillation(cc)
        return fn.length(r0, cc), fn.area(r0, osc)

    L_fd, A_fd = [], []
    for i in range(2 * modes):
        e = np.zeros_like(c)
        e[i] = h
        (Lp, Ap), (Lm, Am) = both(curve.r0, c + e), both(curve.r0, c - e)
        L_fd.append((Lp - Lm) / (2 * h))
        A_fd.append((Ap - Am) / (2 * h))
    (Lp, Ap), (Lm, Am) = both(curve.r0 + h, c), both(curve.r0 - h, c)

    analytic = np.concatenate([[d["L_r0"]], d["L_c"], [d["A_r0"]], d["A_c"]])
    numeric = np.concatenate([[(Lp - Lm) / (2 * h)], L_fd, [(Ap - Am) / (2 * h)], A_fd])
    err = float(np.max(np.abs(analytic - numeric)) / np.max(np.abs(analytic)))
    report = VerificationReport(title="gradients")
    report.add("length_area_gradients", err < 1e-6, measured=err, tolerance=1e-6)
    return report


def _spectral_derivative(values: np.ndarray) -> np.ndarray:
    n = len(values)
    k = np.fft.rfftfreq(n, d=1.0 / n)
    coeffs = 1j * k * np.fft.rfft(values)
    if n % 2 == 0:
        coeffs[-1] = 0
    return np.fft.irfft(coeffs, n)


def length_variation_curvature(metric: RadialMetric, curve: FourierCurve, n: int = 128, h: float = 1e-6) -> np.ndarray:
    """
    Curvature from the first variation of the discrete length.

    L = dtheta sum sqrt(g(rho_j)^2 + (D rho)_j^2) with D the spectral
    derivative; kappa_j = (dL/drho_j) / (g(rho_j) dtheta), by central
    differences in each nodal value.
    """
    theta = uniform_theta(n)
    rho = curve.derivatives(theta)[0]
    dtheta = 2 * np.pi / n

    def length(nodes):
        return float(dtheta * np.sum(np.sqrt(metric.g(nodes) ** 2 + _spectral_derivative(nodes) ** 2)))

    kappa = np.empty(n)
    for j in range(n):
        e = np.zeros(n)
        e[j] = h
        kappa[j] = (length(rho + e) - length(rho - e)) / (2 * h) / (metric.g(rho[j]) * dtheta)
    return kappa
