"""
Cross-module property suite.

Reruns the invariants of every module under one seed and aggregates a
single report. Quick mode keeps the search and graph counts small enough
for interactive use; full mode runs the acceptance sizes.
"""

import json
import logging
import math
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from models.reports import VerificationReport
from services.calibration_engine import calibration_lower_bound, pipe_clearing_coverage, rearrangement_bound
from services.conformal_forge import (
    asymptotic_diagnostics,
    conformal_report,
    conformal_solve,
    vanishing_profile_construction,
)
from services.cusp_assembly import assemble_surface, cone_angle, surface_report
from services.errors import BadParameters
from services.level_graph import (
    assign_weights,
    check_weight_bounds,
    random_level_graph,
    relabel,
    validate_graph,
    verify_level_sums,
)
from services.oracle_bench import (
    check_gradients,
    competitor_search,
    length_variation_curvature,
    search_report,
    singular_flux,
)
from services.reporting import dumps
from services.revolution_lab import (
    FourierCurve,
    RadialMetric,
    build_cap,
    curvature_of_profile,
    geodesic_curvature,
    metric_from_profile,
    profile_from_metric,
    profile_preset,
    roundtrip_error,
    shape_predicates,
    stability_and_spectrum,
    subadditivity_sample,
    bol_fiala_bound,
    min_closure,
    surface_preset,
)

logger = logging.getLogger(__name__)

MANUAL_DIR = Path(__file__).resolve().parents[2] / "data" / "manual"

TARGETS = (
    "level_graph",
    "cusp_assembly",
    "calibration_engine",
    "revolution_lab",
    "conformal_forge",
    "oracle_bench",
)


def load_manual(name: str) -> dict:
    return json.loads((MANUAL_DIR / f"{name}.json").read_text())


def _graphs(rng: np.random.Generator, count: int, **kwargs):
    for _ in range(count):
        yield validate_graph(random_level_graph(rng, **kwargs))


def level_graph_suite(rng: np.random.Generator, count: int, corrupt: bool = False) -> VerificationReport:
    report = VerificationReport(title="level_graph")
    sum_failures = bound_failures = 0
    first = None
    for i, g in enumerate(_graphs(rng, count)):
        w = assign_weights(g)
        if corrupt and i == 0:
            eid = g.edges[0].id
            w = w.with_weight(eid, w[eid] + Fraction(1, 1000))
        sums = verify_level_sums(g, w)
        bounds = check_weight_bounds(g, w)
        sum_failures += len(sums.failures)
        bound_failures += len(bounds.failures)
        if first is None and not sums.passed:
            first = sums.sections.get("suspect_edges")
    report.add("weight_conservation", sum_failures == 0, measured=sum_failures, expected=0, detail=f"{count} graphs")
    report.add("weight_bounds", bound_failures == 0, measured=bound_failures, expected=0)

    moved = 0
    for _ in range(max(1, count // 4)):
        desc = random_level_graph(rng, max_vertices=15)
        relabeled, _, emap = relabel(desc, rng)
        w = assign_weights(validate_graph(desc))
        w2 = assign_weights(validate_graph(relabeled))
        moved += sum(w2[emap[eid]] != weight for eid, weight in w.weights.items())
    report.add("relabeling_invariance", moved == 0, measured=moved, expected=0)
    if first is not None:
        report.sections["suspect_edges"] = first
    return report


def cusp_assembly_suite(rng: np.random.Generator, count: int) -> VerificationReport:
    report = VerificationReport(title="cusp_assembly")
    failures = 0
    for g in _graphs(rng, count, max_vertices=12):
        failures += len(surface_report(assemble_surface(g), rng=rng, samples=50).failures)
    report.add("sublevel_linearity", failures == 0, measured=failures, expected=0, detail=f"{count} surfaces")

    angles = [cone_angle(s) for s in (0.05, 0.3, 0.6)]
    worst = max(abs(a - 4 * math.pi) for a in angles)
    report.add("cone_angle", worst < 1e-6, measured=angles, expected=4 * math.pi, tolerance=1e-6)
    return report


def calibration_suite(rng: np.random.Generator, count: int) -> VerificationReport:
    report = VerificationReport(title="calibration_engine")
    gaps = 0
    for g in _graphs(rng, count, max_vertices=12, require_disconnected=True):
        gaps += 0 if pipe_clearing_coverage(assemble_surface(g)).passed else 1
    report.add("coverage_complete", gaps == 0, measured=gaps, expected=0, detail=f"{count} disconnected graphs")

    triply_surface = assemble_surface(validate_graph(load_manual("triply_punctured")))
    triply = pipe_clearing_coverage(triply_surface)
    report.add("triply_punctured_gap", bool(triply.sections["gaps"]), measured=triply.sections["gaps"])
    again = pipe_clearing_coverage(triply_surface)
    report.add("coverage_idempotent", dumps(again.sections) == dumps(triply.sections))

    c = np.sort(rng.uniform(0, 5, 20))
    v = float(rng.uniform(0, 10))
    values = [calibration_lower_bound(float(ci), v).value for ci in c]
    report.add("lower_bound_monotone_in_c", all(a <= b for a, b in zip(values, values[1:])), measured=values)

    rear = rearrangement_bound(surface_preset("cosh"), 1.0)
    expected = 2 * math.pi * (math.cosh(1.0) - 1)
    report.add("rearrangement_flux", abs(rear.integral - expected) < 1e-8, measured=rear.integral, expected=expected)
    return report


def revolution_suite(rng: np.random.Generator, perturbed: int = 20) -> VerificationReport:
    report = VerificationReport(title="revolution_lab")
    for name in ("euclidean", "hyperbolic", "bolfiala:1"):
        profile = profile_preset(name)
        err = roundtrip_error(profile, metric_from_profile(profile))
        report.add(f"roundtrip[{name}]", err < 1e-6, measured=err, tolerance=1e-6)

    for name in ("euclidean", "hyperbolic", "spherical:1"):
        surface = surface_preset(name)
        profile = profile_from_metric(surface)
        inner = slice(1, -1)
        K_metric = -surface.d2f[inner] / surface.f[inner]
        K_profile = curvature_of_profile(profile, profile.v[inner])
        err = float(np.max(np.abs(K_metric - K_profile)))
        report.add(f"curvature_identity[{name}]", err < 1e-4, measured=err, tolerance=1e-4)

    worst = 0.0
    metrics = [RadialMetric.preset(m) for m in ("euclidean", "hyperbolic", "spherical:1")]
    for i in range(perturbed):
        metric = metrics[i % len(metrics)]
        curve = FourierCurve(1.0, 0.01 * rng.standard_normal(3), 0.01 * rng.standard_normal(3))
        theta = np.linspace(0, 2 * np.pi, 128, endpoint=False)
        exact = geodesic_curvature(metric, curve, theta=theta).kappa
        oracle = length_variation_curvature(metric, curve, n=128)
        worst = max(worst, float(np.max(np.abs(exact - oracle) / np.abs(exact))))
    report.add("geodesic_curvature_oracle", worst < 1e-5, measured=worst, tolerance=1e-5)

    closure = min_closure(lambda v: bol_fiala_bound(0.5, v), lambda v: bol_fiala_bound(1.0, v))
    grid = np.linspace(1e-3, 2 * math.pi / 1.0 * 0.9, 400)
    shape = shape_predicates(closure, grid)
    excess = subadditivity_sample(closure, rng, v_max=float(grid[-1]))
    report.add("min_closure_certificate", shape.subadditive_certificate)
    report.add("subadditivity_pairs", excess <= 1e-12, measured=excess)

    for k in (0.5, 1.0, 4.0):
        profile = profile_from_metric(surface_preset(f"spherical:{k:g}"))
        exact = bol_fiala_bound(k, profile.v)
        err = float(np.max(np.abs(np.sqrt(profile.i2) - exact)) / np.max(exact))
        report.add(f"bol_fiala_tight[{k:g}]", err < 1e-9, measured=err, tolerance=1e-9)

    cap = build_cap()
    report.extend(cap.report, prefix="cap")
    return report


def conformal_suite(rng: np.random.Generator) -> VerificationReport:
    report = VerificationReport(title="conformal_forge")
    linear = conformal_solve(profile_preset("linear"), n=2)
    err = float(np.max(np.abs(linear.V - linear.t) / linear.t))
    report.add("linear_profile", err < 1e-10, measured=err, tolerance=1e-10)
    report.extend(conformal_report(linear), prefix="linear")

    vlogv = conformal_solve(profile_preset("vlogv"), n=2, require_blowup=True)
    report.extend(conformal_report(vlogv), prefix="vlogv")
    report.extend(asymptotic_diagnostics(vlogv), prefix="vlogv")

    targets = [(v, e) for v in np.geomspace(1, 100, 5) for e in np.geomspace(1e-4, 1e-1, 5)]
    report.extend(vanishing_profile_construction([(float(v), float(e)) for v, e in targets]).report, prefix="vanishing")
    return report


def oracle_suite(seed: int, trials: int, modes: int, full: bool = False) -> VerificationReport:
    report = VerificationReport(title="oracle_bench")
    cases = [("euclidean", math.pi), ("hyperbolic", 2 * math.pi * (math.cosh(1.0) - 1))]
    for name, v in cases:
        result = competitor_search(surface_preset(name), v, modes=modes, trials=trials, seed=seed)
        report.extend(search_report(result), prefix=name)
        report.add(f"resonance[{name}]", 1 in result.degenerate_modes, measured=result.degenerate_modes)

    for name, margin in (("euclidean", 0.0), ("hyperbolic", 0.0), ("cusp", 1.0)):
        st = stability_and_spectrum(surface_preset(name), 1.0)
        report.add(f"spectral_margin[{name}]", abs(st.spectral_margin - margin) < 1e-9, measured=st.spectral_margin, expected=margin)

    for r in np.linspace(0.05, math.log(2), 8):
        flux = singular_flux(float(r))
        report.add(f"flux[{r:.4f}]", flux.positive and flux.error < 1e-6, measured=flux.flux, expected=flux.closed_form)

    curve = FourierCurve(1.0, np.array([0.02, -0.01, 0.005]), np.array([0.01, 0.0, -0.003]))
    report.extend(check_gradients(surface_preset("hyperbolic"), curve), prefix="hyperbolic")

    if full:
        cap = build_cap()
        for v in np.linspace(cap.delta / 2, cap.alpha, 10):
            result = competitor_search(cap.surface, float(v), modes=8, trials=200, seed=seed, hessian=False)
            report.extend(search_report(result), prefix=f"cap[{v:.4g}]")
    return report


def property_suite(
    targets: Optional[Iterable[str]] = None,
    seed: int = 42,
    full: bool = False,
    corrupt: bool = False,
) -> VerificationReport:
    """
    Run the invariants of the selected modules.

    Args:
        targets: Module names (default: all)
        seed: Seed for every random draw
        full: Acceptance sizes (100 graphs, 200 trials, cap optimality)
        corrupt: Inject one corrupted weight into the first random graph

    Returns:
        Aggregated VerificationReport; failures are entries, not exceptions
    """
    selected = list(targets) if targets else list(TARGETS)
    unknown = [t for t in selected if t not in TARGETS]
    if unknown:
        raise BadParameters(f"Unknown targets: {unknown}", targets=unknown)

    report = VerificationReport(title="property_suite", seed=seed)
    graphs = 100 if full else 20
    for target in selected:
        rng = np.random.default_rng([seed, TARGETS.index(target)])
        logger.info(f"Property suite: {target}")
        if target == "level_graph":
            part = level_graph_suite(rng, graphs, corrupt=corrupt)
        elif target == "cusp_assembly":
            part = cusp_assembly_suite(rng, graphs)
        elif target == "calibration_engine":
            part = calibration_suite(rng, graphs)
        elif target == "revolution_lab":
            part = revolution_suite(rng)
        elif target == "conformal_forge":
            part = conformal_suite(rng)
        else:
            part = oracle_suite(seed, trials=200 if full else 8, modes=8 if full else 4, full=full)
        report.extend(part, prefix=target)
    logger.info(f"Property suite: {len(report.checks)} checks, {len(report.failures)} failures")
    return report
