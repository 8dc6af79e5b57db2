import math

import numpy as np
import pytest

from services.errors import BadParameters
from services.oracle_bench import (
    LengthFunctional,
    check_gradients,
    competitor_search,
    degenerate_modes,
    length_variation_curvature,
    search_report,
    singular_flux,
)
from services.revolution_lab import (
    FourierCurve,
    RadialMetric,
    build_cap,
    geodesic_curvature,
    surface_preset,
    uniform_theta,
)


class TestLengthFunctional:
    def test_projection_hits_area(self):
        fn = LengthFunctional(surface_preset("hyperbolic"), modes=2, n=256)
        c = np.array([0.05, 0.01, -0.02, 0.0])
        r0 = fn.project(c, 2.0)
        osc, _ = fn.oscillation(c)
        assert fn.area(r0, osc) == pytest.approx(2.0, abs=1e-12)

    def test_circle(self):
        fn = LengthFunctional(surface_preset("euclidean"), modes=1, n=64)
        r0 = fn.project(np.zeros(2), math.pi)
        assert r0 == pytest.approx(1.0, rel=1e-12)
        assert fn.length(r0, np.zeros(2)) == pytest.approx(2 * math.pi, rel=1e-12)

    def test_projection_outside_chart(self):
        fn = LengthFunctional(surface_preset("euclidean"), modes=1, n=64)
        assert fn.project(np.array([5.0, 0.0]), 1.0) is None

    def test_gradients(self):
        curve = FourierCurve(1.0, np.array([0.02, -0.01]), np.array([0.01, 0.005]))
        assert check_gradients(surface_preset("hyperbolic"), curve).passed


class TestCompetitorSearch:
    def test_euclidean(self):
        result = competitor_search(surface_preset("euclidean"), math.pi, modes=2, trials=3, max_iter=30, hessian=False)
        assert result.r_v == pytest.approx(1.0)
        assert result.disk_length == pytest.approx(2 * math.pi)
        assert len(result.running_min) == 3
        assert not result.beats_disk
        assert search_report(result).passed

    def test_seeded_results_ignore_threads(self):
        surface = surface_preset("hyperbolic")
        one = competitor_search(surface, 2.0, modes=2, trials=4, max_iter=20, seed=7, threads=1, hessian=False)
        two = competitor_search(surface, 2.0, modes=2, trials=4, max_iter=20, seed=7, threads=2, hessian=False)
        assert one.running_min == two.running_min
        assert one.best_length == two.best_length

    def test_bad_parameters(self):
        surface = surface_preset("euclidean")
        with pytest.raises(BadParameters):
            competitor_search(surface, 100.0, trials=1)
        with pytest.raises(BadParameters):
            competitor_search(surface, 1.0, modes=0)

    @pytest.mark.slow
    @pytest.mark.parametrize("fraction", [0.0, 0.5, 1.0])
    def test_cap_disk_is_not_beaten(self, fraction):
        cap = build_cap(1.5, 100.0, 10.0)
        v = cap.delta / 2 + fraction * (cap.alpha - cap.delta / 2)
        result = competitor_search(cap.surface, v, modes=8, trials=20, seed=42, hessian=False)
        assert not result.beats_disk
        assert result.bol_fiala_margin >= -1e-6
        assert search_report(result).passed

    @pytest.mark.slow
    def test_translation_mode_is_degenerate(self):
        result = competitor_search(surface_preset("euclidean"), math.pi, modes=3, trials=2, max_iter=20)
        assert 1 in result.degenerate_modes
        assert len(result.hessian_eigenvalues) == 6


def test_degenerate_modes():
    values, flagged = degenerate_modes(np.diag([0.0, 5.0, 0.0, 5.0]), modes=2)
    assert flagged == [1]
    assert sorted(values.tolist()) == [0.0, 0.0, 5.0, 5.0]


class TestSingularFlux:
    @pytest.mark.parametrize("r", [0.05, 0.5, math.log(2)])
    def test_closed_form(self, r):
        flux = singular_flux(r)
        assert flux.positive
        assert flux.flux == pytest.approx(flux.closed_form, rel=1e-10)
        assert flux.error < 1e-9 * flux.flux

    def test_line_integral_matches_enclosed_area(self):
        flux = singular_flux(0.5)
        assert flux.flux == pytest.approx(6.8245525308, rel=1e-9)
        assert flux.flux == pytest.approx(flux.enclosed_area, rel=1e-10)
        assert flux.enclosed_area == pytest.approx(2 * flux.hyperbolic_disk_area, rel=1e-10)

    def test_independent_of_level(self):
        assert singular_flux(0.5, u_p=3.0).flux == singular_flux(0.5).flux


class TestLengthVariation:
    def test_circle(self):
        kappa = length_variation_curvature(RadialMetric.preset("hyperbolic"), FourierCurve(1.0), n=64)
        assert kappa == pytest.approx(np.full(64, 1 / math.tanh(1.0)), rel=1e-6)

    def test_perturbed_curve(self):
        metric = RadialMetric.preset("spherical")
        curve = FourierCurve(1.0, np.array([0.01, 0.0, -0.004]), np.array([0.0, 0.006, 0.0]))
        exact = geodesic_curvature(metric, curve, theta=uniform_theta(128)).kappa
        oracle = length_variation_curvature(metric, curve, n=128)
        assert oracle == pytest.approx(exact, rel=1e-5)
