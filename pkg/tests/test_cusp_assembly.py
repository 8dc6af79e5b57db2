import math
from fractions import Fraction

import numpy as np
import pytest

from services.cusp_assembly import (
    LOG2,
    Annulus,
    annulus_geometry,
    assemble_surface,
    band_area,
    cone_angle,
    model_w0,
    model_w0_radial_log_derivative,
    singular_model_eval,
    sublevel_area,
    surface_dump,
    surface_report,
)
from services.errors import BadParameters, OutOfChart
from services.level_graph import random_level_graph, validate_graph


class TestAnnulus:
    def test_geometry(self):
        geo = annulus_geometry(Annulus(tau=1, c=1, c_prime=2))
        assert geo.area == 1
        assert geo.boundary_lengths == [1, 2]
        assert geo.height == pytest.approx(math.log(2), rel=1e-15)

    def test_normalization_is_isometric(self):
        a = Annulus(tau=2, c=3, c_prime=6)
        assert a.normalized() == Annulus(tau=6, c=1, c_prime=2)
        geo, norm = annulus_geometry(a), annulus_geometry(a.normalized())
        assert (geo.area, geo.boundary_lengths) == (norm.area, norm.boundary_lengths) == (6, [6, 12])
        assert geo.height == pytest.approx(norm.height, rel=1e-14)

    def test_cusp(self):
        geo = annulus_geometry(Annulus(tau=1, c=0, c_prime=Fraction(1, 4)))
        assert geo.area == Fraction(1, 4)
        assert geo.boundary_lengths == [Fraction(1, 4)]
        assert math.isinf(geo.height)

    def test_anticusp(self):
        geo = annulus_geometry(Annulus(tau=1, c=2, c_prime=None))
        assert geo.area is None
        assert geo.boundary_lengths == [2]

    @pytest.mark.parametrize("tau, c, c_prime", [(1, 2, 2), (1, 3, 2), (0, 1, 2), (-1, 1, 2)])
    def test_bad_parameters(self, tau, c, c_prime):
        with pytest.raises(BadParameters):
            Annulus(tau=tau, c=c, c_prime=c_prime)


class TestAssembly:
    def test_two_cusps(self, two_cusps):
        s = assemble_surface(validate_graph(two_cusps))
        assert len(s.pieces) == 2
        assert not s.gluings
        assert all(p.weight == Fraction(1, 2) and p.annulus.is_cusp and p.annulus.is_anticusp for p in s.pieces)

    def test_triply_punctured(self, triply_punctured):
        s = assemble_surface(validate_graph(triply_punctured))
        (gl,) = s.gluings
        assert gl.kind == "split"
        assert gl.u == 256
        assert gl.single.length == 256
        assert [c.length for c in gl.pair] == [128, 128]
        assert s.singular_points[0].cone_angle == pytest.approx(4 * math.pi)

    def test_piece_areas(self, triply_punctured):
        s = assemble_surface(validate_graph(triply_punctured))
        assert s.piece("below").area == 256
        assert s.piece("left").area is None
        assert s.total_area is None

    def test_random_graphs_glue_exactly(self, rng):
        for _ in range(20):
            s = assemble_surface(validate_graph(random_level_graph(rng, max_vertices=12)))
            assert surface_report(s, rng=rng, samples=20).passed

    def test_dump(self, disconnected_levels):
        dump = surface_dump(assemble_surface(validate_graph(disconnected_levels)))
        assert dump["vertices"]["b"]["log16_u"] == 2
        assert dump["vertices"]["b"]["u"] == 256.0
        assert dump["edges"]["x1"]["log16_c"] is None
        assert dump["edges"]["w"]["area"] == "inf"
        assert dump["edges"]["y"]["area"] == float(Fraction(1, 2) * (16**6 - 1))


class TestSublevelArea:
    def test_linear(self, triply_punctured):
        s = assemble_surface(validate_graph(triply_punctured))
        assert sublevel_area(s, 256) == 256
        assert sublevel_area(s, Fraction(1, 3)) == Fraction(1, 3)
        assert sublevel_area(s, 1000) == 1000

    def test_small_levels(self, triply_punctured):
        s = assemble_surface(validate_graph(triply_punctured))
        assert sublevel_area(s, 0) == 0
        assert sublevel_area(s, 1e-9) == pytest.approx(1e-9, rel=1e-12)

    def test_band_across_critical_value(self, triply_punctured):
        s = assemble_surface(validate_graph(triply_punctured))
        assert band_area(s, 100, 300) == 200

    def test_float_path(self, disconnected_levels):
        s = assemble_surface(validate_graph(disconnected_levels))
        for t in (0.37, 255.5, 4097.25, 1e7):
            assert abs(sublevel_area(s, t) - t) <= 1e-12 * t


class TestSingularModel:
    def test_center(self):
        assert singular_model_eval(3.0, 0).w0 == 3.0

    def test_curvature(self):
        ev = singular_model_eval(1.0, 0.3 + 0.2j)
        assert ev.curvature == pytest.approx(-1.0, abs=1e-3)

    def test_gradient_ratio(self):
        for theta in np.linspace(0, 2 * np.pi, 64, endpoint=False):
            ev = singular_model_eval(2.0, 0.4 * np.exp(1j * theta))
            assert ev.grad_ratio == pytest.approx(1.0, abs=1e-4)

    def test_out_of_chart(self):
        with pytest.raises(OutOfChart):
            singular_model_eval(1.0, 0.9)
        with pytest.raises(OutOfChart):
            singular_model_eval(1.0, 0.1, r=1.0)

    def test_chart_radius(self):
        assert singular_model_eval(1.0, 0.1).chart_radius == pytest.approx(math.sqrt(math.tanh(LOG2)))

    def test_cone_angle(self):
        assert cone_angle(0.05) == pytest.approx(4 * math.pi, abs=1e-6)

    @pytest.mark.parametrize("z", [0.3 + 0.2j, 0.5j, -0.6 + 0.1j])
    def test_radial_log_derivative(self, z):
        h = 1e-6
        rho, theta = abs(z), np.angle(z)
        up = math.log(model_w0(2.0, (rho + h) * np.exp(1j * theta)))
        down = math.log(model_w0(2.0, (rho - h) * np.exp(1j * theta)))
        assert model_w0_radial_log_derivative(z) == pytest.approx(rho * (up - down) / (2 * h), rel=1e-7)
