import math
from fractions import Fraction

import numpy as np
import pytest

from services.calibration_engine import (
    CalibratedFamily,
    calibration_lower_bound,
    cusp_profile,
    merge_intervals,
    parse_total,
    pipe_clearing_coverage,
    pipe_clearing_margin,
    rearrangement_bound,
    uncovered,
    yau_ball_bound,
)
from services.cusp_assembly import assemble_surface
from services.errors import BadParameters, NoSpareComponent, NotSublevel
from services.level_graph import random_level_graph, validate_graph
from services.revolution_lab import surface_preset


class TestCalibrationBounds:
    def test_cusp(self):
        bound = cusp_profile(2, 5)
        assert bound.value == 5
        assert bound.equality

    def test_yau_ball(self):
        assert yau_ball_bound(2, 1.0, 2.0).value == 2.0

    def test_zero_constant(self):
        assert calibration_lower_bound(0, 7.0).value == 0

    def test_linear_and_monotone(self):
        values = [calibration_lower_bound(c, v).value for c in (0.5, 1.0) for v in (1.0, 2.0)]
        assert values == [0.5, 1.0, 1.0, 2.0]

    def test_equality_with_family(self):
        family = CalibratedFamily(kind="sublevel", lo=Fraction(0), hi=Fraction(10), slope=Fraction(1), intercept=Fraction(0))
        assert calibration_lower_bound(1, 5, family).equality
        assert not calibration_lower_bound(1, 11, family).equality

    def test_negative_inputs(self):
        with pytest.raises(BadParameters):
            calibration_lower_bound(-1, 1)


class TestRearrangement:
    def test_cusp_density_is_calibrated(self):
        result = rearrangement_bound(surface_preset("cusp"), 0.0)
        assert result.integral == pytest.approx(result.area, rel=1e-10)
        assert result.equality

    def test_cosh_flux(self):
        result = rearrangement_bound(surface_preset("cosh"), 1.0)
        assert result.integral == pytest.approx(2 * math.pi * (math.cosh(1.0) - 1), abs=1e-8)
        assert result.flux == pytest.approx(result.integral, abs=1e-8)
        assert not result.equality

    def test_constant_density_gives_area(self):
        result = rearrangement_bound(surface_preset("cosh"), 1.0, density=np.ones_like)
        assert result.integral == pytest.approx(2 * math.pi * math.sinh(1.0), rel=1e-10)

    def test_not_sublevel(self):
        surface = surface_preset("cosh")
        with pytest.raises(NotSublevel):
            rearrangement_bound(surface, 10.0)
        with pytest.raises(NotSublevel):
            rearrangement_bound(surface, 1.0, density=lambda r: -np.asarray(r))


class TestIntervals:
    def test_merge(self):
        f = Fraction
        assert merge_intervals([(f(2), f(3)), (f(0), f(1)), (f(1), f(2))]) == [(0, 3)]
        assert merge_intervals([(f(0), f(1)), (f(5), None), (f(6), f(7))]) == [(0, 1), (5, None)]

    def test_uncovered(self):
        f = Fraction
        assert uncovered([(f(0), f(1)), (f(2), f(3))], f(0), f(4)) == [(1, 2), (3, 4)]
        assert uncovered([(f(0), None)], f(0), f(100)) == []


class TestPipeClearing:
    def test_tight_margin(self):
        margin = pipe_clearing_margin(Fraction(1, 2), 1, 0, 16)
        assert margin["chain_bound"] == 0

    def test_triply_punctured_gap(self, triply_punctured):
        s = assemble_surface(validate_graph(triply_punctured))
        report = pipe_clearing_coverage(s)
        assert not report.passed
        assert report.sections["gaps"] == [[128, 512]]

    def test_strict(self, triply_punctured):
        s = assemble_surface(validate_graph(triply_punctured))
        with pytest.raises(NoSpareComponent):
            pipe_clearing_coverage(s, strict=True)

    def test_disconnected_levels(self, disconnected_levels):
        s = assemble_surface(validate_graph(disconnected_levels))
        report = pipe_clearing_coverage(s)
        assert report.passed
        assert report.sections["total"] == 4 * 16**6
        families = report.sections["coverage"]["16^2"]["families"]
        assert [f.edge_id for f in families] == ["y", "y"]

    def test_deterministic(self, disconnected_levels):
        s = assemble_surface(validate_graph(disconnected_levels))
        assert pipe_clearing_coverage(s).to_dict() == pipe_clearing_coverage(s).to_dict()

    def test_random_disconnected_graphs(self, rng):
        for _ in range(20):
            g = validate_graph(random_level_graph(rng, max_vertices=12, require_disconnected=True))
            assert g.levels_all_disconnected
            report = pipe_clearing_coverage(assemble_surface(g), total=Fraction(16) ** 200)
            assert report.passed, report.sections["gaps"]


class TestParseTotal:
    def test_values(self):
        assert parse_total("3/2") == Fraction(3, 2)
        assert parse_total("1024") == 1024
        assert parse_total(None) is None

    @pytest.mark.parametrize("text", ["abc", "1/0"])
    def test_invalid(self, text):
        with pytest.raises(BadParameters):
            parse_total(text)
