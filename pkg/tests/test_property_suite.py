import pytest

from services.errors import BadParameters
from services.property_suite import TARGETS, load_manual, property_suite
from services.reporting import dumps


def check_names(report) -> set[str]:
    return {c.name for c in report.checks}


def test_level_graph_target():
    report = property_suite(["level_graph"], seed=42)
    assert report.passed
    assert check_names(report) == {
        "level_graph.weight_conservation",
        "level_graph.weight_bounds",
        "level_graph.relabeling_invariance",
    }


def test_corruption_is_caught():
    report = property_suite(["level_graph"], seed=42, corrupt=True)
    assert not report.passed
    assert "level_graph.weight_conservation" in {c.name for c in report.failures}
    assert "level_graph.relabeling_invariance" not in {c.name for c in report.failures}
    assert report.sections["level_graph"]["suspect_edges"]


def test_surface_and_calibration_invariants():
    report = property_suite(["cusp_assembly", "calibration_engine"], seed=7)
    assert report.passed, [c.name for c in report.failures]
    assert {
        "cusp_assembly.cone_angle",
        "calibration_engine.coverage_idempotent",
        "calibration_engine.lower_bound_monotone_in_c",
    } <= check_names(report)


def test_same_seed_same_report():
    targets = ["level_graph", "cusp_assembly", "calibration_engine"]
    assert dumps(property_suite(targets, seed=3)) == dumps(property_suite(targets, seed=3))


def test_unknown_target():
    with pytest.raises(BadParameters) as exc:
        property_suite(["level_graph", "nope"])
    assert exc.value.context["targets"] == ["nope"]


def test_manual_inputs_load():
    assert load_manual("triply_punctured")["vertices"]


@pytest.mark.slow
def test_conformal_target_passes():
    report = property_suite(["conformal_forge"], seed=42)
    assert report.passed, [c.name for c in report.failures]
    assert "conformal_forge.linear_profile" in check_names(report)


@pytest.mark.slow
def test_revolution_target_checks_bol_fiala_tightness():
    report = property_suite(["revolution_lab"], seed=42)
    assert report.passed, [c.name for c in report.failures]
    assert {f"revolution_lab.bol_fiala_tight[{k}]" for k in ("0.5", "1", "4")} <= check_names(report)


@pytest.mark.slow
def test_quick_suite_passes():
    report = property_suite(seed=42)
    assert report.passed, [c.name for c in report.failures]
    assert {c.name.split(".")[0] for c in report.checks} == set(TARGETS)
