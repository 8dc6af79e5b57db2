import json

import pandas as pd
import pytest

from scripts.isoprofile import main
from tests.conftest import DATA_DIR


def run(tmp_path, *argv):
    return main([*argv, "--out", str(tmp_path)])


def error_payload(capsys) -> dict:
    # log lines share stderr with the payload
    lines = capsys.readouterr().err.splitlines()
    start = next(i for i, line in enumerate(lines) if line.startswith("{"))
    return json.loads("\n".join(lines[start:]))


def test_graph_validate(tmp_path):
    assert run(tmp_path, "graph", "validate", "--in", str(DATA_DIR / "disconnected_levels.json")) == 0
    body = json.loads((tmp_path / "graph_validate.json").read_text())
    assert body["passed"] is True
    assert body["seed"] == 42
    assert (tmp_path / "graph_validate.meta.json").exists()


def test_reports_are_byte_identical(tmp_path):
    graph = str(DATA_DIR / "triply_punctured.json")
    run(tmp_path / "a", "surface", "assemble", "--in", graph, "--seed", "5")
    run(tmp_path / "b", "surface", "assemble", "--in", graph, "--seed", "5")
    assert (tmp_path / "a" / "surface_assemble.json").read_bytes() == (tmp_path / "b" / "surface_assemble.json").read_bytes()


def test_coverage_gap_exits_one(tmp_path):
    assert run(tmp_path, "surface", "coverage", "--in", str(DATA_DIR / "triply_punctured.json")) == 1
    body = json.loads((tmp_path / "surface_coverage.json").read_text())
    assert body["result"]["sections"]["gaps"] == [["128", "512"]]


def test_cap_csv(tmp_path):
    assert run(tmp_path, "rev", "cap") == 0
    frame = pd.read_csv(tmp_path / "rev_cap.csv")
    assert list(frame.columns) == ["v", "I", "K"]
    row = frame.loc[(frame["v"] - 5.0).abs().idxmin()]
    assert row["I"] == pytest.approx(5.0, rel=1e-12)
    assert frame["K"].iloc[0] == pytest.approx(100.0)


def test_cap_violation_exits_two(tmp_path, capsys):
    assert run(tmp_path, "rev", "cap", "--delta", "0.1", "--k", "1") == 2
    err = error_payload(capsys)
    assert err["error"] == "ConstraintViolation"
    assert err["context"]["prop"] == "lower bound"


def test_bad_json_reports_location(tmp_path, capsys):
    broken = tmp_path / "broken.json"
    broken.write_text('{"edges": [\n  {"src": "-inf",, }\n]}')
    assert run(tmp_path, "graph", "validate", "--in", str(broken)) == 2
    err = error_payload(capsys)
    assert err["error"] == "GraphFormatError"
    assert err["context"]["location"].startswith("line 2")


def test_missing_input(tmp_path):
    assert run(tmp_path, "graph", "weights") == 2


def test_invalid_config(tmp_path, capsys):
    assert run(tmp_path, "oracle", "search", "--trials", "0") == 2
    assert error_payload(capsys)["error"] == "ConfigurationError"


def test_corrupted_verify_exits_one(tmp_path):
    assert run(tmp_path, "verify", "--targets", "level_graph", "--corrupt") == 1
    body = json.loads((tmp_path / "verify.json").read_text())
    assert body["result"]["sections"]["level_graph"]["suspect_edges"]


def test_vanishing_targets(tmp_path):
    assert run(tmp_path, "conformal", "vanishing", "--targets", "10:0.01", "1:0.5") == 0
    body = json.loads((tmp_path / "conformal_vanishing.json").read_text())
    assert len(body["result"]["bands"]) == 2
    assert run(tmp_path, "conformal", "vanishing", "--targets", "10") == 2
