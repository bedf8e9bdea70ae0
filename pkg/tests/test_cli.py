from __future__ import annotations

import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from satcache import JointSolution
from satcache.cli import Point, main, parse_values, split_rows

TOY_ARGS = ["--sweep", "chr=0.1..0.9", "--schemes", "joint,ref1,ref2"]


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture(scope="module")
def toy_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("toy")
    assert main(TOY_ARGS + ["--out", str(out)]) == 0
    return out


def test_toy_chr_sweep_has_one_row_per_point_and_scheme(toy_run):
    rows = _rows(toy_run / "report.csv")
    assert len(rows) == 27
    assert list(rows[0]) == ["axis_value", "scheme", "tau_s", "hits", "chr", "wide_bits", "spot_bits",
                             "solver_status", "gap"]
    assert {r["scheme"] for r in rows} == {"joint", "ref1", "ref2"}
    by_point = {}
    for r in rows:
        by_point.setdefault(r["axis_value"], {})[r["scheme"]] = r
    assert len(by_point) == 9
    for value, group in by_point.items():
        joint = float(group["joint"]["tau_s"])
        for ref in ("ref1", "ref2"):
            if group[ref]["tau_s"]:
                assert joint <= float(group[ref]["tau_s"]) * (1 + 1e-9)
        assert float(group["joint"]["chr"]) >= float(value) - 1e-9


def test_toy_outputs_listed_in_summary(toy_run):
    summary = json.loads((toy_run / "summary.json").read_text())
    assert summary["rows"] == 27
    for name in summary["files"]:
        assert (toy_run / name).is_file()
    assert any(n.startswith("trace_chr_") for n in summary["files"])


def test_reruns_are_byte_identical(toy_run, tmp_path):
    assert main(TOY_ARGS + ["--out", str(tmp_path)]) == 0
    for name in json.loads((toy_run / "summary.json").read_text())["files"] + ["summary.json"]:
        assert (tmp_path / name).read_bytes() == (toy_run / name).read_bytes(), name


def test_missing_demand_exits_with_usage_error(tmp_path, capsys):
    code = main(["--demand", str(tmp_path / "nope.csv"), "--sweep", "chr=0.5", "--out", str(tmp_path)])
    assert code == 2
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["error"] == "UnreadableSource" and err["exit_code"] == 2
    assert not (tmp_path / "report.csv").exists()


def test_bad_axis_and_scheme(tmp_path, capsys):
    assert main(["--sweep", "speed=1,2", "--out", str(tmp_path)]) == 2
    assert main(["--sweep", "chr=0.5", "--schemes", "joint,ref9", "--out", str(tmp_path)]) == 2
    assert main(["--out", str(tmp_path)]) == 2


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "satcache", "--feeding-time", "20,40", "--schemes",
                           "ref1,ref2,ref3", "--out", str(tmp_path)], capture_output=True, text=True, check=False)
    assert proc.returncode == 0, proc.stderr
    rows = _rows(tmp_path / "report.csv")
    assert [(r["axis_value"], r["scheme"]) for r in rows] == [
        (t, s) for t in ("20", "40") for s in ("ref1", "ref2", "ref3")]
    assert all(r["tau_s"] == r["axis_value"] for r in rows)


def test_cache_sweep_and_compare_reuse(tmp_path):
    assert main(["--sweep", "cache", "1,4", "--schemes", "joint,ref3", "--compare-reuse", "--tau", "30",
                 "--node-limit", "200", "--out", str(tmp_path)]) == 0
    rows = _rows(tmp_path / "report.csv")
    assert len(rows) == 2 * 2 * 2
    assert {r["scheme"] for r in rows} == {"joint[multicarrier]", "joint[multispot]",
                                          "ref3[multicarrier]", "ref3[multispot]"}
    hits = {(r["axis_value"], r["scheme"]): float(r["hits"]) for r in rows}
    for v in ("1", "4"):
        # doubling the spot spectrum never loses hits for the exact scheme
        assert hits[(v, "joint[multispot]")] >= hits[(v, "joint[multicarrier]")]
        assert hits[(v, "joint[multispot]")] >= hits[(v, "ref3[multispot]")]


def test_ref3_not_applicable_on_chr_axis(tmp_path):
    assert main(["--sweep", "chr=0.5", "--schemes", "ref3", "--out", str(tmp_path)]) == 0
    (row,) = _rows(tmp_path / "report.csv")
    assert row["solver_status"] == "NotApplicable" and row["tau_s"] == ""


@pytest.mark.parametrize("text, expected", [
    ("0.1..0.3", [0.1, 0.2, 0.3]),
    ("20..60:20", [20, 40, 60]),
    ("5,10,30", [5, 10, 30]),
    ("7", [7]),
])
def test_parse_values(text, expected):
    assert parse_values(text) == pytest.approx(expected)


@pytest.mark.parametrize("text", ["", "3,2", "1..5:0", "1,1", "5..1"])
def test_parse_values_rejects(text):
    with pytest.raises(ValueError):
        parse_values(text)


def test_split_report():
    class Cat:
        sizes = np.array([1e9, 2e9])

    wide = JointSolution([1, 1], [[1, 1]], [[0, 0]], [1e8, 0.0], 10.0)
    empty = JointSolution([0, 0], [[0, 0]], [[0, 0]], [0.0, 1e8], 0.0)
    rows = split_rows([Point(1.0, "a", "ok", wide), Point(2.0, "b", "ok", empty), Point(3.0, "c", "x")],
                      Cat())
    assert rows[0] == ["1", "a", "3000000000", "0", "1"]
    assert rows[1] == ["2", "b", "0", "0", ""]
    assert len(rows) == 2
