import io
import json
import subprocess
import sys

import pytest

from conftest import DATASETS, FIXTURES, JOURNEYS, ROOT
from metrocover.cli import run
from metrocover.ingest import network_from_text


def call(*argv):
    out, err = io.StringIO(), io.StringIO()
    code = run([str(a) for a in argv], out, err)
    return code, out.getvalue(), err.getvalue()


TRIANGLE = FIXTURES / "triangle.txt"
STAR = FIXTURES / "star.txt"
METRO = DATASETS / "paris-metro.txt"


class TestSolve:
    def test_triangle_table(self):
        code, out, _ = call("solve", "--network", TRIANGLE, "--backend", "oracle")
        assert code == 0
        assert "# status optimal  steps 3" in out
        assert out.splitlines()[2].split() == ["Step", "Departure", "Arrival", "Line"]

    def test_paris_metro_26(self):
        code, out, _ = call("solve", "--network", METRO, "--backend", "oracle", "--format", "json")
        doc = json.loads(out)
        assert code == 0 and doc["objective"] == 26 and len(doc["steps"]) == 26
        assert len({s["line"] for s in doc["steps"]}) == 16

    def test_infeasible_path_exits_1(self):
        code, out, err = call("solve", "--network", STAR, "--variant", "path", "--backend", "oracle")
        assert code == 1 and "infeasible" in out and "infeasible" in err

    def test_infeasible_json_still_reports(self):
        code, out, _ = call("solve", "--network", STAR, "--variant", "path", "--backend", "oracle",
                            "--format", "json")
        assert code == 1 and json.loads(out)["status"] == "infeasible"

    def test_required_subset(self):
        code, out, _ = call("solve", "--network", STAR, "--require-lines", "L1,L2", "--backend", "oracle",
                            "--format", "json")
        assert code == 0 and json.loads(out)["objective"] == 2

    def test_unknown_required_line_is_usage_error(self):
        code, _, err = call("solve", "--network", STAR, "--require-lines", "L9", "--backend", "oracle")
        assert code == 2 and "L9" in err

    def test_unknown_anchor_is_usage_error(self):
        code, _, err = call("solve", "--network", STAR, "--variant", "cycle", "--anchor", "Nowhere",
                            "--backend", "oracle")
        assert code == 2

    def test_output_is_deterministic(self):
        a = call("solve", "--network", FIXTURES / "prune.txt", "--backend", "oracle")
        b = call("solve", "--network", FIXTURES / "prune.txt", "--backend", "oracle")
        assert a == b

    def test_geojson_needs_coordinates(self):
        code, _, err = call("solve", "--network", TRIANGLE, "--backend", "oracle", "--format", "geojson")
        assert code == 2 and "coordinates" in err

    def test_geojson_with_coordinates(self, tmp_path):
        net = tmp_path / "geo.txt"
        net.write_text("station A 48.0 2.0\nstation B 48.1 2.1\nstation C 48.2 2.2\n"
                       "line L1\nline L2\nsegment L1 A B\nsegment L2 B C\n")
        code, out, _ = call("solve", "--network", net, "--backend", "oracle", "--format", "geojson")
        assert code == 0
        assert len(json.loads(out)["features"]) == 4

    def test_prune_flag_keeps_the_answer(self):
        a = call("solve", "--network", FIXTURES / "prune.txt", "--backend", "oracle", "--format", "json")
        b = call("solve", "--network", FIXTURES / "prune.txt", "--backend", "oracle", "--format", "json",
                 "--prune")
        assert json.loads(a[1])["objective"] == json.loads(b[1])["objective"] == 2

    @pytest.mark.solver
    def test_milp_backend(self, milp):
        code, out, _ = call("solve", "--network", STAR, "--variant", "cycle", "--no-line-reuse",
                            "--solver", milp.template, "--format", "json")
        doc = json.loads(out)
        assert code == 0 and doc["objective"] == 6 and doc["backend"] == "milp"

    def test_solver_failure_exits_3(self, tmp_path):
        code, _, err = call("solve", "--network", TRIANGLE, "--backend", "milp",
                            "--solver", "/nonexistent/solver {model} {solution}")
        assert code == 3 and "solver failure" in err

    def test_config_file(self, tmp_path):
        ini = tmp_path / "solver.ini"
        ini.write_text("[solver]\ntemplate = /nonexistent/x {model} {solution}\ntime_limit = 5\n")
        code, _, err = call("solve", "--network", TRIANGLE, "--backend", "milp", "--config", ini)
        assert code == 3 and "/nonexistent/x" in err

    def test_config_without_section(self, tmp_path):
        ini = tmp_path / "solver.ini"
        ini.write_text("[other]\n")
        assert call("solve", "--network", TRIANGLE, "--backend", "milp", "--config", ini)[0] == 2


class TestInputErrors:
    def test_missing_file(self, tmp_path):
        code, _, err = call("info", "--network", tmp_path / "nope.txt")
        assert code == 2 and "error" in err

    def test_bad_network_names_the_line(self, tmp_path):
        bad = tmp_path / "bad.txt"
        bad.write_text("station A\nline L\nsegment L A Q\n")
        code, _, err = call("info", "--network", bad)
        assert code == 2 and "Q" in err and "line 3" in err

    def test_unknown_command(self):
        assert call("fly")[0] == 2

    def test_help_is_success(self, capsys):
        assert call("--help")[0] == 0


class TestOtherCommands:
    def test_info(self):
        code, out, _ = call("info", "--network", METRO)
        assert code == 0 and "lines: 16" in out and "3bis" in out

    def test_prune_lists_removed_stations(self):
        code, out, _ = call("prune", "--network", FIXTURES / "prune.txt")
        assert code == 0
        assert out.splitlines()[-1] == "# removed 3 station(s): T1, T2, Z"
        net = network_from_text(out)
        assert net.stations == {"X", "Y"}

    def test_validate_ok(self):
        code, out, _ = call("validate", "--network", METRO, "--journey", JOURNEYS / "paris-metro-26.tsv")
        assert code == 0 and out == "valid: 26 steps, 16 lines covered\n"

    def test_validate_failure_lists_problems(self):
        code, out, _ = call("validate", "--network", METRO, "--journey", JOURNEYS / "paris-metro-26.tsv",
                            "--variant", "cycle")
        assert code == 1 and out.startswith("invalid: 1 problem(s)") and "not closed" in out

    def test_validate_unreadable_journey(self, tmp_path):
        j = tmp_path / "j.tsv"
        j.write_text("A\tB\n")
        assert call("validate", "--network", METRO, "--journey", j)[0] == 2

    def test_export_tsv_round_trip(self):
        path = JOURNEYS / "paris-metro-26.tsv"
        code, out, _ = call("export", "--network", METRO, "--journey", path, "--format", "tsv")
        assert code == 0 and out == path.read_text(encoding="utf-8")

    def test_export_geojson_without_coordinates(self):
        # the bundled datasets carry no coordinates
        code, _, err = call("export", "--network", METRO, "--journey", JOURNEYS / "paris-metro-26.tsv")
        assert code == 2 and "Cambronne" in err

    def test_export_geojson(self, tmp_path):
        net = tmp_path / "geo.txt"
        net.write_text("station A 48.0 2.0\nstation B 48.1 2.1\nline L1\nsegment L1 A B\n")
        journey = tmp_path / "j.tsv"
        journey.write_text("step\tdeparture\tarrival\tline\n1\tB\tA\tL1\n")
        code, out, _ = call("export", "--network", net, "--journey", journey)
        doc = json.loads(out)
        assert code == 0 and doc["features"][0]["geometry"]["coordinates"] == [[2.1, 48.1], [2.0, 48.0]]


class TestEnumerate:
    def test_triangle(self):
        code, out, _ = call("enumerate", "--network", TRIANGLE, "--backend", "oracle")
        assert code == 0
        assert out.count("# solution ") == 2
        assert out.splitlines()[-1] == "# 2 optimal solution(s) with 3 steps"

    def test_truncation_is_flagged(self):
        code, out, _ = call("enumerate", "--network", FIXTURES / "prune.txt", "--backend", "oracle",
                            "--max-solutions", "4")
        assert code == 0 and out.count("# solution ") == 4
        assert "TRUNCATED" in out.splitlines()[-1]

    def test_infeasible(self):
        code, out, _ = call("enumerate", "--network", STAR, "--variant", "path", "--backend", "oracle")
        assert code == 1 and out.strip() == "# 0 optimal solution(s)"

    def test_json_lines(self):
        code, out, _ = call("enumerate", "--network", STAR, "--backend", "oracle", "--format", "json")
        docs = [json.loads(ln) for ln in out.splitlines() if ln.startswith("{")]
        assert code == 0 and [d["index"] for d in docs] == [1, 2, 3, 4, 5, 6]

    @pytest.mark.solver
    def test_milp_enumeration_streams(self, milp):
        code, out, _ = call("enumerate", "--network", STAR, "--solver", milp.template, "--backend", "milp")
        assert code == 0 and out.count("# solution ") == 6


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "metrocover", "info", "--network", str(TRIANGLE)],
                          capture_output=True, text=True, cwd=ROOT, timeout=60)
    assert proc.returncode == 0 and "lines: 3" in proc.stdout
