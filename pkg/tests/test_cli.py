import hashlib
import json
from pathlib import Path

import pytest

from ftls_lab import ResultTable, ValidationError, parse_spec, run
from ftls_lab.cli import main

SPEC_DIR = Path(__file__).resolve().parent.parent / "specs"


def write_spec(tmp_path, name="spec.json", **overrides):
    base = {
        "name": "unit",
        "kind": "profile",
        "params": {"ell": "0.05", "h": "0.5", "V_minus": "2", "V_plus": "1"},
        "fbar": "0.1875",
        "subcase": "1B",
        "anchors": ["0.5"],
        "grid": {"dz": "0.002", "X_min": "-5", "X_max": "5"},
    }
    base.update(overrides)
    path = tmp_path / name
    path.write_text(json.dumps(base))
    return path


class TestResultTable:
    def test_row_keys_checked(self):
        table = ResultTable(columns=("a", "b"))
        with pytest.raises(ValidationError):
            table.add_row(a=1.0, c=2.0)

    def test_csv_is_deterministic(self):
        table = ResultTable(columns=("x", "y"))
        table.add_row(x=0.1, y=2)
        table.add_row(x=0.30000000000000004, y=-1)
        assert table.to_csv() == "x,y\n0.1,2\n0.30000000000000004,-1\n"
        assert table.column("y") == [2, -1]


class TestParseSpec:
    def test_checked_in_paper_spec(self):
        spec = parse_spec(SPEC_DIR / "paper-1B.json")
        assert spec.params.ell == 0.05
        assert spec.params.kernel.h == 0.5
        assert spec.params.road.V_minus == 2.0
        assert spec.params.road.V_plus == 1.0
        assert spec.fbar == 0.1875
        assert spec.dz == 0.0002
        assert spec.subcase == "1B"
        assert len(spec.digest) == 64

    def test_decimal_strings_accepted(self, tmp_path):
        spec = parse_spec(write_spec(tmp_path))
        assert spec.anchors == (0.5,)
        assert spec.X_min == -5.0

    def test_missing_key_reported_by_name(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({
            "name": "bad", "kind": "profile",
            "params": {"h": "0.5", "V_minus": "2", "V_plus": "1"},
        }))
        with pytest.raises(ValidationError) as exc:
            parse_spec(path)
        assert len(exc.value.problems) == 1
        assert "ell" in exc.value.problems[0]

    def test_flux_level_bound_named(self, tmp_path):
        # slow-side capacity is V+ * f(rho_hat) = 0.25
        path = write_spec(tmp_path, fbar="0.3")
        with pytest.raises(ValidationError) as exc:
            parse_spec(path)
        assert "0.25" in str(exc.value)

    def test_malformed_json_reports_position(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text('{"name": "x",,}')
        with pytest.raises(ValidationError) as exc:
            parse_spec(path)
        assert "line" in str(exc.value)

    def test_unknown_figure_target(self, tmp_path):
        path = write_spec(tmp_path, kind="reproduce-figure",
                          figure="fig-nonexistent")
        with pytest.raises(ValidationError) as exc:
            parse_spec(path)
        assert "fig-crashes" in str(exc.value)

    def test_all_problems_reported_at_once(self, tmp_path):
        path = tmp_path / "multi.json"
        path.write_text(json.dumps({
            "name": "", "kind": "wrong-kind",
            "params": {"ell": "0.05", "h": "0.5", "V_minus": "2",
                       "V_plus": "1"},
        }))
        with pytest.raises(ValidationError) as exc:
            parse_spec(path)
        assert len(exc.value.problems) >= 2


class TestRun:
    def test_classify_artifact_and_digest(self, tmp_path):
        path = write_spec(tmp_path, kind="classify")
        spec = parse_spec(path)
        manifest = run(spec, out_dir=tmp_path / "out")
        assert manifest["verdict"] == "infinitely-many-profiles"
        assert manifest["spec_digest"] == hashlib.sha256(path.read_bytes()).hexdigest()
        verdict = json.loads((tmp_path / "out" / "verdict.json").read_text())
        assert verdict["subcase"] == "1B"
        assert (tmp_path / "out" / "manifest.json").exists()

    def test_profile_run_is_byte_reproducible(self, tmp_path):
        spec = parse_spec(write_spec(tmp_path))
        run(spec, out_dir=tmp_path / "a")
        run(spec, out_dir=tmp_path / "b")
        assert (tmp_path / "a" / "profile-0.csv").read_bytes() == \
            (tmp_path / "b" / "profile-0.csv").read_bytes()
        meta = json.loads((tmp_path / "a" / "profile-0.json").read_text())
        assert meta["anchor"] == 0.5


class TestCliExitCodes:
    def test_classify_ok(self, capsys):
        code = main(["classify", "--fbar", "0.1875", "--subcase", "1B"])
        assert code == 0
        out = json.loads(capsys.readouterr().out)
        assert out["verdict"] == "infinitely-many-profiles"

    def test_classify_no_profile(self, capsys):
        code = main(["classify", "--fbar", "0.1875", "--subcase", "1D"])
        assert code == 3
        out = json.loads(capsys.readouterr().out)
        assert out["verdict"] == "no-profile"

    def test_classify_missing_arguments(self, capsys):
        assert main(["classify"]) == 2

    def test_kind_mismatch(self, tmp_path, capsys):
        path = write_spec(tmp_path, kind="classify")
        assert main(["simulate", "--spec", str(path)]) == 2

    def test_profile_spec_runs(self, tmp_path, capsys):
        path = write_spec(tmp_path)
        code = main(["profile", "--spec", str(path),
                     "--out", str(tmp_path / "out")])
        assert code == 0
        assert (tmp_path / "out" / "profile-0.csv").exists()

    def test_numerical_failure_exit_code(self, tmp_path, capsys):
        # a 2B profile anchored at the right asymptote blows up mid-march
        path = write_spec(
            tmp_path,
            params={"ell": "0.05", "h": "0.5", "V_minus": "1", "V_plus": "2"},
            subcase="2B", anchors=["0.8952847075210475"])
        code = main(["profile", "--spec", str(path),
                     "--out", str(tmp_path / "out")])
        assert code == 4

    def test_reproduce_runs_scaled_down(self, tmp_path, capsys):
        code = main(["reproduce", "fig-crashes",
                     "--out", str(tmp_path / "cr"),
                     "--n-left", "60", "--n-right", "60"])
        assert code == 0
        assert (tmp_path / "cr" / "crashes-a.csv").exists()
        manifest = json.loads((tmp_path / "cr" / "manifest.json").read_text())
        assert manifest["max_density_a"] > 1.0
