import csv
import json
import time

import jsonschema
import numpy as np
import pytest

from csmt.cli import main
from csmt.dataio import load_csv, load_dataset, write_dataset_csv
from csmt.distributions import RandomSource
from csmt.errors import ConfigError, InsufficientDataError, MissingColumnError, ParseError
from csmt.simulate import SimulationParams, generate_dataset
from csmt.workflows import (
    analysis_csv,
    analysis_jsonl,
    analysis_table,
    load_schema,
    run_analysis,
    run_simulation,
    simulation_config,
)

MEDIATORS = ["acetic", "propionic", "isobutyric", "butyric", "methylbutyric", "valeric", "hexanoic"]
OUTCOMES = ["il6", "crp"]


@pytest.fixture
def trial_csv(tmp_path):
    """82-row two-arm table with 7 mediators, 2 outcomes and one covariate."""
    rng = np.random.default_rng(0)
    n = 82
    arm = np.r_[np.ones(42), np.zeros(40)]
    age = rng.normal(60, 8, n)
    med = {m: 0.3 * arm + rng.normal(size=n) for m in MEDIATORS}
    out = {o: 0.4 * med["butyric"] + 0.01 * age + rng.normal(size=n) for o in OUTCOMES}
    path = tmp_path / "trial.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "metformin", *MEDIATORS, *OUTCOMES, "age"])
        for i in range(n):
            w.writerow([f"p{i}", arm[i], *(med[m][i] for m in MEDIATORS), *(out[o][i] for o in OUTCOMES), age[i]])
    return path


def write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


class TestLoadCsv:
    def test_pair_cross(self, trial_csv):
        pairs = load_csv(trial_csv, "metformin", MEDIATORS, OUTCOMES, ["age"], id_column="id")
        assert len(pairs) == 14
        assert [(p.outcome, p.mediator) for p in pairs[:2]] == [("il6", "acetic"), ("il6", "propionic")]
        assert all(p.dataset.n == 82 and p.n_dropped == 0 for p in pairs)
        assert pairs[0].dataset.covariate_names == ("age",)
        assert pairs[0].dataset.row_ids[0] == "p0"

    def test_parse_error_coordinates(self, tmp_path):
        rows = [[i % 2, i * 0.5, i * 1.5] for i in range(1, 9)]
        rows[4][1] = "abc"
        path = tmp_path / "bad.csv"
        write_rows(path, ["S", "G", "Y"], rows)
        with pytest.raises(ParseError) as info:
            load_dataset(path, "S", "G", "Y")
        assert (info.value.row, info.value.column) == (5, "G")

    def test_missing_column(self, trial_csv):
        with pytest.raises(MissingColumnError, match="nope"):
            load_csv(trial_csv, "metformin", ["nope"], OUTCOMES)

    def test_roles_distinct(self, trial_csv):
        with pytest.raises(ConfigError):
            load_csv(trial_csv, "metformin", ["il6"], OUTCOMES)

    def test_listwise_deletion_per_pair(self, tmp_path):
        rng = np.random.default_rng(1)
        rows = [[i % 2, *rng.normal(size=4)] for i in range(30)]
        rows[3][1] = ""  # G1 missing
        rows[7][3] = ""  # Y missing
        path = tmp_path / "miss.csv"
        write_rows(path, ["S", "G1", "G2", "Y", "X"], rows)
        pairs = load_csv(path, "S", ["G1", "G2"], ["Y"], ["X"])
        assert [(p.dataset.n, p.n_dropped) for p in pairs] == [(28, 2), (29, 1)]

    def test_unused_columns_not_parsed(self, tmp_path):
        write_rows(tmp_path / "t.csv", ["S", "G", "Y", "note"], [[i % 2, i, i * i % 7, "text"] for i in range(10)])
        assert load_dataset(tmp_path / "t.csv", "S", "G", "Y").n == 10

    def test_too_few_rows(self, tmp_path):
        write_rows(tmp_path / "t.csv", ["S", "G", "Y"], [[0, 1, 2], [1, 2, 1], [0, 3, ""]])
        with pytest.raises(InsufficientDataError):
            load_dataset(tmp_path / "t.csv", "S", "G", "Y")

    def test_round_trip(self, tmp_path):
        ds = generate_dataset(SimulationParams(0.3, 0.2, 40), RandomSource(4))
        write_dataset_csv(ds, tmp_path / "ds.csv")
        back = load_dataset(tmp_path / "ds.csv", "S", "G", "Y", ["X1", "X2"])
        for col in ("s", "g", "y", "x"):
            np.testing.assert_array_equal(getattr(back, col), getattr(ds, col))


class TestRunAnalysis:
    def config(self, path, **kw):
        doc = {
            "input": str(path),
            "exposure": "metformin",
            "mediators": MEDIATORS,
            "outcomes": OUTCOMES,
            "covariates": ["age"],
            "m": 50,
            "seed": 7,
        }
        doc.update(kw)
        return doc

    def test_shape_and_auto_k(self, trial_csv):
        rows = run_analysis(self.config(trial_csv))
        assert len(rows) == 14
        assert all(set(r["results"]) == {"csmt", "maxp", "sobel"} for r in rows)
        assert all(r["k"] == 4 and r["n"] == 82 and r["error"] is None for r in rows)
        schema = load_schema("analysis_row")
        for r in rows:
            jsonschema.validate(json.loads(json.dumps(r)), schema)
        text = analysis_csv(rows, ["csmt", "maxp", "sobel"])
        lines = text.strip().split("\n")
        assert len(lines) == 15 and "csmt_p" in lines[0]
        table = analysis_table(rows, ["csmt", "maxp", "sobel"])
        assert "Outcome" in table and "butyric" in table

    def test_deterministic_output(self, trial_csv):
        a = analysis_jsonl(run_analysis(self.config(trial_csv)))
        b = analysis_jsonl(run_analysis(self.config(trial_csv)))
        assert a == b
        c = analysis_jsonl(run_analysis(self.config(trial_csv, seed=8)))
        assert c != a

    def test_pair_failure_recorded(self, tmp_path):
        rng = np.random.default_rng(2)
        rows = [[i % 2, *rng.normal(size=3)] for i in range(40)]
        for r in rows[:30]:
            r[2] = ""  # G2 mostly missing
        write_rows(tmp_path / "t.csv", ["S", "G1", "G2", "Y"], rows)
        out = run_analysis({"input": str(tmp_path / "t.csv"), "exposure": "S", "mediators": ["G1", "G2"],
                            "outcomes": ["Y"], "m": 20})
        assert out[0]["error"] is None
        assert out[1]["error"].startswith("InsufficientDataError")

    def test_config_errors_have_pointer(self, trial_csv):
        with pytest.raises(ConfigError, match="/m"):
            run_analysis(self.config(trial_csv, m=0))
        with pytest.raises(ConfigError, match="/methods/1"):
            run_analysis(self.config(trial_csv, methods=["sobel", "abtest"]))


class TestSimulationDriver:
    def test_ci_preset_time_budget(self, tmp_path):
        start = time.perf_counter()
        report, paths = run_simulation({"mode": "size", "preset": "ci", "seed": 1}, tmp_path)
        elapsed = time.perf_counter() - start
        assert elapsed < 60  # documented CI budget
        assert report.config["n_tests"] == 100 and report.config["m"] == 100
        names = sorted(p.name for p in paths)
        assert names == ["qq_csmt.csv", "qq_maxp.csv", "qq_sobel.csv", "report.json", "size.csv"]
        doc = json.loads((tmp_path / "report.json").read_text())
        jsonschema.validate(doc, load_schema("experiment_report"))
        assert doc["reference_line"]["neg_log10_level"] == pytest.approx(1.3010299956639813)
        with open(tmp_path / "qq_csmt.csv") as fh:
            qq = list(csv.reader(fh))
        assert qq[0] == ["uniform_quantile", "neg_log10_p"] and len(qq) == 101

    def test_power_scenario_ii(self, tmp_path):
        report, _ = run_simulation(
            {"mode": "power", "n": 200, "n_tests": 3, "m": 10, "power": {"scenario": "fixed_product", "grid": [0.5, 2.0]}},
            tmp_path,
        )
        assert [r["product"] for r in report.rows] == [0.2, 0.2]
        with open(tmp_path / "power.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert [float(r["product"]) for r in rows] == [0.2, 0.2]

    def test_presets(self):
        assert simulation_config({"mode": "size"})["n_tests"] == 500
        cfg = simulation_config({"mode": "size", "preset": "ci", "m": 7})
        assert (cfg["n_tests"], cfg["m"], cfg["n"]) == (100, 7, 600)
        assert simulation_config({"mode": "power"})["n"] == 300

    def test_schema_violation_pointer(self):
        with pytest.raises(ConfigError, match=r"/size/r"):
            simulation_config({"mode": "size", "size": {"r": "big"}})
        with pytest.raises(ConfigError, match=r"at /:"):
            simulation_config({"mode": "size", "bogus": 1})

    def test_byte_identical_reports(self, tmp_path):
        cfg = {"mode": "size", "n": 100, "n_tests": 8, "m": 10, "seed": 3}
        run_simulation(cfg, tmp_path / "a")
        run_simulation(cfg, tmp_path / "b")
        for name in ("report.json", "size.csv", "qq_csmt.csv"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


class TestCli:
    def test_test_verb(self, trial_csv, tmp_path, capsys):
        out = tmp_path / "res.csv"
        code = main(["test", "--input", str(trial_csv), "--exposure", "metformin", "--mediators", ",".join(MEDIATORS),
                     "--outcomes", "il6,crp", "--covariates", "age", "--m", "30", "--seed", "1", "--out", str(out),
                     "--format", "csv"])
        assert code == 0
        assert len(out.read_text().strip().split("\n")) == 15
        assert "Mediator" in capsys.readouterr().out

    def test_config_file_and_flag_override(self, trial_csv, tmp_path, capsys):
        cfg = tmp_path / "a.yaml"
        cfg.write_text(f"input: {trial_csv}\nexposure: metformin\nmediators: [butyric]\noutcomes: [crp]\nm: 10\nmethods: [sobel]\n")
        assert main(["test", "--config", str(cfg), "--methods", "maxp"]) == 0
        row = json.loads(capsys.readouterr().out)
        assert list(row["results"]) == ["maxp"]

    def test_exit_codes(self, trial_csv, tmp_path, capsys):
        assert main(["test", "--input", str(trial_csv), "--exposure", "metformin", "--mediators", "acetic",
                     "--outcomes", "il6", "--m", "0"]) == 2
        assert main(["simulate", "size", "--n", "10"]) == 2
        assert main(["bogus"]) == 2
        assert main(["test", "--input", str(tmp_path / "missing.csv"), "--exposure", "S", "--mediators", "G",
                     "--outcomes", "Y"]) == 3
        bad = tmp_path / "bad.csv"
        write_rows(bad, ["S", "G", "Y"], [[0, "x", 1]])
        assert main(["test", "--input", str(bad), "--exposure", "S", "--mediators", "G", "--outcomes", "Y"]) == 3
        assert "row 1" in capsys.readouterr().err

    def test_numerical_exit_code(self, tmp_path, monkeypatch):
        import csmt.cli as cli
        from csmt.errors import DegenerateStatisticError

        def boom(doc):
            raise DegenerateStatisticError("zero spread")

        monkeypatch.setattr(cli, "run_simulation", boom)
        assert main(["simulate", "size"]) == 4

    def test_simulate_verb(self, tmp_path, capsys):
        code = main(["simulate", "power", "--scenario", "fixed_equal", "--grid", "0,0.5", "--n", "100",
                     "--tests", "4", "--m", "10", "--out", str(tmp_path)])
        assert code == 0
        assert (tmp_path / "power.csv").exists()
        assert "grid=0.5" in capsys.readouterr().out

    def test_calibrate_verb(self, tmp_path, capsys):
        out = tmp_path / "cal.json"
        assert main(["calibrate", "theorem2", "--k", "6", "--tau", "1", "--draws", "5000", "--out", str(out)]) == 0
        doc = json.loads(out.read_text())
        assert doc["reference_df"] == 5 and doc["ks_p_value"] > 0.001
        assert main(["calibrate", "theorem1", "--null", "H01", "--n", "100", "--draws", "50"]) == 0
