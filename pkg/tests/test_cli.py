import csv
import json
from pathlib import Path

import numpy as np
import pytest

from causalboot import rng as cbrng
from causalboot.cli import main
from causalboot.simulation import generate_dgm

DOCS = Path(__file__).resolve().parents[1] / "docs"


def export_dgm_csv(path, n=1200, seed=0):
    sample = generate_dgm(n, cbrng.substream(seed, cbrng.DOMAIN_DATASET, 0))
    table = sample.table
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["y", "w", "x1", "x2"])
        for i in range(table.n):
            writer.writerow(
                [repr(float(table.y[i])), int(table.w[i]),
                 repr(float(table.x[i, 0])), repr(float(table.x[i, 1]))]
            )
    return path


@pytest.fixture(scope="module")
def dgm_csv(tmp_path_factory):
    return export_dgm_csv(tmp_path_factory.mktemp("data") / "dgm.csv")


def analyze_args(csv_path, out_dir, **overrides):
    args = {
        "--input": str(csv_path),
        "--outcome": "y",
        "--treatment": "w",
        "--covariates": "x1,x2",
        "--method": "logistic",
        "--gamma": "0.7",
        "--subsets": "4",
        "--replicates": "50",
        "--seed": "1",
        "--output": str(out_dir),
    }
    args.update(overrides)
    out = ["analyze"]
    for key, value in args.items():
        if value is None:
            continue
        out += [key, value]
    return out


class TestAnalyze:
    def test_end_to_end_writes_valid_result(self, dgm_csv, tmp_path):
        code = main(analyze_args(dgm_csv, tmp_path))
        assert code == 0
        document = json.loads((tmp_path / "result.json").read_text())
        jsonschema = pytest.importorskip("jsonschema")
        schema = json.loads((DOCS / "result_schema.json").read_text())
        jsonschema.validate(document, schema)
        assert document["payload"]["n"] == 1200
        assert document["manifest"]["input_digest"].startswith("sha256:")

    def test_reruns_are_identical_apart_from_timestamps(self, dgm_csv, tmp_path):
        out1 = tmp_path / "a"
        out2 = tmp_path / "b"
        assert main(analyze_args(dgm_csv, out1)) == 0
        assert main(analyze_args(dgm_csv, out2)) == 0
        doc1 = json.loads((out1 / "result.json").read_text())
        doc2 = json.loads((out2 / "result.json").read_text())
        assert json.dumps(doc1["payload"], sort_keys=True) == json.dumps(
            doc2["payload"], sort_keys=True
        )
        assert doc1["manifest"]["input_digest"] == doc2["manifest"]["input_digest"]

    def test_emit_draws(self, dgm_csv, tmp_path):
        code = main(analyze_args(dgm_csv, tmp_path) + ["--emit-draws"])
        assert code == 0
        with open(tmp_path / "draws.csv", newline="") as handle:
            rows = list(csv.reader(handle))
        assert rows[0] == ["subset", "replicate", "estimate"]
        assert len(rows) - 1 == 4 * 50

    def test_gamma_and_subset_size_conflict(self, dgm_csv, tmp_path):
        code = main(analyze_args(dgm_csv, tmp_path, **{"--subset-size": "100"}))
        assert code == 2

    def test_external_scores_wrong_length(self, dgm_csv, tmp_path):
        scores = tmp_path / "scores.txt"
        scores.write_text("0.5\n0.5\n", encoding="utf-8")
        code = main(analyze_args(dgm_csv, tmp_path, **{"--method": f"external:{scores}"}))
        assert code == 3

    def test_missing_input_file(self, tmp_path):
        code = main(analyze_args(tmp_path / "absent.csv", tmp_path))
        assert code == 3

    def test_unknown_flag_rejected(self, dgm_csv, tmp_path):
        with pytest.raises(SystemExit) as exc:
            main(analyze_args(dgm_csv, tmp_path) + ["--frobnicate", "1"])
        assert exc.value.code == 2

    def test_estimation_failure_exit_code(self, tmp_path, dgm_csv):
        # impossible weight cap exhausts the redraw budget
        args = analyze_args(dgm_csv, tmp_path, **{"--config": None})
        cfg = tmp_path / "cfg.txt"
        cfg.write_text("weight_cap=1e-12\n", encoding="utf-8")
        code = main(args + ["--config", str(cfg)])
        assert code == 4

    def test_config_file_precedence(self, dgm_csv, tmp_path):
        cfg = tmp_path / "cfg.txt"
        cfg.write_text("subsets=2\nreplicates=30\n", encoding="utf-8")
        out = tmp_path / "out"
        code = main(
            ["analyze", "--input", str(dgm_csv), "--outcome", "y",
             "--treatment", "w", "--covariates", "x1,x2", "--seed", "1",
             "--subsets", "3", "--output", str(out), "--config", str(cfg)]
        )
        assert code == 0
        document = json.loads((out / "result.json").read_text())
        # flag wins over file; file wins over default (100)
        assert document["manifest"]["config"]["subsets"] == 3
        assert document["manifest"]["config"]["replicates"] == 30

    def test_drop_policy_reported(self, tmp_path):
        path = tmp_path / "holes.csv"
        path.write_text(
            "y,w,x1,x2\n1.0,0,0.1,0.2\n2.0,1,,0.3\n0.5,0,0.2,0.1\n"
            "1.5,1,0.4,0.0\n2.5,0,0.3,0.2\n0.7,1,0.1,0.4\n",
            encoding="utf-8",
        )
        cfg = tmp_path / "cfg.txt"
        cfg.write_text("weight_cap=1.0\n", encoding="utf-8")  # arms of 2-3 units
        out = tmp_path / "out"
        code = main(
            ["analyze", "--input", str(path), "--outcome", "y", "--treatment", "w",
             "--covariates", "x1,x2", "--gamma", "1.0", "--subsets", "1",
             "--replicates", "20", "--seed", "0", "--na-policy", "drop",
             "--method", "marginal", "--config", str(cfg), "--output", str(out)]
        )
        assert code == 0
        document = json.loads((out / "result.json").read_text())
        assert document["payload"]["diagnostics"]["dropped_rows"] == 1
        assert document["payload"]["n"] == 5


class TestSimulate:
    def test_quick_study(self, tmp_path):
        code = main(
            ["simulate", "--n", "600", "--replications", "12", "--gamma", "0.7",
             "--subsets", "3", "--replicates", "40", "--seed", "5",
             "--output", str(tmp_path)]
        )
        assert code == 0
        summary = json.loads((tmp_path / "summary.json").read_text())
        assert summary["payload"]["replications"] == 12
        assert 0.0 <= summary["payload"]["coverage"] <= 1.0
        with open(tmp_path / "zipplot.csv", newline="") as handle:
            rows = list(csv.reader(handle))
        assert rows[0] == ["replication", "tau_hat", "se", "lower", "upper",
                           "covered", "centile_rank"]
        assert len(rows) - 1 == 12

    def test_below_minimum_replications(self, tmp_path):
        code = main(
            ["simulate", "--n", "600", "--replications", "1", "--output", str(tmp_path)]
        )
        assert code == 2

    def test_seeded_reproducibility(self, tmp_path):
        args = ["simulate", "--n", "500", "--replications", "10", "--subsets", "2",
                "--replicates", "30", "--seed", "9"]
        out1, out2 = tmp_path / "r1", tmp_path / "r2"
        assert main(args + ["--output", str(out1)]) == 0
        assert main(args + ["--output", str(out2)]) == 0
        pay1 = json.loads((out1 / "summary.json").read_text())["payload"]
        pay2 = json.loads((out2 / "summary.json").read_text())["payload"]
        assert pay1 == pay2


class TestRelerr:
    def test_trajectories_csv(self, tmp_path):
        code = main(
            ["relerr", "--n", "800", "--gammas", "0.5,0.9", "--replicates", "40",
             "--oracle-reps", "100", "--data-reps", "1", "--seed", "3",
             "--output", str(tmp_path)]
        )
        assert code == 0
        with open(tmp_path / "relerr.csv", newline="") as handle:
            rows = list(csv.reader(handle))
        assert rows[0] == ["gamma", "subsets", "cum_seconds", "err"]
        gammas = {row[0] for row in rows[1:]}
        assert gammas == {"0.5", "0.9"}
        assert all(float(row[3]) >= 0.0 for row in rows[1:])

    def test_bad_gamma(self, tmp_path):
        code = main(
            ["relerr", "--n", "800", "--gammas", "1.5", "--output", str(tmp_path)]
        )
        assert code == 2


class TestBenchmark:
    def test_median_cells(self, tmp_path):
        code = main(
            ["benchmark", "--ns", "600", "--methods", "logistic,marginal",
             "--subsets", "2,3", "--p", "2", "--reps", "2", "--seed", "0",
             "--output", str(tmp_path)]
        )
        assert code == 0
        with open(tmp_path / "medians.csv", newline="") as handle:
            rows = list(csv.reader(handle))
        assert len(rows) - 1 == 4
        with open(tmp_path / "timings.csv", newline="") as handle:
            rows = list(csv.reader(handle))
        assert rows[0] == ["n", "p", "method", "s", "rep", "seconds"]
        assert len(rows) - 1 == 8

    def test_zero_reps_rejected(self, tmp_path):
        code = main(["benchmark", "--ns", "600", "--reps", "0", "--output", str(tmp_path)])
        assert code == 2

    def test_grid_mode(self, tmp_path):
        code = main(
            ["benchmark", "--ns", "4000", "--methods", "logistic", "--grid",
             "--reps", "1", "--seed", "0", "--output", str(tmp_path)]
        )
        assert code == 0
        with open(tmp_path / "timings.csv", newline="") as handle:
            rows = list(csv.reader(handle))[1:]
        assert {(row[1], row[3]) for row in rows} == {
            ("2", "2"), ("2", "4"), ("10", "2"), ("10", "4"), ("50", "2"), ("50", "4")
        }
