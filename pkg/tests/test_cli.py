import csv
import json
import subprocess
import sys

import pytest

from cimlearn.cli import main


def _rows(path):
    lines = [ln for ln in path.read_text().splitlines() if not ln.startswith("#")]
    return list(csv.DictReader(lines))


@pytest.fixture(scope="module")
def models(tmp_path_factory):
    out = tmp_path_factory.mktemp("models")
    assert main(["catalog", "--seed", "42", "--out", str(out)]) == 0
    return out


class TestCatalogAndDim:
    def test_files(self, models):
        assert sorted(p.name for p in models.iterdir()) == ["f1.json", "f2.json", "f3.json", "f4.json", "f5.json"]
        obj = json.loads((models / "f3.json").read_text())
        assert obj["format"] == "cimlearn-model/1" and obj["id"] == "F3"

    def test_dim_f5(self, models, tmp_path):
        out = tmp_path / "dim.csv"
        assert main(["dim", "--model", str(models / "f5.json"), "--points", "10", "--seed", "1", "--out", str(out)]) == 0
        assert out.read_text().startswith("# format: cimlearn-dim/1\n")
        (row,) = _rows(out)
        assert (row["model_id"], row["d"], row["d_unadjusted"], row["n_points"]) == ("F5", "11", "11", "10")
        assert list(row) == ["model_id", "d", "d_unadjusted", "n_points", "min_rank", "max_rank", "sv_gap", "seed"]


class TestPipeline:
    def test_generate_fit_score(self, models, tmp_path):
        data = tmp_path / "f1.csv"
        assert main(["generate", "--model", str(models / "f1.json"), "--n", "300", "--seed", "3", "--out", str(data)]) == 0
        assert data.read_text().startswith("# format: cimlearn-dataset/1\nC1,C2,C3,E\n")

        fitted = tmp_path / "f1_fit.json"
        args = ["fit", "--model", str(models / "f1.json"), "--data", str(data), "--mode", "map", "--tol", "1e-6",
                "--max-iter", "200", "--restarts", "2", "--seed", "7", "--out", str(fitted)]
        assert main(args) == 0
        trace = tmp_path / "f1_fit.trace.csv"
        first = (fitted.read_bytes(), trace.read_bytes())
        assert trace.read_text().startswith("# format: cimlearn-trace/1\niteration,objective\n")
        assert main(args) == 0
        assert (fitted.read_bytes(), trace.read_bytes()) == first

        cands = tmp_path / "cands"
        cands.mkdir()
        for name in ("f1.json", "f5.json"):
            (cands / name).write_text((models / name).read_text())
        scores = tmp_path / "scores.csv"
        assert main(["score", "--models", str(cands), "--data", str(data), "--criterion", "cs", "--restarts", "1",
                     "--points", "3", "--out", str(scores)]) == 0
        rows = _rows(scores)
        assert [r["model_id"] for r in rows] == ["F1", "F5"]
        assert sum(float(r["posterior"]) for r in rows) == pytest.approx(1.0)
        assert {r["d"] for r in rows} == {"7", "11"}

    def test_fitted_model_feeds_generate(self, models, tmp_path):
        data = tmp_path / "d.csv"
        main(["generate", "--model", str(models / "f2.json"), "--n", "100", "--seed", "1", "--out", str(data)])
        fitted = tmp_path / "fit.json"
        assert main(["fit", "--model", str(models / "f2.json"), "--data", str(data), "--restarts", "1", "--out", str(fitted)]) == 0
        again = tmp_path / "again.csv"
        assert main(["generate", "--model", str(fitted), "--n", "10", "--out", str(again)]) == 0

    def test_empty_generate(self, models, tmp_path):
        out = tmp_path / "empty.csv"
        assert main(["generate", "--model", str(models / "f1.json"), "--n", "0", "--seed", "1", "--out", str(out)]) == 0
        assert out.read_text() == "# format: cimlearn-dataset/1\nC1,C2,C3,E\n"

    def test_emit_latent(self, models, tmp_path):
        out = tmp_path / "lat.csv"
        assert main(["generate", "--model", str(models / "f3.json"), "--n", "5", "--emit-latent", "--out", str(out)]) == 0
        assert out.read_text().splitlines()[1] == "C1,C2,C3,E,X1,X2"

    def test_study(self, tmp_path):
        cfg = tmp_path / "study.json"
        cfg.write_text(json.dumps({"generating": ["F1"], "candidates": ["F1", "F2"], "segments": [30, 60],
                                   "total_n": 60, "restarts": 1, "max_iter": 50, "dim_points": 2}))
        out = tmp_path / "out"
        assert main(["study", "--config", str(cfg), "--out", str(out), "--no-figure"]) == 0
        assert (out / "study_scores.csv").exists() and (out / "report.txt").exists()
        assert not (out / "study_posteriors.png").exists()


class TestExitCodes:
    def test_unknown_flag(self, capsys):
        assert main(["dim", "--model", "x", "--out", "y", "--bogus"]) == 2

    def test_missing_subcommand(self, capsys):
        assert main([]) == 2

    def test_bad_choice(self, capsys):
        assert main(["fit", "--model", "a", "--data", "b", "--out", "c", "--mode", "mle"]) == 2

    def test_malformed_model(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text('{"causes": [}')
        assert main(["dim", "--model", str(bad), "--out", str(tmp_path / "o.csv")]) == 1
        assert "line 1" in capsys.readouterr().err

    def test_malformed_data(self, models, tmp_path, capsys):
        data = tmp_path / "d.csv"
        data.write_text("C1,C2,C3,E\n0,0,0,0\n0,0,5,1\n")
        assert main(["fit", "--model", str(models / "f1.json"), "--data", str(data), "--out", str(tmp_path / "o.json")]) == 1
        assert "line 3" in capsys.readouterr().err

    def test_generate_needs_params(self, tmp_path, capsys):
        model = tmp_path / "m.json"
        model.write_text(json.dumps({"causes": [{"name": "C1", "cardinality": 2}], "effect": {"name": "E", "cardinality": 2},
                                     "combo": "max", "mechanisms": [{"parents": ["C1"], "family": "multinomial", "cardinality": 2}]}))
        assert main(["generate", "--model", str(model), "--n", "3", "--out", str(tmp_path / "o.csv")]) == 1
        assert "no params" in capsys.readouterr().err

    def test_unknown_study_key(self, tmp_path, capsys):
        cfg = tmp_path / "s.json"
        cfg.write_text('{"segmnets": [10]}')
        assert main(["study", "--config", str(cfg), "--out", str(tmp_path)]) == 1

    def test_module_entry_point(self):
        proc = subprocess.run([sys.executable, "-m", "cimlearn", "--help"], capture_output=True, text=True)
        assert proc.returncode == 0
        assert "generate" in proc.stdout and "cimlearn-model/1" in proc.stdout
