import json
import shutil
import subprocess
import sys
from pathlib import Path

import numpy as np

from fairbasis.cli import main
from fairbasis.simulate import reference_spec_dict

DATA = Path(__file__).parent / "data"
RAW_CSV = (DATA / "raw_survival.csv").read_text()
PSEUDO_CSV = (DATA / "pseudo_expected.csv").read_text()
ROOT = Path(__file__).parent.parent

SMALL_SIM = {
    "marginals": [
        {"name": "X1", "dist": "normal", "mean": 0.0, "sd": 1.0},
        {"name": "X2", "dist": "uniform", "a": 0.0, "b": 1.0},
        {"name": "A", "dist": "bernoulli", "p": 0.4, "role": "sensitive"},
        {"name": "Y", "dist": "bernoulli", "p": 0.5, "role": "outcome"},
    ],
    "latent": {"cholesky_strict_lower": [[0.3], [0.4, 0.1], [0.2, 0.3, 0.3]]},
    "rows": 400,
    "replicates": 2,
    "seed": 5,
}


def write_json(path, payload):
    path.write_text(json.dumps(payload))
    return str(path)


def run_config(sim=None, **extra):
    cfg = {"simulation": sim or SMALL_SIM, "sensitive": ["A"], "outcome": "Y",
           "threshold": {"fixed": 0.5}, "split": {"fraction": 0.8, "seed": 1}}
    cfg.update(extra)
    return cfg


class TestSimulate:
    def test_files_and_manifest(self, tmp_path):
        cfg = write_json(tmp_path / "c.json", {"simulation": SMALL_SIM})
        assert main(["--config", cfg, "--out", str(tmp_path / "o"), "simulate"]) == 0
        out = tmp_path / "o"
        assert (out / "replicate_000.csv").exists() and (out / "replicate_001.csv").exists()
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["seed"] == 5 and len(manifest["spec_sha256"]) == 64
        assert (out / "replicate_000.csv").read_text().splitlines()[0] == "X1,X2,A,Y"

    def test_byte_identical_rerun(self, tmp_path):
        cfg = write_json(tmp_path / "c.json", SMALL_SIM)
        main(["simulate", "--config", cfg, "--out", str(tmp_path / "a")])
        main(["simulate", "--config", cfg, "--out", str(tmp_path / "b"), "--jobs", "2"])
        for name in ("replicate_000.csv", "replicate_001.csv", "schema.json"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_seed_flag(self, tmp_path):
        cfg = write_json(tmp_path / "c.json", SMALL_SIM)
        main(["simulate", "--config", cfg, "--out", str(tmp_path / "a"), "--seed", "99"])
        assert json.loads((tmp_path / "a" / "manifest.json").read_text())["seed"] == 99

    def test_invalid_cholesky_row(self, tmp_path, capsys):
        bad = dict(SMALL_SIM, latent={"cholesky_strict_lower": [[0.3], [0.9, 0.6], [0.1, 0.1, 0.1]]})
        cfg = write_json(tmp_path / "c.json", bad)
        assert main(["simulate", "--config", cfg, "--out", str(tmp_path)]) == 2
        assert "InvalidCholeskyRow" in capsys.readouterr().err

    def test_missing_config(self, tmp_path):
        assert main(["simulate", "--out", str(tmp_path)]) == 2
        assert main(["simulate", "--config", str(tmp_path / "nope.json")]) == 2


class TestRun:
    def test_bundle(self, tmp_path):
        cfg = write_json(tmp_path / "c.json", run_config())
        assert main(["run", "--config", cfg, "--out", str(tmp_path / "o"), "--jobs", "2"]) == 0
        out = tmp_path / "o"
        for variant in ("baseline", "drop_sensitive", "decorrelate"):
            d = out / "replicate_001" / variant
            assert (d / "model.json").exists() and (d / "predictions.csv").exists()
            assert (d / "report.json").exists()
            assert (out / f"summary_{variant}.csv").exists()
        assert (out / "replicate_000" / "decorrelate" / "transition.json").exists()
        model = json.loads((out / "replicate_000" / "drop_sensitive" / "model.json").read_text())
        assert "A" not in model["columns"]
        summary = json.loads((out / "summary.json").read_text())
        assert summary["failures"] == []

    def test_deterministic_reports(self, tmp_path):
        cfg = write_json(tmp_path / "c.json", run_config())
        main(["run", "--config", cfg, "--out", str(tmp_path / "a")])
        main(["run", "--config", cfg, "--out", str(tmp_path / "b"), "--jobs", "2"])
        for rel in ("summary.json", "replicate_000/baseline/report.json", "replicate_001/decorrelate/model.json"):
            assert (tmp_path / "a" / rel).read_bytes() == (tmp_path / "b" / rel).read_bytes()

    def test_csv_input_and_missing_outcome(self, tmp_path, capsys):
        sim_cfg = write_json(tmp_path / "s.json", SMALL_SIM)
        main(["simulate", "--config", sim_cfg, "--out", str(tmp_path / "data")])
        cfg = {"data": {"csv": ["data/replicate_000.csv"], "schema": "data/schema.json"},
               "sensitive": ["A"], "outcome": "Y", "variants": ["baseline"]}
        ok = write_json(tmp_path / "ok.json", cfg)
        assert main(["run", "--config", ok, "--out", str(tmp_path / "o")]) == 0

        bad = write_json(tmp_path / "bad.json", {**cfg, "outcome": "Z"})
        assert main(["run", "--config", bad, "--out", str(tmp_path / "o2")]) == 2
        assert "SchemaError" in capsys.readouterr().err

    def test_every_replicate_failing(self, tmp_path, capsys):
        sim_cfg = write_json(tmp_path / "s.json", SMALL_SIM)
        main(["simulate", "--config", sim_cfg, "--out", str(tmp_path / "data")])
        schema = json.loads((tmp_path / "data" / "schema.json").read_text())
        schema["Z"] = {"role": "feature", "kind": "numeric"}
        (tmp_path / "data" / "wide.json").write_text(json.dumps(schema))
        cfg = write_json(tmp_path / "c.json", {"data": {"csv": "data/replicate_000.csv", "schema": "data/wide.json"},
                                               "sensitive": ["A"], "outcome": "Y"})
        assert main(["run", "--config", cfg, "--out", str(tmp_path / "o")]) == 2
        assert "every replicate failed" in capsys.readouterr().err
        assert json.loads((tmp_path / "o" / "summary.json").read_text())["failures"]

    def test_uncorrelated_sensitive_matches_drop(self, tmp_path):
        # with A independent of every feature the transition is the identity up to noise
        sim = dict(SMALL_SIM, rows=4000, replicates=1,
                   latent={"latent_corr": [[1, 0.3, 0, 0.2], [0.3, 1, 0, 0.1], [0, 0, 1, 0.2], [0.2, 0.1, 0.2, 1]]})
        cfg = write_json(tmp_path / "c.json", run_config(sim, variants=["drop_sensitive", "decorrelate"]))
        main(["run", "--config", cfg, "--out", str(tmp_path / "o")])
        drop = json.loads((tmp_path / "o/replicate_000/drop_sensitive/model.json").read_text())
        dec = json.loads((tmp_path / "o/replicate_000/decorrelate/model.json").read_text())
        assert drop["columns"] == dec["columns"]
        np.testing.assert_allclose(drop["coefficients"], dec["coefficients"], atol=0.05)


class TestPseudo:
    def test_table(self, tmp_path):
        src = tmp_path / "raw.csv"
        src.write_text(RAW_CSV)
        assert main(["pseudo", str(src), "--out", str(tmp_path), "--decimals", "2"]) == 0
        assert (tmp_path / "pseudo.csv").read_text() == PSEUDO_CSV

    def test_empty_input(self, tmp_path):
        src = tmp_path / "raw.csv"
        src.write_text(RAW_CSV.splitlines()[0] + "\n")
        assert main(["pseudo", str(src), "--out", str(tmp_path), "--output", "p.csv"]) == 0
        assert (tmp_path / "p.csv").read_text() == PSEUDO_CSV.splitlines()[0] + "\n"

    def test_negative_months(self, tmp_path, capsys):
        src = tmp_path / "raw.csv"
        src.write_text(RAW_CSV + "4,30,2001,-1,0\n")
        assert main(["pseudo", str(src), "--out", str(tmp_path)]) == 3
        assert "row 5" in capsys.readouterr().err

    def test_missing_file(self, tmp_path):
        assert main(["pseudo", str(tmp_path / "none.csv"), "--out", str(tmp_path)]) == 3


class TestMetrics:
    def test_report(self, tmp_path):
        lines = ["y_true,y_pred,A"] + [f"{t},{p},{a}" for t, p, a in
                                       [(1, 1, 0), (0, 1, 0), (1, 0, 1), (0, 0, 1)] * 10]
        (tmp_path / "p.csv").write_text("\n".join(lines) + "\n")
        assert main(["metrics", str(tmp_path / "p.csv"), "--sensitive", "A", "--out", str(tmp_path)]) == 0
        rep = json.loads((tmp_path / "report.json").read_text())
        assert rep["per_group"]["A"]["0"]["acceptance_rate"] == 1.0
        assert rep["differences"]["A"]["0-1"]["acceptance_rate"] == 1.0

    def test_needs_sensitive(self, tmp_path):
        (tmp_path / "p.csv").write_text("y_true,y_pred\n1,1\n")
        assert main(["metrics", str(tmp_path / "p.csv"), "--out", str(tmp_path)]) == 2


class TestDecorrelate:
    def test_outputs(self, tmp_path):
        sim_cfg = write_json(tmp_path / "s.json", dict(SMALL_SIM, replicates=1))
        main(["simulate", "--config", sim_cfg, "--out", str(tmp_path)])
        cfg = write_json(tmp_path / "d.json", {"csv": "replicate_000.csv", "schema": "schema.json"})
        assert main(["decorrelate", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
        data = np.genfromtxt(tmp_path / "o" / "transformed.csv", delimiter=",", names=True)
        for col in ("X1", "X2"):
            assert abs(np.corrcoef(data[col], data["A"])[0, 1]) < 1e-8
        transition = json.loads((tmp_path / "o" / "transition.json").read_text())
        assert transition["names"] == ["A", "X1", "X2"]


def test_console_script(tmp_path):
    exe = shutil.which("fairbasis")
    cmd = [exe] if exe else [sys.executable, "-m", "fairbasis.cli"]
    res = subprocess.run([*cmd, "--version"], capture_output=True, text=True)
    assert res.returncode == 0 and "fairbasis" in res.stdout


def test_reference_config_matches_builder():
    with open(ROOT / "configs" / "reference_run.json", encoding="utf-8") as fh:
        cfg = json.load(fh)
    assert cfg["simulation"]["latent"] == json.loads(json.dumps(reference_spec_dict()["latent"]))
    assert cfg["positive_label"] == 0
