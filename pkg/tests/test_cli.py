import json
import subprocess
import sys
from pathlib import Path

import pytest

from facelab.cli import main


def run_cli(*args):
    """Invoke the entry point in-process; returns (exit_code)."""
    return main(list(args))


def run_cli_proc(*args, cwd=None):
    return subprocess.run([sys.executable, "-m", "facelab.cli", *args],
                          capture_output=True, text=True, cwd=cwd)


@pytest.fixture()
def corpus(tmp_path):
    out = tmp_path / "corpus"
    code = run_cli("synth", "--subjects", "50", "--seed", "0",
                   "--rates", "0.05,0.08,0.1,0.05", "--out", str(out))
    assert code == 0
    return out


class TestSynth:
    def test_byte_identical_reruns(self, tmp_path):
        for name in ("a", "b"):
            code = run_cli("synth", "--subjects", "30", "--seed", "7",
                           "--images", "--out", str(tmp_path / name))
            assert code == 0
        a, b = tmp_path / "a", tmp_path / "b"
        assert (a / "records.csv").read_bytes() == (b / "records.csv").read_bytes()
        assert (a / "truth.json").read_bytes() == (b / "truth.json").read_bytes()
        imgs_a = sorted(p.relative_to(a) for p in a.rglob("*.pgm"))
        imgs_b = sorted(p.relative_to(b) for p in b.rglob("*.pgm"))
        assert imgs_a == imgs_b and imgs_a
        for rel in imgs_a:
            assert (a / rel).read_bytes() == (b / rel).read_bytes()

    def test_bad_rates_validation_error(self, tmp_path, capsys):
        code = run_cli("synth", "--rates", "nope", "--out", str(tmp_path / "x"))
        assert code == 1
        err = json.loads(capsys.readouterr().err)
        assert err["error"] == "config"


class TestAuditClean:
    def test_audit_reports_conflicts(self, corpus, tmp_path, capsys):
        out = tmp_path / "audit.json"
        assert run_cli("audit", "--records", str(corpus / "records.csv"),
                       "--out", str(out)) == 0
        payload = json.loads(out.read_text())
        truth = json.loads((corpus / "truth.json").read_text())
        counts = truth["realized_counts"]
        assert payload["gender_conflicts"] == counts["gender"]
        assert payload["race_conflicts"] == counts["race"]
        assert payload["dob_conflicts"] == counts["dob_small"] + counts["dob_large"]

    def test_clean_strict_with_pending_fails(self, corpus, tmp_path, capsys):
        audit = json.loads(
            run_cli_proc("audit", "--records",
                         str(corpus / "records.csv")).stdout)
        if not audit["pending_items"]:
            pytest.skip("seed produced no ties needing adjudication")
        code = run_cli("clean", "--records", str(corpus / "records.csv"),
                       "--strict", "--out", str(tmp_path / "cleaned"))
        assert code == 1
        err = json.loads(capsys.readouterr().err)
        assert err["error"] == "unresolved_subjects"

    def test_clean_emits_partition(self, corpus, tmp_path):
        out = tmp_path / "cleaned"
        assert run_cli("clean", "--records", str(corpus / "records.csv"),
                       "--out", str(out)) == 0
        manifest = json.loads((out / "manifest.json").read_text())
        versions = manifest["versions"]
        assert set(versions) >= {"cleaned_v2", "go_for_age", "holdout_for_age"}
        assert (versions["cleaned_v2"]["record_count"]
                == versions["go_for_age"]["record_count"]
                + versions["holdout_for_age"]["record_count"])

    def test_unknown_subcommand(self, capsys):
        assert run_cli("frobnicate") == 1
        err = json.loads(capsys.readouterr().err)
        assert err["error"] == "usage"


class TestSubset:
    def test_infeasible_exit_code(self, tmp_path, capsys):
        out = tmp_path / "c"
        run_cli("synth", "--subjects", "12", "--seed", "1", "--out", str(out))
        code = run_cli("subset", "--records", str(out / "records.csv"),
                       "--seeds", "0:2", "--permutations", "50",
                       "--out", str(tmp_path / "s"))
        captured = capsys.readouterr()
        if code == 2:
            assert json.loads(captured.err)["error"] == "infeasible"
        else:
            assert code == 0

    def test_subset_outputs(self, tmp_path):
        out = tmp_path / "c"
        run_cli("synth", "--subjects", "600", "--seed", "21",
                "--out", str(out))
        code = run_cli("subset", "--records", str(out / "records.csv"),
                       "--seeds", "0:3", "--slack", "2",
                       "--permutations", "200", "--out", str(tmp_path / "s"))
        assert code == 0
        assert (tmp_path / "s" / "assignment.csv").exists()
        scores = json.loads((tmp_path / "s" / "scores.json").read_text())
        assert scores and all(0 <= s["combined"] <= 1 for s in scores)


class TestFeaturesEvaluate:
    def test_features_then_evaluate_paths_exist(self, tmp_path):
        out = tmp_path / "c"
        run_cli("synth", "--subjects", "20", "--seed", "2", "--images",
                "--out", str(out))
        cache = tmp_path / "feats.npz"
        assert run_cli("features", "--images", str(out / "images"),
                       "--out", str(cache)) == 0
        assert cache.exists()

    def test_features_empty_dir_fails(self, tmp_path, capsys):
        (tmp_path / "empty").mkdir()
        code = run_cli("features", "--images", str(tmp_path / "empty"),
                       "--out", str(tmp_path / "f.npz"))
        assert code == 1
        assert json.loads(capsys.readouterr().err)["error"] == "config"

    def test_evaluate_requires_inputs(self, tmp_path, capsys):
        code = run_cli("evaluate", "--out", str(tmp_path / "r"))
        assert code == 1
        assert json.loads(capsys.readouterr().err)["error"] == "config"


class TestConfigFile:
    def test_config_supplies_defaults(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"synth": {"subjects": 15, "seed": 9}}))
        out = tmp_path / "c"
        assert run_cli("--config", str(cfg), "synth", "--out", str(out)) == 0
        lines = (out / "records.csv").read_text().splitlines()
        subjects = {line.split(",")[0] for line in lines[1:]}
        assert len(subjects) == 15

    def test_bad_config_rejected(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text("[1,2,3]")
        code = run_cli("--config", str(cfg), "synth",
                       "--out", str(tmp_path / "c"))
        assert code == 1
        assert json.loads(capsys.readouterr().err)["error"] == "config"


def test_full_toy_pipeline_smoke(tmp_path):
    """synth -> audit -> clean -> subset -> features -> evaluate, small."""
    c = tmp_path / "corpus"
    assert run_cli("synth", "--subjects", "300", "--seed", "11", "--images",
                   "--out", str(c)) == 0
    assert run_cli("audit", "--records", str(c / "records.csv"),
                   "--out", str(tmp_path / "audit.json")) == 0
    assert run_cli("clean", "--records", str(c / "records.csv"),
                   "--out", str(tmp_path / "cleaned")) == 0
    code = run_cli("subset", "--records",
                   str(tmp_path / "cleaned" / "go_for_age.csv"),
                   "--seeds", "0:5", "--slack", "3", "--permutations", "100",
                   "--out", str(tmp_path / "split"))
    assert code in (0, 2)  # small corpora can be legitimately infeasible
    assert run_cli("features", "--images", str(c / "images"),
                   "--out", str(tmp_path / "feats.npz")) == 0
    report_dir = tmp_path / "report"
    assert run_cli("evaluate", "--toy", "--seed", "0",
                   "--out", str(report_dir)) == 0
    payload = json.loads((report_dir / "report.json").read_text())
    assert len(payload["counts"]) == 8
    assert run_cli("report", "--dir", str(tmp_path)) == 0
