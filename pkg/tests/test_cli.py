import json
import shutil
import subprocess

import numpy as np
import pytest

from tailprune import load_dataset, load_head, load_selection
from tailprune.cli import main


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    captured = capsys.readouterr()
    return code, captured.out, captured.err


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    """A generated dataset plus a calibrated head, shared by the module."""
    root = tmp_path_factory.mktemp("cli")
    data = root / "train.emb"
    head = root / "head.json"
    assert main(["generate", "--classes", "4", "--ratio", "10", "--head-count",
                 "30", "--dims", "5", "--out", str(data)]) == 0
    assert main(["calibrate", "--data", str(data), "--max-iter", "80",
                 "--out", str(head)]) == 0
    return root


def data_path(workdir):
    return str(workdir / "train.emb")


class TestGenerate:
    def test_writes_dataset_and_sidecar(self, tmp_path, capsys):
        out = tmp_path / "d.emb"
        code, stdout, stderr = run(capsys, "generate", "--classes", "3",
                                   "--ratio", "4", "--head-count", "20",
                                   "--dims", "3", "--out", out)
        assert code == 0
        assert stdout == f"{out}\n"
        assert stderr == ""
        ds = load_dataset(out)
        assert ds.num_classes == 3
        np.testing.assert_array_equal(ds.class_counts, [20, 10, 5])
        meta = json.loads((tmp_path / "d.emb.meta.json").read_text())
        assert meta["config"]["classes"] == 3
        assert "threads" not in meta["config"]

    def test_seed_changes_bytes(self, tmp_path, capsys):
        a, b, c = (tmp_path / n for n in ("a.emb", "b.emb", "c.emb"))
        for out, seed in ((a, 1), (b, 1), (c, 2)):
            run(capsys, "generate", "--classes", "3", "--ratio", "4",
                "--head-count", "12", "--dims", "3", "--seed", seed, "--out", out)
        assert a.read_bytes() == b.read_bytes()
        assert a.read_bytes() != c.read_bytes()


class TestScore:
    def test_csv_round_trips_exact_floats(self, workdir, tmp_path, capsys):
        out = tmp_path / "scores.csv"
        code, stdout, _ = run(capsys, "score", "--data", data_path(workdir),
                              "--kind", "center_dist", "--out", out)
        assert code == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "index,score,label"
        ds = load_dataset(data_path(workdir))
        assert len(lines) == ds.n + 1
        idx, score, label = lines[1].split(",")
        assert idx == "0"
        assert float(score) == float(repr(float(score)))  # repr round trip
        assert (tmp_path / "scores.csv.meta.json").exists()

    def test_logit_score_requires_head(self, workdir, tmp_path, capsys):
        out = tmp_path / "s.csv"
        code, stdout, stderr = run(capsys, "score", "--data", data_path(workdir),
                                   "--kind", "loss", "--out", out)
        assert code == 2
        assert stdout == ""
        assert stderr.startswith("error[invalid-input]:")

    def test_logit_score_with_head(self, workdir, tmp_path, capsys):
        out = tmp_path / "s.csv"
        code, _, _ = run(capsys, "score", "--data", data_path(workdir),
                         "--kind", "loss", "--head", workdir / "head.json",
                         "--out", out)
        assert code == 0


class TestCalibrate:
    def test_artifact_structure(self, workdir):
        doc = json.loads((workdir / "head.json").read_text())
        assert doc["config"]["subcommand"] == "calibrate"
        assert "threads" not in doc["config"]
        assert set(doc["head"]) == {"W", "b", "C", "d"}
        assert doc["fit"]["n_iter"] >= 1
        head = load_head(workdir / "head.json")  # config-wrapped load
        assert head.num_classes == 4

    def test_emit_dataset_attaches_logits(self, workdir, tmp_path, capsys):
        out = tmp_path / "h.json"
        emitted = tmp_path / "with_logits.emb"
        code, _, _ = run(capsys, "calibrate", "--data", data_path(workdir),
                         "--max-iter", "30", "--emit-dataset", emitted,
                         "--out", out)
        assert code == 0
        ds = load_dataset(emitted)
        assert ds.teacher_logits is not None
        assert ds.teacher_logits.shape == (ds.n, ds.num_classes)


class TestAllocate:
    def test_budgets_sum_and_floor(self, workdir, tmp_path, capsys):
        out = tmp_path / "plan.json"
        code, _, _ = run(capsys, "allocate", "--data", data_path(workdir),
                         "--budget", "24", "--floor", "2", "--out", out)
        assert code == 0
        plan = json.loads(out.read_text())["plan"]
        assert sum(plan["budgets"]) == 24
        assert min(plan["budgets"]) >= 2
        assert plan["floor"] == 2
        assert len(plan["complexities"]) == 4

    def test_prior_choice_changes_plan(self, workdir, tmp_path, capsys):
        outs = {}
        for prior in ("uniform", "empirical"):
            out = tmp_path / f"{prior}.json"
            run(capsys, "allocate", "--data", data_path(workdir),
                "--budget", "24", "--prior", prior, "--out", out)
            outs[prior] = json.loads(out.read_text())["plan"]["budgets"]
        assert outs["uniform"] != outs["empirical"]


class TestSelect:
    def test_basic_methods(self, workdir, tmp_path, capsys):
        for method in ("flrbf", "herding", "kcenter"):
            out = tmp_path / f"{method}.json"
            code, _, _ = run(capsys, "select", "--data", data_path(workdir),
                             "--method", method, "--budget", "10", "--out", out)
            assert code == 0
            sel = load_selection(out)
            assert sel.size == 10
            assert sel.method == method

    def test_sgs_requires_k(self, workdir, tmp_path, capsys):
        code, _, stderr = run(capsys, "select", "--data", data_path(workdir),
                              "--method", "sgs", "--budget", "10",
                              "--out", tmp_path / "x.json")
        assert code == 2
        assert "--k" in stderr

    def test_sgs_selection(self, workdir, tmp_path, capsys):
        out = tmp_path / "sgs.json"
        code, _, _ = run(capsys, "select", "--data", data_path(workdir),
                         "--method", "sgs", "--budget", "16", "--k", "0.5",
                         "--base-method", "kcenter", "--out", out)
        assert code == 0
        sel = load_selection(out)
        assert sel.size == 16
        assert sel.method == "sgs+kcenter"
        assert sel.k_ratio == 0.5

    def test_plan_driven_stratified(self, workdir, tmp_path, capsys):
        plan_path = tmp_path / "plan.json"
        run(capsys, "allocate", "--data", data_path(workdir), "--budget", "12",
            "--floor", "1", "--out", plan_path)
        budgets = json.loads(plan_path.read_text())["plan"]["budgets"]
        out = tmp_path / "strat.json"
        code, _, _ = run(capsys, "select", "--data", data_path(workdir),
                         "--method", "kcenter", "--budget", "12",
                         "--plan", plan_path, "--out", out)
        assert code == 0
        sel = load_selection(out)
        assert sel.method == "stratified+kcenter"
        np.testing.assert_array_equal(sel.per_class_counts, budgets)

    def test_zero_budget_invalid(self, workdir, tmp_path, capsys):
        code, _, stderr = run(capsys, "select", "--data", data_path(workdir),
                              "--method", "flrbf", "--budget", "0",
                              "--out", tmp_path / "x.json")
        assert code == 2
        assert stderr.startswith("error[invalid-input]:")

    def test_budget_beyond_dataset_is_infeasible(self, workdir, tmp_path, capsys):
        code, _, stderr = run(capsys, "select", "--data", data_path(workdir),
                              "--method", "sgs", "--k", "0.5",
                              "--budget", "100000", "--out", tmp_path / "x.json")
        assert code == 3
        assert stderr.startswith("error[infeasible]:")


class TestSweep:
    def test_rows_and_header(self, workdir, tmp_path, capsys):
        out = tmp_path / "sweep.csv"
        code, _, _ = run(capsys, "sweep", "--data", data_path(workdir),
                         "--budgets", "12,16", "--k", "0.0,1.0",
                         "--method", "kcenter", "--out", out)
        assert code == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "k,budget,oa,macc,seed"
        assert len(lines) == 5
        k, budget, oa, macc, seed = lines[1].split(",")
        assert (float(k), int(budget)) == (0.0, 12)
        assert 0.0 <= float(oa) <= 1.0
        assert 0.0 <= float(macc) <= 1.0


class TestReweighDiagnose:
    def test_reweigh_reaches_uniform_prior(self, workdir, tmp_path, capsys):
        sel_path = tmp_path / "sel.json"
        run(capsys, "select", "--data", data_path(workdir), "--method", "sgs",
            "--k", "1.0", "--budget", "12", "--base-method", "kcenter",
            "--out", sel_path)
        rw_path = tmp_path / "rw.json"
        code, _, _ = run(capsys, "reweigh", "--data", data_path(workdir),
                         "--selection", sel_path, "--out", rw_path)
        assert code == 0
        diag_path = tmp_path / "diag.json"
        code, _, _ = run(capsys, "diagnose", "--data", data_path(workdir),
                         "--selection", rw_path, "--out", diag_path)
        assert code == 0
        diag = json.loads(diag_path.read_text())["diagnostics"]
        assert diag["tv"] <= 1e-12
        assert diag["term_b_bound"] <= 1e-11
        assert sum(diag["selected_per_class"]) == 12

    def test_diagnose_reports_mismatch(self, workdir, tmp_path, capsys):
        sel_path = tmp_path / "sel.json"
        run(capsys, "select", "--data", data_path(workdir), "--method",
            "kcenter", "--budget", "10", "--out", sel_path)
        diag_path = tmp_path / "d.json"
        run(capsys, "diagnose", "--data", data_path(workdir), "--selection",
            sel_path, "--prior", "empirical", "--bound", "2.0",
            "--out", diag_path)
        diag = json.loads(diag_path.read_text())["diagnostics"]
        assert diag["term_b_bound"] == pytest.approx(2 * 2.0 * diag["tv"])


class TestAudit:
    def test_report_fields(self, workdir, tmp_path, capsys):
        sel_path = tmp_path / "sel.json"
        run(capsys, "select", "--data", data_path(workdir), "--method",
            "kcenter", "--budget", "10", "--out", sel_path)
        out = tmp_path / "audit.json"
        code, _, _ = run(capsys, "audit", "--data", data_path(workdir),
                         "--kind", "center_dist", "--selection", sel_path,
                         "--out", out)
        assert code == 0
        audit = json.loads(out.read_text())["audit"]
        assert set(audit) == {"pearson_rho", "r_squared", "overlap",
                              "selection_imbalance_ratio",
                              "per_class_mean_magnitude",
                              "zero_selection_classes"}
        assert audit["selection_imbalance_ratio"] is not None
        assert audit["r_squared"] == pytest.approx(audit["pearson_rho"] ** 2)

    def test_without_selection(self, workdir, tmp_path, capsys):
        out = tmp_path / "audit.json"
        code, _, _ = run(capsys, "audit", "--data", data_path(workdir),
                         "--kind", "entropy", "--head", workdir / "head.json",
                         "--out", out)
        assert code == 0
        assert json.loads(out.read_text())["audit"]["selection_imbalance_ratio"] is None


class TestEval:
    def test_metrics_in_range(self, workdir, tmp_path, capsys):
        out = tmp_path / "eval.json"
        code, _, _ = run(capsys, "eval", "--data", data_path(workdir),
                         "--head", workdir / "head.json", "--out", out)
        assert code == 0
        ev = json.loads(out.read_text())["eval"]
        assert 0.0 <= ev["macc"] <= 1.0
        assert 0.0 <= ev["oa"] <= 1.0
        assert len(ev["per_class_accuracy"]) == 4


class TestKdCheck:
    def test_probe_passes(self, tmp_path, capsys):
        out = tmp_path / "kd.json"
        code, _, _ = run(capsys, "kd-check", "--samples", "9", "--classes", "3",
                         "--out", out)
        assert code == 0
        kd = json.loads(out.read_text())["kd_check"]
        assert kd["passed"] is True
        assert kd["hard_label_gap"] == pytest.approx(0.6)
        assert kd["max_gap_a"] <= 1e-4 and kd["max_gap_b"] <= 1e-4


class TestDeterminism:
    def test_repeat_runs_byte_identical(self, workdir, tmp_path, capsys):
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        for out in (a, b):
            run(capsys, "select", "--data", data_path(workdir), "--method",
                "sgs", "--k", "0.4", "--budget", "14", "--seed", "9",
                "--out", out)
        # artifacts embed no paths of their own, so bytes must match exactly
        assert a.read_text().replace("a.json", "X") == \
            b.read_text().replace("b.json", "X")

    def test_threads_flag_never_changes_bytes(self, workdir, tmp_path, capsys):
        a, b = tmp_path / "t1.json", tmp_path / "t4.json"
        for out, threads in ((a, "1"), (b, "4")):
            run(capsys, "select", "--data", data_path(workdir), "--method",
                "flrbf", "--budget", "12", "--threads", threads, "--out", out)
        assert a.read_text().replace("t1.json", "X") == \
            b.read_text().replace("t4.json", "X")

    def test_threads_env_default(self, workdir, tmp_path, capsys, monkeypatch):
        monkeypatch.setenv("TAILPRUNE_THREADS", "4")
        out = tmp_path / "env.json"
        code, _, _ = run(capsys, "select", "--data", data_path(workdir),
                         "--method", "kcenter", "--budget", "8", "--out", out)
        assert code == 0
        assert "threads" not in json.loads(out.read_text())["config"]

    def test_config_embedded(self, workdir, tmp_path, capsys):
        out = tmp_path / "sel.json"
        run(capsys, "select", "--data", data_path(workdir), "--method",
            "kcenter", "--budget", "8", "--seed", "5", "--out", out)
        config = json.loads(out.read_text())["config"]
        assert config["subcommand"] == "select"
        assert config["seed"] == 5
        assert config["method"] == "kcenter"


class TestErrorPaths:
    def test_corrupt_dataset(self, tmp_path, capsys):
        bad = tmp_path / "bad.emb"
        bad.write_bytes(b"NOPE" + b"\x00" * 40)
        code, _, stderr = run(capsys, "score", "--data", bad, "--kind",
                              "center_dist", "--out", tmp_path / "s.csv")
        assert code == 2
        assert stderr.startswith("error[invalid-input]:")

    def test_missing_file(self, tmp_path, capsys):
        code, _, stderr = run(capsys, "score", "--data", tmp_path / "nope.emb",
                              "--kind", "center_dist", "--out", tmp_path / "s.csv")
        assert code == 2


class TestConsoleScript:
    def test_entry_point_runs(self, tmp_path):
        exe = shutil.which("tailprune")
        assert exe, "console script not installed"
        out = tmp_path / "d.emb"
        proc = subprocess.run(
            [exe, "generate", "--classes", "3", "--ratio", "4",
             "--head-count", "10", "--dims", "3", "--out", str(out)],
            capture_output=True, text=True, timeout=120)
        assert proc.returncode == 0
        assert proc.stdout == f"{out}\n"
        assert load_dataset(out).num_classes == 3
