import json
import math
import subprocess
import sys

import numpy as np
import pytest

from sublin.cli import main
from sublin.instance import load_dataset


def run(argv, capsys):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def record(argv, capsys):
    code, out, err = run(argv, capsys)
    assert code == 0, err
    return json.loads(out) if out else None


def strip_time(rec: dict) -> dict:
    return {k: v for k, v in rec.items() if k != "wall_time"}


@pytest.fixture
def labeled_csv(tmp_path):
    gen = np.random.default_rng(0)
    pts = gen.uniform(-1, 1, size=(12, 3))
    pts[:, 0] = np.abs(pts[:, 0]) + 0.5
    labels = np.where(gen.random(12) < 0.5, 1.0, -1.0)
    p = tmp_path / "data.csv"
    p.write_text("".join(f"{int(y)},{','.join(repr(float(v)) for v in x * y)}\n" for x, y in zip(pts, labels)))
    return p


class TestTrain:
    def test_case2_sqrt_n(self, capsys):
        rec = record(["train", "--instance", "case2:n=64,d=8,l=3", "--eps", 0.04, "--budget", "sqrt-n",
                      "--seed", 7], capsys)
        assert rec["command"] == "train" and rec["seed"] == 7 and rec["status"] == "ok"
        assert rec["audits"]["margin"] >= 0.667
        assert rec["audits"]["contract"] is True
        assert rec["ledger"]["charged_queries"] == sum(v for k, v in rec["ledger"].items() if k != "charged_queries")
        assert set(rec["classifier"]) == {"T", "scale", "picks", "norms"}
        assert rec["config"]["cost"]["c_dh"] == 22.5

    def test_best_of_repeats_on_file(self, labeled_csv, capsys):
        rec = record(["train", "--data", labeled_csv, "--labeled", "--eps", 0.1, "--repeats", 9, "--seed", 1], capsys)
        margins = rec["audits"]["repeat_margins"]
        assert len(margins) == 9
        assert rec["audits"]["margin"] == pytest.approx(max(margins))
        assert rec["audits"]["best_repeat"] == int(np.argmax(margins))

    def test_sqrt_d_reports_norm_estimation(self, capsys):
        rec = record(["train", "--budget", "sqrt-d", "--instance", "case2:n=16,d=256,l=5", "--eps", 0.04,
                      "--seed", 3], capsys)
        assert rec["ledger"]["norm_estimation"] > 0
        assert rec["audits"]["margin"] >= 1 / math.sqrt(2) - 0.04

    @pytest.mark.parametrize("mode", ["estimator", "explicit-feature"])
    def test_polynomial_kernel(self, labeled_csv, tmp_path, capsys, mode):
        out = tmp_path / "rec.json"
        record(["train", "--data", labeled_csv, "--labeled", "--eps", 0.2, "--kernel", "poly:2",
                "--kernel-mode", mode, "--seed", 2, "--out", out], capsys)
        rec = json.loads(out.read_text())
        assert rec["config"]["kernel"] == "poly:2"
        report = record(["verify", "--record", out], capsys)
        assert report["verified"] is True

    def test_gaussian_kernel(self, capsys):
        rec = record(["train", "--instance", "random:n=10,d=3,seed=1", "--eps", 0.3, "--kernel", "gauss:1.0",
                      "--seed", 2], capsys)
        assert rec["T"] > 0 and "margin" in rec["audits"]

    def test_cost_flags_reach_the_ledger(self, capsys):
        base = ["train", "--instance", "case2:n=16,d=4,l=2", "--eps", 0.5, "--seed", 1, "--rounds", 50]
        a = record(base, capsys)
        b = record(base + ["--cost.c_dh", 45.0], capsys)
        assert b["config"]["cost"]["c_dh"] == 45.0
        assert b["ledger"]["max_finding"] > a["ledger"]["max_finding"]

    def test_strict_contract_violation(self, capsys):
        code, out, _ = run(["train", "--instance", "case2:n=16,d=4,l=2", "--eps", 0.1, "--seed", 1,
                            "--rounds", 1, "--strict"], capsys)
        assert code == 3
        assert json.loads(out)["status"] == "contract violated"

    def test_violation_without_strict_exits_zero(self, capsys):
        code, out, _ = run(["train", "--instance", "case2:n=16,d=4,l=2", "--eps", 0.1, "--seed", 1,
                            "--rounds", 1], capsys)
        assert code == 0 and json.loads(out)["status"] == "contract violated"

    def test_strict_uses_reference_on_files(self, labeled_csv, capsys):
        rec = record(["train", "--data", labeled_csv, "--labeled", "--eps", 0.1, "--seed", 5, "--strict"], capsys)
        assert "sigma_reference" in rec["audits"]

    def test_seed_from_environment(self, monkeypatch, capsys):
        monkeypatch.setenv("SUBLIN_SEED", "42")
        rec = record(["train", "--instance", "case2:n=8,d=4,l=2", "--eps", 0.5, "--rounds", 10], capsys)
        assert rec["seed"] == 42

    def test_byte_stable(self, tmp_path, capsys):
        argv = ["train", "--instance", "case1:n=16,d=4,k=3,l=2", "--eps", 0.2, "--seed", 9]
        outs = []
        for name in ("a.json", "b.json"):
            record(argv + ["--out", tmp_path / name], capsys)
            rec = json.loads((tmp_path / name).read_text())
            rec["wall_time"] = 0.0
            outs.append(json.dumps(rec, indent=2, sort_keys=True))
        assert outs[0] == outs[1]


class TestQuadraticCommands:
    def test_meb_and_verify(self, tmp_path, capsys):
        out = tmp_path / "meb.json"
        record(["meb", "--instance", "case1:n=16,d=4,k=3,l=2", "--eps", 0.05, "--seed", 1, "--out", out], capsys)
        rec = json.loads(out.read_text())
        assert rec["audits"]["radius_sq"] <= (2 + math.sqrt(2)) / 4 + 0.05
        assert rec["audits"]["contract"] and rec["status"] == "ok"
        report = record(["verify", "--record", out], capsys)
        assert report["verified"] and report["checks"]["feasible"]

    def test_svm_and_verify(self, tmp_path, capsys):
        out = tmp_path / "svm.json"
        record(["svm", "--instance", "case2:n=16,d=4,l=2", "--eps", 0.1, "--seed", 1, "--out", out], capsys)
        rec = json.loads(out.read_text())
        assert rec["status"] == "separated"
        assert rec["audits"]["margin_lb"] >= math.sqrt(0.5 - 0.1)
        assert rec["audits"]["am_gm_holds"]
        assert record(["verify", "--record", out], capsys)["verified"]

    def test_svm_not_separated(self, tmp_path, capsys):
        data = tmp_path / "pm.csv"
        data.write_text("1,0\n-1,0\n")
        code, out, _ = run(["svm", "--data", data, "--eps", 0.1, "--seed", 1, "--strict"], capsys)
        assert code == 3
        assert json.loads(out)["status"] == "not separated at accuracy eps"

    def test_meb_sqrt_d(self, capsys):
        rec = record(["meb", "--instance", "case2:n=8,d=16,l=2", "--eps", 0.3, "--budget", "sqrt-d", "--seed", 1],
                     capsys)
        assert rec["ledger"]["norm_estimation"] > 0


class TestGame:
    def test_generator_and_verify(self, tmp_path, capsys):
        out = tmp_path / "game.json"
        record(["game", "--matrix", "antisym:n=17", "--eps", 0.2, "--seed", 3, "--trials", 3, "--out", out], capsys)
        rec = json.loads(out.read_text())
        assert rec["config"]["matrix"] == "random-antisymmetric:n=17,seed=3"
        assert len(rec["trial_records"]) == 3 and not rec["config"]["reduced"]
        assert rec["audits"]["feasible_trials"] >= 2
        report = record(["verify", "--record", out], capsys)
        assert report["verified"] and report["checks"]["trials_match"]

    def test_general_game_is_reduced(self, tmp_path, capsys):
        m = tmp_path / "pennies.csv"
        m.write_text("1,-1\n-1,1\n")
        rec = record(["game", "--matrix", m, "--eps", 0.02, "--seed", 1], capsys)
        trial = rec["trial_records"][0]
        assert rec["config"]["reduced"]
        assert trial["game_value"] == 0.0 and trial["within_18eps"]
        assert sum(trial["row_strategy"].values()) == pytest.approx(1.0)

    def test_planted(self, capsys):
        rec = record(["game", "--matrix", "zerosum:n=64,k=7", "--eps", 0.2, "--seed", 1], capsys)
        assert rec["trial_records"][0]["strategy"]["6"] >= 0.8

    def test_unknown_matrix(self, capsys):
        code, _, err = run(["game", "--matrix", "case2:n=4,d=3,l=2", "--eps", 0.1, "--seed", 1], capsys)
        assert code == 2 and "neither" in err


class TestVerify:
    def test_tampered_picks(self, tmp_path, capsys):
        out = tmp_path / "rec.json"
        record(["train", "--instance", "case2:n=16,d=4,l=2", "--eps", 0.2, "--seed", 2, "--out", out], capsys)
        assert record(["verify", "--record", out], capsys)["verified"]
        rec = json.loads(out.read_text())
        rec["classifier"]["picks"] = [0] * len(rec["classifier"]["picks"])
        out.write_text(json.dumps(rec))
        code, stdout, _ = run(["verify", "--record", out, "--strict"], capsys)
        assert code == 3 and json.loads(stdout)["verified"] is False

    def test_file_records_reload_their_data(self, labeled_csv, tmp_path, capsys):
        out = tmp_path / "rec.json"
        record(["train", "--data", labeled_csv, "--labeled", "--eps", 0.3, "--seed", 2, "--out", out], capsys)
        assert record(["verify", "--record", out], capsys)["verified"]

    def test_unreadable_record(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text("{")
        assert run(["verify", "--record", bad], capsys)[0] == 2


class TestBench:
    def test_csv_and_slope(self, tmp_path, capsys):
        code, out, err = run(["bench", "--alg", "baseline", "--sizes", "16,32", "--fixed", 4, "--eps", 0.5,
                              "--seeds", 2, "--seed", 0, "--rounds", 10], capsys)
        assert code == 0
        assert out.splitlines()[0] == "size,mean_charged_queries,std,trials"
        assert len(out.splitlines()) == 3
        assert err.startswith("slope: ")

    def test_range_and_out_file_are_byte_stable(self, tmp_path, capsys):
        texts = []
        for name in ("a.csv", "b.csv"):
            run(["bench", "--alg", "game", "--range", "3:5", "--eps", 0.3, "--seeds", 2, "--seed", 4,
                 "--out", tmp_path / name], capsys)
            texts.append((tmp_path / name).read_bytes())
        assert texts[0] == texts[1]
        assert [ln.split(",")[0] for ln in texts[0].decode().splitlines()[1:]] == ["8", "16", "32"]

    def test_d_sweep(self, capsys):
        code, out, _ = run(["bench", "--alg", "sqrt-d", "--sweep", "d", "--sizes", "16,32", "--fixed", 8,
                            "--eps", 0.5, "--seeds", 1, "--seed", 0, "--rounds", 50], capsys)
        assert code == 0 and len(out.splitlines()) == 3

    def test_single_point_warns(self, capsys):
        code, _, err = run(["bench", "--alg", "sqrt-n", "--sizes", "64", "--eps", 0.5, "--seeds", 1, "--seed", 0,
                            "--rounds", 10], capsys)
        assert code == 0
        assert "warning" in err and "slope: nan" in err

    def test_seed_is_mandatory(self, monkeypatch, capsys):
        monkeypatch.delenv("SUBLIN_SEED", raising=False)
        code, _, err = run(["bench", "--alg", "sqrt-n", "--sizes", "64", "--eps", 0.5], capsys)
        assert code == 2 and "seed" in err

    def test_malformed_sizes(self, capsys):
        assert run(["bench", "--alg", "sqrt-n", "--sizes", "a,b", "--eps", 0.5, "--seed", 1], capsys)[0] == 2


class TestGen:
    def test_roundtrip(self, tmp_path, capsys):
        out = tmp_path / "x.csv"
        assert run(["gen", "--instance", "case1:n=6,d=3,k=3,l=2", "--out", out], capsys)[0] == 0
        X = load_dataset(out)
        np.testing.assert_array_equal(X.entries[2], [1.0, 0.0, 0.0])

    def test_stdout_game(self, capsys):
        code, out, _ = run(["gen", "--instance", "zerosum:n=3,k=2"], capsys)
        assert code == 0 and out.splitlines()[1] == "1.0,0.0,1.0"


class TestErrors:
    @pytest.mark.parametrize("eps", ["0", "1.5", "-0.1"])
    def test_bad_eps(self, capsys, eps):
        assert run(["train", "--instance", "case2:n=8,d=4,l=2", "--eps", eps, "--seed", 1], capsys)[0] == 2

    def test_missing_file(self, tmp_path, capsys):
        assert run(["train", "--data", tmp_path / "none.csv", "--eps", 0.1, "--seed", 1], capsys)[0] == 2

    def test_bad_instance(self, capsys):
        assert run(["train", "--instance", "case2:n=8,d=4,l=9", "--eps", 0.1, "--seed", 1], capsys)[0] == 2

    def test_game_instance_for_train(self, capsys):
        assert run(["train", "--instance", "zerosum:n=4,k=1", "--eps", 0.1, "--seed", 1], capsys)[0] == 2

    @pytest.mark.parametrize(
        "argv",
        [
            ["train", "--eps", "0.1"],
            ["train", "--instance", "case2:n=8,d=4,l=2", "--data", "x.csv", "--eps", "0.1"],
            ["train", "--instance", "case2:n=8,d=4,l=2", "--eps", "0.1", "--budget", "sqrt-m"],
            ["frobnicate"],
        ],
    )
    def test_flag_errors_exit_two(self, argv, capsys):
        with pytest.raises(SystemExit) as exc:
            main(argv)
        assert exc.value.code == 2


def test_module_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "sublin", "gen", "--instance", "case2:n=4,d=3,l=2"],
        capture_output=True, text=True, check=True,
    )
    assert proc.stdout.splitlines()[0] == f"{-1 / math.sqrt(2)!r},{1 / math.sqrt(2)!r},0.0"
