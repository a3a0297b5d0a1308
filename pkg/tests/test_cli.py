import json
import warnings

import numpy as np
import pytest

from tagnn.cli import main


def run(argv):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return main(argv)


def read_json(path):
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


@pytest.fixture()
def synth_files(tmp_path):
    out = tmp_path / "data"
    assert run(["synth", "--n", "30", "--T", "4", "--blocks", "3", "--p-in", "0.4",
                "--p-out", "0.05", "--drift", "0.1", "--seed", "3", "--out", str(out)]) == 0
    return out


class TestSynth:
    def test_writes_files_and_config(self, synth_files):
        assert (synth_files / "edges.tsv").exists()
        assert (synth_files / "labels.tsv").exists()
        cfg = read_json(synth_files / "config.resolved.json")
        assert cfg["command"] == "synth"
        assert cfg["synth_n"] == 30 and cfg["seed"] == 3

    def test_deterministic_files(self, tmp_path):
        for sub in ("a", "b"):
            assert run(["synth", "--n", "20", "--T", "3", "--seed", "5",
                        "--out", str(tmp_path / sub)]) == 0
        assert (tmp_path / "a" / "edges.tsv").read_bytes() == (tmp_path / "b" / "edges.tsv").read_bytes()
        assert (tmp_path / "a" / "labels.tsv").read_bytes() == (tmp_path / "b" / "labels.tsv").read_bytes()


class TestAugment:
    def test_hand_instance_tsv(self, tmp_path):
        edges = tmp_path / "e.tsv"
        labels = tmp_path / "y.tsv"
        edges.write_text("0\t1\t0.0\n", encoding="utf-8")
        labels.write_text("0\t0.0\t0\n1\t0.0\t1\n", encoding="utf-8")
        out = tmp_path / "aug"
        assert run(["augment", "--edges", str(edges), "--labels", str(labels),
                    "--T", "2", "--realization", "self_evolution", "--out", str(out)]) == 0
        rows = set()
        for line in (out / "augmented.tsv").read_text().splitlines():
            if not line.startswith("#"):
                rows.add(tuple(line.split("\t")))
        expected = {("0", "0", "diagonal"), ("0", "1", "diagonal"), ("1", "0", "diagonal"),
                    ("1", "1", "diagonal"), ("2", "2", "diagonal"), ("3", "3", "diagonal"),
                    ("0", "2", "cross"), ("1", "3", "cross")}
        assert rows == expected

    def test_disentangled_writes_both_parts(self, synth_files, tmp_path):
        out = tmp_path / "aug"
        assert run(["augment", "--edges", str(synth_files / "edges.tsv"),
                    "--labels", str(synth_files / "labels.tsv"), "--T", "4",
                    "--realization", "disentangled", "--out", str(out)]) == 0
        assert (out / "augmented.structural.tsv").exists()
        assert (out / "augmented.temporal.tsv").exists()


class TestTrain:
    def _train(self, synth_files, out, extra=()):
        return run(["train", "--edges", str(synth_files / "edges.tsv"),
                    "--labels", str(synth_files / "labels.tsv"), "--T", "4",
                    "--split", "2,1,1", "--layers", "2", "--dim", "8",
                    "--epochs", "5", "--seed", "1", "--out", str(out), *extra])

    def test_outputs(self, synth_files, tmp_path):
        out = tmp_path / "run"
        assert self._train(synth_files, out) == 0
        assert (out / "checkpoint.json").exists()
        history = (out / "history.csv").read_text().splitlines()
        assert history[0] == "epoch,train_loss,val_macro_auc,lr"
        assert len(history) == 6
        assert (out / "node_map.tsv").exists()
        cfg = read_json(out / "config.resolved.json")
        assert cfg["epochs"] == 5 and cfg["split"] == [2, 1, 1]

    def test_rerun_from_resolved_config_identical(self, synth_files, tmp_path):
        first = tmp_path / "r1"
        assert self._train(synth_files, first) == 0
        second = tmp_path / "r2"
        assert run(["train", "--config", str(first / "config.resolved.json"),
                    "--out", str(second)]) == 0
        assert (first / "history.csv").read_bytes() == (second / "history.csv").read_bytes()
        assert (first / "checkpoint.json").read_bytes() == (second / "checkpoint.json").read_bytes()

    def test_split_required(self, synth_files, tmp_path):
        code = run(["train", "--edges", str(synth_files / "edges.tsv"),
                    "--labels", str(synth_files / "labels.tsv"), "--T", "4",
                    "--out", str(tmp_path / "x")])
        assert code == 1

    def test_synthetic_mode(self, tmp_path):
        out = tmp_path / "synth_train"
        assert run(["train", "--synthetic", "--n", "25", "--T", "4", "--blocks", "2",
                    "--split", "2,1,1", "--layers", "1", "--dim", "8", "--epochs", "3",
                    "--seed", "2", "--out", str(out)]) == 0
        assert (out / "checkpoint.json").exists()


class TestEval:
    def test_eval_after_train(self, synth_files, tmp_path):
        train_out = tmp_path / "run"
        assert TestTrain()._train(synth_files, train_out) == 0
        eval_out = tmp_path / "eval"
        assert run(["eval", "--checkpoint", str(train_out / "checkpoint.json"),
                    "--edges", str(synth_files / "edges.tsv"),
                    "--labels", str(synth_files / "labels.tsv"), "--T", "4",
                    "--split", "2,1,1", "--out", str(eval_out)]) == 0
        report = read_json(eval_out / "report.json")
        assert set(report) == {"train", "val", "test"}
        assert 0.0 <= report["test"]["macro_auc"] <= 1.0
        per_class = (eval_out / "per_class.csv").read_text().splitlines()
        assert per_class[0] == "split,class,auc"

    def test_missing_checkpoint_is_validation_error(self, tmp_path):
        assert run(["eval", "--split", "1,1,1", "--out", str(tmp_path / "x")]) == 1


class TestVerify:
    def test_synthetic_pass(self, tmp_path):
        out = tmp_path / "v"
        assert run(["verify", "--synthetic", "--n", "5", "--T", "3",
                    "--realization", "full", "--max-len", "3", "--seed", "0",
                    "--out", str(out)]) == 0
        report = read_json(out / "verify.json")
        assert report["injective_map_ok"] and report["reachability_ok"]


class TestGradcheck:
    def test_single_realization(self, tmp_path):
        out = tmp_path / "g"
        assert run(["gradcheck", "--seed", "1", "--realization", "self_evolution",
                    "--n", "7", "--T", "3", "--dim", "5", "--layers", "2",
                    "--out", str(out)]) == 0
        report = read_json(out / "gradcheck.json")
        assert report["max_rel_error"] < 1e-5
        assert len(report["results"]) == 4  # variant x skip grid


class TestBenchCommand:
    def test_tiny_sweep(self, tmp_path):
        out = tmp_path / "b"
        assert run(["bench", "--n", "25", "--t-values", "2,4", "--dim", "8",
                    "--layers", "1", "--epochs", "2", "--edge-prob", "0.2",
                    "--out", str(out)]) == 0
        report = read_json(out / "bench.json")
        assert len(report["points"]) == 2
        assert (out / "bench.csv").exists()


class TestErrorHandling:
    def test_unknown_flag_exits_1(self):
        assert run(["train", "--bogus-flag", "1"]) == 1

    def test_unknown_subcommand_exits_1(self):
        assert run(["frobnicate"]) == 1

    def test_unknown_config_key_rejected(self, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"not_a_key": 1}), encoding="utf-8")
        assert run(["train", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 1

    def test_missing_file_is_validation_error(self, tmp_path):
        assert run(["train", "--edges", "nope.tsv", "--labels", "nope.tsv", "--T", "2",
                    "--split", "1,1,1", "--out", str(tmp_path / "o")]) == 1  # T=2 < 3 parts

    def test_out_env_var(self, synth_files, tmp_path, monkeypatch):
        target = tmp_path / "envout"
        monkeypatch.setenv("TAGNN_OUT", str(target))
        assert run(["augment", "--edges", str(synth_files / "edges.tsv"),
                    "--labels", str(synth_files / "labels.tsv"), "--T", "4"]) == 0
        assert (target / "augmented.tsv").exists()
