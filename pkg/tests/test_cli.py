import json
import os
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from kgic.cli import load_config, main, parse_backend_spec, parse_bool
from kgic.graph import SplitSet

REPO = Path(__file__).resolve().parent.parent

TOY_TRIPLES = """\
h1\tr1\tt1
h1\tr2\tt2
h2\tr1\tt1
h2\tr2\tt3
h1\tr1\tt3
h2\tr2\tt2
"""

TOY_META = """\
h1\tperson\tfirst person
h2\tperson\tsecond person
"""


@pytest.fixture
def toy_dataset(tmp_path):
    triples = tmp_path / "triples.tsv"
    triples.write_text(TOY_TRIPLES)
    meta = tmp_path / "meta.tsv"
    meta.write_text(TOY_META)
    return tmp_path, triples, meta


@pytest.fixture
def ingested(toy_dataset, capsys):
    tmp_path, triples, meta = toy_dataset
    assert main(["ingest", "--triples", str(triples), "--metadata", str(meta),
                 "--out", str(tmp_path)]) == 0
    capsys.readouterr()
    graph_path = tmp_path / "graph.json.gz"
    # hand split matching the fixture design: train 0-2, valid 3, test 4-5
    split = SplitSet(np.array([0, 1, 2]), np.array([3]), np.array([4, 5]))
    split_path = tmp_path / "split.json"
    split.save(str(split_path))
    return tmp_path, graph_path, split_path


class TestIngest:
    def test_prints_dataset_statistics(self, toy_dataset, capsys):
        tmp_path, triples, meta = toy_dataset
        assert main(["ingest", "--triples", str(triples), "--metadata", str(meta),
                     "--out", str(tmp_path)]) == 0
        out = capsys.readouterr().out
        assert "entities: 5, relations: 2, facts: 6" in out
        assert (tmp_path / "graph.json.gz").exists()

    def test_missing_file_is_runtime_error(self, tmp_path, capsys):
        assert main(["ingest", "--triples", str(tmp_path / "nope.tsv")]) == 1


class TestSplit:
    def test_deterministic_fingerprint(self, ingested, capsys):
        tmp_path, graph_path, _ = ingested
        fingerprints = []
        for run in ("a", "b"):
            out_dir = tmp_path / run
            assert main(["split", "--graph", str(graph_path), "--seed", "7",
                         "--out", str(out_dir)]) == 0
            out = capsys.readouterr().out
            fingerprints.append(next(l for l in out.splitlines() if l.startswith("fingerprint:")))
        assert fingerprints[0] == fingerprints[1]

    def test_different_seed_changes_fingerprint(self, tmp_path, capsys):
        triples = tmp_path / "big.tsv"
        triples.write_text("".join(f"h{i % 10}\tr\tt{i}\n" for i in range(60)))
        meta = tmp_path / "meta.tsv"
        meta.write_text("".join(f"h{i}\ttype{i % 3}\t\n" for i in range(10)))
        assert main(["ingest", "--triples", str(triples), "--metadata", str(meta),
                     "--out", str(tmp_path)]) == 0
        capsys.readouterr()
        outs = []
        for seed in ("1", "2"):
            out_dir = tmp_path / f"s{seed}"
            assert main(["split", "--graph", str(tmp_path / "graph.json.gz"),
                         "--seed", seed, "--out", str(out_dir)]) == 0
            outs.append(capsys.readouterr().out)
        fp = [next(l for l in o.splitlines() if l.startswith("fingerprint:")) for o in outs]
        assert fp[0] != fp[1]


class TestKgePath:
    def test_train_and_eval(self, ingested, capsys):
        tmp_path, graph_path, split_path = ingested
        ckpt = tmp_path / "transe.kge"
        assert main(["train-kge", "--graph", str(graph_path), "--split", str(split_path),
                     "--model", "transe", "--dim", "8", "--epochs", "30", "--lr", "0.1",
                     "--seed", "3", "--out", str(ckpt)]) == 0
        capsys.readouterr()
        report = tmp_path / "lp.json"
        assert main(["eval-lp", "--graph", str(graph_path), "--split", str(split_path),
                     "--checkpoint", str(ckpt), "--report", str(report)]) == 0
        out = capsys.readouterr().out
        assert "Hits@1" in out and "filtered" in out
        payload = json.loads(report.read_text())
        assert payload["task"] == "link-prediction"
        assert set(payload["hits"]) == {"1", "5", "10"}
        assert payload["split_fingerprint"]
        assert payload["config"]["model"] == "transe"

    def test_jobs_parallelism_matches_serial(self, ingested, capsys):
        tmp_path, graph_path, split_path = ingested
        ckpt = tmp_path / "t2.kge"
        assert main(["train-kge", "--graph", str(graph_path), "--split", str(split_path),
                     "--model", "rotate", "--dim", "8", "--epochs", "20", "--out", str(ckpt)]) == 0
        capsys.readouterr()
        outputs = []
        for jobs in ("1", "3"):
            assert main(["eval-lp", "--graph", str(graph_path), "--split", str(split_path),
                         "--checkpoint", str(ckpt), "--jobs", jobs]) == 0
            outputs.append(capsys.readouterr().out)
        assert outputs[0] == outputs[1]

    def test_checkpoint_split_mismatch_fails(self, ingested, capsys):
        tmp_path, graph_path, split_path = ingested
        ckpt = tmp_path / "t.kge"
        assert main(["train-kge", "--graph", str(graph_path), "--split", str(split_path),
                     "--model", "transe", "--dim", "8", "--epochs", "2", "--out", str(ckpt)]) == 0
        other = SplitSet(np.array([0, 1, 3]), np.array([2]), np.array([4, 5]))
        other_path = tmp_path / "other_split.json"
        other.save(str(other_path))
        assert main(["eval-lp", "--graph", str(graph_path), "--split", str(other_path),
                     "--checkpoint", str(ckpt)]) == 1


class TestPropertyPath:
    def test_predict_props_writes_tsvs(self, ingested, capsys):
        tmp_path, graph_path, split_path = ingested
        out_dir = tmp_path / "props"
        assert main(["predict-props", "--graph", str(graph_path), "--split", str(split_path),
                     "--method", "recoin", "--threshold", "0.75", "--out", str(out_dir)]) == 0
        scores = (out_dir / "scores.tsv").read_text().splitlines()
        assert len(scores) == 4  # 2 test heads x 2 relations
        assert scores[0].split("\t")[0] == "h1"
        selected = (out_dir / "selected.tsv").read_text().splitlines()
        assert selected == ["h1\tr1", "h2\tr1"]

    def test_eval_pp_hand_numbers(self, ingested, capsys):
        tmp_path, graph_path, split_path = ingested
        report = tmp_path / "pp.json"
        assert main(["eval-pp", "--graph", str(graph_path), "--split", str(split_path),
                     "--method", "recoin", "--threshold", "0.75", "--report", str(report)]) == 0
        payload = json.loads(report.read_text())
        # both heads predict {r1}; gold h1 -> {r1}, h2 -> {r2}: P = R = F1 = 0.5
        assert payload["precision"] == pytest.approx(0.5)
        assert payload["recall"] == pytest.approx(0.5)
        assert payload["f1"] == pytest.approx(0.5)

    def test_remote_method_via_env_var(self, ingested, capsys, tmp_path, monkeypatch):
        _, graph_path, split_path = ingested
        mock_config = {
            "vocab": ["x", "</s>"],
            "relations": ["r1", "r2"],
            "contexts": [],
            "default_probs": None,
            "property_scores": {},
            "default_property_scores": {"r1": 1.0, "r2": 0.25},
        }
        cfg_path = tmp_path / "mock.json"
        cfg_path.write_text(json.dumps(mock_config))
        monkeypatch.setenv(
            "KGIC_BACKEND",
            f"stdio:{sys.executable} -m kgic.mockserver --config {cfg_path}",
        )
        report = tmp_path / "pp_remote.json"
        assert main(["eval-pp", "--graph", str(graph_path), "--split", str(split_path),
                     "--method", "remote", "--threshold", "0.5", "--report", str(report)]) == 0
        payload = json.loads(report.read_text())
        # every head predicts exactly {r1}: same confusion counts as recoin
        assert payload["f1"] == pytest.approx(0.5)


class TestInstanceCompletionPath:
    def _run(self, ingested, stage_two, extra=()):
        tmp_path, graph_path, split_path = ingested
        args = ["run-ic", "--graph", str(graph_path), "--split", str(split_path),
                "--stage-one", "recoin", "--stage-two", stage_two,
                "--threshold", "0.75", "--out", str(tmp_path / "run")]
        args += list(extra)
        assert main(args) == 0
        return tmp_path, graph_path, split_path

    def test_run_and_eval_with_transe(self, ingested, capsys):
        tmp_path, graph_path, split_path = ingested
        ckpt = tmp_path / "t.kge"
        assert main(["train-kge", "--graph", str(graph_path), "--split", str(split_path),
                     "--model", "transe", "--dim", "8", "--epochs", "50", "--lr", "0.1",
                     "--out", str(ckpt)]) == 0
        self._run(ingested, "transe", ["--checkpoint", str(ckpt)])
        capsys.readouterr()
        report = tmp_path / "ic.json"
        assert main(["eval-ic", "--graph", str(graph_path), "--split", str(split_path),
                     "--run", str(tmp_path / "run" / "run.json"), "--report", str(report)]) == 0
        out = capsys.readouterr().out
        assert "pair precision: 0.5000" in out
        assert "coverage:       0.5000" in out
        payload = json.loads(report.read_text())
        assert payload["counts"]["n_predicted_pairs"] == 2
        assert payload["config"]["stage_two"] == "transe"
        predictions = (tmp_path / "run" / "predictions.tsv").read_text().splitlines()
        assert all(len(line.split("\t")) == 5 for line in predictions)

    def test_run_with_generative_local_mock(self, ingested, capsys):
        tmp_path, graph_path, split_path = ingested
        self._run(ingested, "generative-local-mock")
        run = json.loads((tmp_path / "run" / "run.json").read_text())
        assert run["completion"]["method"] == "generative-local-mock"
        assert len(run["candidates"]["pairs"]) == 2

    def test_eval_ic_split_mismatch_fails(self, ingested, capsys):
        tmp_path, graph_path, split_path = ingested
        self._run(ingested, "generative-local-mock")
        other = SplitSet(np.array([0, 1, 3]), np.array([2]), np.array([4, 5]))
        other_path = tmp_path / "other.json"
        other.save(str(other_path))
        assert main(["eval-ic", "--graph", str(graph_path), "--split", str(other_path),
                     "--run", str(tmp_path / "run" / "run.json")]) == 1


class TestAblate:
    def test_four_rows(self, ingested, capsys):
        tmp_path, graph_path, split_path = ingested
        report = tmp_path / "ablate.json"
        assert main(["ablate", "--graph", str(graph_path), "--split", str(split_path),
                     "--stage-one", "recoin", "--stage-two", "generative-local-mock",
                     "--threshold", "0.75", "--report", str(report)]) == 0
        out = capsys.readouterr().out
        for label in ("with types & description", "w/o types", "w/o description",
                      "w/o types, w/o description"):
            assert label in out
        payload = json.loads(report.read_text())
        assert len(payload) == 4


class TestConfigFile:
    def test_flags_override_config(self, ingested, capsys, tmp_path):
        _, graph_path, split_path = ingested
        cfg = tmp_path / "run.cfg"
        cfg.write_text(f"graph = {graph_path}\nsplit = {split_path}\n"
                       "method = recoin\nthreshold = 0.1\n")
        assert main(["eval-pp", "--config", str(cfg), "--threshold", "0.75"]) == 0
        out = capsys.readouterr().out
        assert "threshold: 0.75" in out

    def test_config_supplies_missing_flags(self, ingested, capsys, tmp_path):
        _, graph_path, split_path = ingested
        cfg = tmp_path / "run.cfg"
        cfg.write_text(f"graph = {graph_path}\nsplit = {split_path}\n"
                       "method = recoin\nthreshold = 0.75\n")
        assert main(["eval-pp", "--config", str(cfg)]) == 0

    def test_malformed_config_is_exit_2(self, tmp_path, capsys):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("just some words\n")
        assert main(["eval-pp", "--config", str(cfg)]) == 2

    def test_load_config_parses_pairs(self, tmp_path):
        cfg = tmp_path / "x.cfg"
        cfg.write_text("# comment\nseed = 3\nstage-one = recoin\n\n")
        assert load_config(str(cfg)) == {"seed": "3", "stage_one": "recoin"}

    def test_parse_bool(self):
        assert parse_bool("true") and parse_bool("1")
        assert not parse_bool("false") and not parse_bool("off")
        with pytest.raises(ValueError):
            parse_bool("maybe")


class TestExitCodes:
    def test_usage_error_is_exit_2(self):
        proc = subprocess.run(
            [sys.executable, "-m", "kgic.cli", "split", "--no-such-flag"],
            capture_output=True, cwd=str(REPO),
        )
        assert proc.returncode == 2

    def test_runtime_error_is_exit_1(self, tmp_path):
        proc = subprocess.run(
            [sys.executable, "-m", "kgic.cli", "split", "--graph", str(tmp_path / "missing.gz")],
            capture_output=True, cwd=str(REPO),
        )
        assert proc.returncode == 1

    def test_success_is_exit_0(self, toy_dataset):
        tmp_path, triples, meta = toy_dataset
        proc = subprocess.run(
            [sys.executable, "-m", "kgic.cli", "ingest", "--triples", str(triples),
             "--metadata", str(meta), "--out", str(tmp_path)],
            capture_output=True, cwd=str(REPO),
        )
        assert proc.returncode == 0
