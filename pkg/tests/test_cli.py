import json
import subprocess
import sys

import pytest

from memefuse.cli import main

import fixtures


@pytest.fixture()
def fixture_run(tmp_path):
    dataset = fixtures.build_fixture(tmp_path / "fx", n_memes=9, seed=2)
    config = {
        "model": fixtures.fixture_config().to_dict(),
        "train": {"epochs": 2, "seed": 4, "batch_size": 4},
        "task": "sentiment",
    }
    config_path = tmp_path / "run.json"
    config_path.write_text(json.dumps(config))
    return tmp_path, dataset, config_path


def run_cli(*argv):
    return main(list(argv))


class TestGradcheckCommand:
    def test_passes_and_prints_error(self, capsys):
        assert run_cli("gradcheck", "--seed", "7") == 0
        out = capsys.readouterr().out
        assert "overall" in out and "max relative error" in out


class TestTrainCommand:
    def test_writes_artifacts(self, fixture_run):
        tmp_path, dataset, config_path = fixture_run
        out = tmp_path / "run1"
        code = run_cli("train", "--config", str(config_path),
                       "--data", str(dataset), "--out", str(out))
        assert code == 0
        assert (out / "checkpoint.bin").exists()
        assert (out / "train_log.jsonl").exists()
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["command"] == "train"
        assert manifest["task"] == "sentiment"
        log_lines = (out / "train_log.jsonl").read_text().splitlines()
        record = json.loads(log_lines[0])
        assert {"epoch", "step", "lr", "loss", "accuracy"} <= set(record)

    def test_identical_seeds_identical_outputs(self, fixture_run):
        tmp_path, dataset, config_path = fixture_run
        outs = []
        for name in ("a", "b"):
            out = tmp_path / name
            assert run_cli("train", "--config", str(config_path),
                           "--data", str(dataset), "--out", str(out)) == 0
            outs.append(out)
        assert (outs[0] / "checkpoint.bin").read_bytes() == \
            (outs[1] / "checkpoint.bin").read_bytes()
        assert (outs[0] / "train_log.jsonl").read_bytes() == \
            (outs[1] / "train_log.jsonl").read_bytes()

    def test_rerun_from_manifest_reproduces(self, fixture_run):
        tmp_path, dataset, config_path = fixture_run
        first = tmp_path / "first"
        assert run_cli("train", "--config", str(config_path),
                       "--data", str(dataset), "--out", str(first)) == 0
        second = tmp_path / "second"
        assert run_cli("train", "--config", str(first / "manifest.json"),
                       "--out", str(second)) == 0
        assert (first / "checkpoint.bin").read_bytes() == \
            (second / "checkpoint.bin").read_bytes()


class TestEvaluatePredictExport:
    @pytest.fixture()
    def trained(self, fixture_run):
        tmp_path, dataset, config_path = fixture_run
        out = tmp_path / "trained"
        assert run_cli("train", "--config", str(config_path),
                       "--data", str(dataset), "--out", str(out)) == 0
        return tmp_path, dataset, out / "checkpoint.bin"

    def test_evaluate_prints_report(self, trained, capsys):
        tmp_path, dataset, ckpt = trained
        assert run_cli("evaluate", "--checkpoint", str(ckpt),
                       "--data", str(dataset)) == 0
        report = json.loads(capsys.readouterr().out)
        assert report["task"] == "sentiment"
        assert set(report["heads"]) == {"sentiment"}
        assert 0.0 <= report["heads"]["sentiment"]["macro_f1"] <= 1.0

    def test_predict_writes_probabilities(self, trained, capsys):
        tmp_path, dataset, ckpt = trained
        out = tmp_path / "preds"
        assert run_cli("predict", "--checkpoint", str(ckpt),
                       "--data", str(dataset), "--out", str(out)) == 0
        lines = (out / "predictions.jsonl").read_text().splitlines()
        assert len(lines) == 9
        record = json.loads(lines[0])
        head = record["predictions"]["sentiment"]
        assert len(head["probabilities"]) == 3
        assert sum(head["probabilities"]) == pytest.approx(1.0, abs=1e-9)

    def test_export_attention_fields(self, trained):
        tmp_path, dataset, ckpt = trained
        out = tmp_path / "attn"
        assert run_cli("export-attention", "--checkpoint", str(ckpt),
                       "--data", str(dataset), "--out", str(out)) == 0
        record = json.loads(
            (out / "attention.jsonl").read_text().splitlines()[0])
        seg = record["segments"][0]
        assert {"text_attention", "visual_attention", "gamma", "s_text",
                "s_visual", "relevance"} <= set(seg)
        assert "segment_attention" in record
        assert seg["s_text"] + seg["s_visual"] == pytest.approx(1.0, abs=1e-9)


class TestConvertCommand:
    def test_convert(self, tmp_path, capsys):
        csv_path = tmp_path / "raw.csv"
        csv_path.write_text(
            "image_name,text_ocr,text_corrected,humour,sarcasm,offensive,"
            "motivational,overall_sentiment\n"
            "m1.jpg,hi there,hi there,funny,general,not_offensive,"
            "not_motivational,positive\n")
        out = tmp_path / "converted.jsonl"
        assert run_cli("convert-dataset", "--csv", str(csv_path),
                       "--out", str(out)) == 0
        assert json.loads(capsys.readouterr().out) == {"written": 1, "skipped": 0}


class TestExitCodes:
    def test_usage_error(self, capsys):
        # train without --task
        assert run_cli("train", "--data", "x.jsonl", "--out", "y") == 1

    def test_data_error(self, tmp_path):
        assert run_cli("train", "--task", "sentiment",
                       "--data", str(tmp_path / "missing.jsonl"),
                       "--out", str(tmp_path / "out")) == 2

    def test_console_entry_point(self):
        proc = subprocess.run(
            [sys.executable, "-m", "memefuse.cli", "--help"],
            capture_output=True, text=True)
        assert proc.returncode == 0
        assert "gradcheck" in proc.stdout
