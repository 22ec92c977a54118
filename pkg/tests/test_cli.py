"""Config parsing, command wiring, artifacts, determinism, error paths."""

import json

import numpy as np
import pytest

from triggerlab import cli, engine


def write_config(tmp_path, extra="", **overrides):
    """Small, fast synthetic run; override sections by appending raw INI text."""
    base = f"""
[run]
master_seed = {overrides.get('master_seed', 5)}
output_dir = {tmp_path / 'out'}

[data]
source = synthetic
synth_per_class = 40
subset = 300
test_subset = 80

[trigger]
intensity = 1.0
train_lo = 0.5
train_hi = 1.0
train_steps = 2
infer_lo = 0.5
infer_hi = 1.0
infer_steps = 2

[poison]
rate = 0.1

[train]
epochs = 1
batch_size = 16
lr = 0.02
momentum = 0.9
"""
    path = tmp_path / "run.ini"
    path.write_text(base + extra)
    return path


class TestConfig:
    def test_defaults_without_file(self):
        cfg = cli.load_config(None)
        assert cfg["train"]["epochs"] == 2
        assert cfg["poison"]["rate"] == 0.05

    def test_unknown_key_rejected(self, tmp_path):
        path = tmp_path / "bad.ini"
        path.write_text("[train]\nnonsense = 1\n")
        with pytest.raises(cli.ConfigError, match="nonsense"):
            cli.load_config(path)

    def test_unknown_section_rejected(self, tmp_path):
        path = tmp_path / "bad.ini"
        path.write_text("[wat]\nx = 1\n")
        with pytest.raises(cli.ConfigError, match="wat"):
            cli.load_config(path)

    def test_bad_type_reported(self, tmp_path):
        path = tmp_path / "bad.ini"
        path.write_text("[train]\nepochs = soon\n")
        with pytest.raises(cli.ConfigError, match="epochs"):
            cli.load_config(path)

    def test_missing_file_reported(self, tmp_path):
        with pytest.raises(cli.ConfigError, match="not found"):
            cli.load_config(tmp_path / "nope.ini")

    def test_missing_idx_path_named(self, tmp_path):
        path = tmp_path / "idx.ini"
        path.write_text("[data]\nsource = idx\n"
                        "train_images = /nonexistent/t.idx\n"
                        "train_labels = /nonexistent/tl.idx\n"
                        "test_images = /nonexistent/s.idx\n"
                        "test_labels = /nonexistent/sl.idx\n")
        with pytest.raises(cli.ConfigError, match="/nonexistent/t.idx"):
            cli.load_datasets(cli.load_config(path))


class TestGradcheckCommand:
    def test_exit_zero(self, capsys):
        assert cli.main(["gradcheck", "--seed", "3"]) == 0
        assert "gradient error" in capsys.readouterr().out


class TestReportCommand:
    def test_empty_directory(self, tmp_path, capsys):
        assert cli.main(["report", str(tmp_path)]) == 0
        assert "nothing to report" in capsys.readouterr().out

    def test_missing_directory(self, tmp_path, capsys):
        assert cli.main(["report", str(tmp_path / "gone")]) == 1


@pytest.mark.slow
class TestWorkflowCommands:
    def test_poison_emits_idx_and_csv(self, tmp_path):
        config = write_config(tmp_path)
        assert cli.main(["poison", str(config)]) == 0
        out = tmp_path / "out" / "poison"
        assert (out / "poisoned-images.idx").exists()
        assert (out / "poison.csv").read_text().startswith("index,family,intensity")
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["poisoned_count"] == 30
        assert manifest["config"]["train"]["epochs"] == 1  # defaults all logged

    def test_train_eval_round_trip(self, tmp_path, capsys):
        config = write_config(tmp_path)
        assert cli.main(["train", str(config)]) == 0
        ckpt = tmp_path / "out" / "train" / "model.ckpt"
        assert ckpt.exists()
        assert cli.main(["eval", str(config), "--checkpoint", str(ckpt)]) == 0
        eval_csv = (tmp_path / "out" / "eval" / "eval.csv").read_text()
        assert "clean_accuracy" in eval_csv and "asr" in eval_csv

    def test_sweep_artifacts_and_determinism(self, tmp_path, capsys):
        config = write_config(tmp_path)
        assert cli.main(["sweep", str(config)]) == 0
        out = tmp_path / "out" / "sweep"
        grid1 = (out / "grid.csv").read_bytes()
        assert (out / "regions.csv").exists()
        assert (out / "heatmap.pgm").read_bytes().startswith(b"P5\n")
        assert json.loads((out / "manifest.json").read_text())["status"] == "complete"
        assert cli.main(["sweep", str(config)]) == 0
        assert (out / "grid.csv").read_bytes() == grid1

        assert cli.main(["report", str(tmp_path / "out")]) == 0
        assert "sweep quadrants" in capsys.readouterr().out

    def test_mix_and_report(self, tmp_path, capsys):
        config = write_config(tmp_path)
        assert cli.main(["mix", str(config)]) == 0
        out = tmp_path / "out" / "mix"
        lines = (out / "mix.csv").read_text().splitlines()
        assert lines[0] == "infer_intensity,single_asr,mixed_asr"
        assert len(lines) == 3
        assert cli.main(["report", str(tmp_path / "out")]) == 0
        assert "intensity mixing" in capsys.readouterr().out

    def test_defend_requires_defenses_and_checkpoint(self, tmp_path, capsys):
        config = write_config(tmp_path, extra="\n[defend]\ndefenses =\n")
        ckpt = tmp_path / "model.ckpt"
        engine.save_checkpoint(engine.CnnModel.init(seed=0), ckpt)
        assert cli.main(["defend", str(config), "--checkpoint", str(ckpt)]) == 1
        assert "no defenses" in capsys.readouterr().err

        config2 = write_config(tmp_path)
        junk = tmp_path / "junk.ckpt"
        junk.write_bytes(b"GARBAGE" + b"\x00" * 32)
        assert cli.main(["defend", str(config2), "--checkpoint", str(junk)]) == 1
        assert "magic" in capsys.readouterr().err

    def test_defend_writes_report(self, tmp_path):
        config = write_config(
            tmp_path,
            extra="\n[defend]\ndefenses = strip,scale_up,spectral,clustering\n"
                  "strip_overlays = 8\neval_samples = 40\n")
        assert cli.main(["train", str(config)]) == 0
        ckpt = tmp_path / "out" / "train" / "model.ckpt"
        assert cli.main(["defend", str(config), "--checkpoint", str(ckpt)]) == 0
        report = (tmp_path / "out" / "defend" / "defense_report.csv").read_text()
        assert report.startswith("defense,train_intensity,infer_intensity")
        assert "strip" in report and "scale_up" in report
        assert "spectral" in report and "clustering" in report

    def test_analyze_writes_separation(self, tmp_path, capsys):
        config = write_config(tmp_path, extra="\n[analyze]\nintensities = 0.5,1.0\n")
        assert cli.main(["train", str(config)]) == 0
        ckpt = tmp_path / "out" / "train" / "model.ckpt"
        assert cli.main(["analyze", str(config), "--checkpoint", str(ckpt)]) == 0
        out = tmp_path / "out" / "analyze"
        sep = (out / "separation.csv").read_text().splitlines()
        assert sep[0] == "intensity,separation"
        assert len(sep) == 3
        acts = (out / "activations.csv").read_text().splitlines()
        assert acts[0] == "sample_id,is_poisoned,intensity,neuron_id,activation"

    def test_clean_training_when_rate_zero(self, tmp_path):
        config = write_config(tmp_path, extra="\n# clean model\n")
        text = config.read_text().replace("rate = 0.1", "rate = 0")
        config.write_text(text)
        assert cli.main(["train", str(config)]) == 0
