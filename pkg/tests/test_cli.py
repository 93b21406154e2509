import json

import numpy as np
import pytest
from click.testing import CliRunner

from binse import audio_io, dataset as ds, dsp
from binse.cli import main
from conftest import voiced_signal


@pytest.fixture()
def runner():
    return CliRunner()


def micro_config(tmp_path, tiny_dataset, **train_overrides):
    train = {"batch_size": 2, "max_steps": 2, "eval_every": 0,
             "checkpoint_dir": str(tmp_path / "ckpt")}
    train.update(train_overrides)
    doc = {
        "stft": {"window_len": 64, "hop": 32, "fft_size": 64},
        "model": {"n_ssm_pairs": 2, "n_render_blocks": 1, "base_channels": 4,
                  "bsd_encoder_channels": [8, 8, 16], "n_ctfa": 1, "ctfa_hidden": 8},
        "train": train,
        "dataset": {"dir": str(tiny_dataset["dir"]), "manifest": str(tmp_path / "m.jsonl")},
    }
    tiny_dataset["manifest"].save(tmp_path / "m.jsonl")
    path = tmp_path / "config.json"
    path.write_text(json.dumps(doc))
    return path


class TestMakeManifest:
    def test_deterministic_and_in_range(self, runner, source_dir, tmp_path):
        args = ["make-manifest", "--speech-dir", str(source_dir / "speech"),
                "--noise-dir", str(source_dir / "noise"), "--n", "8",
                "--scenario", "heterophasic_1", "--snr-range", "-15:15",
                "--eps-range", "-35:-15", "--segment-len", "8000",
                "--seed", "3"]
        out1, out2 = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        assert runner.invoke(main, args + ["--out", str(out1)]).exit_code == 0
        assert runner.invoke(main, args + ["--out", str(out2)]).exit_code == 0
        assert out1.read_bytes() == out2.read_bytes()
        m = ds.Manifest.load(out1)
        assert len(m.recipes) == 8
        for r in m.recipes:
            assert r.scenario_kind == "heterophasic_1"
            assert -15 <= r.snr_db <= 15 and r.snr_db.is_integer()
            assert -35 <= r.epsilon_db <= -15 and r.epsilon_db.is_integer()
            assert r.segment_len == 8000

    def test_continuous_draws_for_fractional_bounds(self, runner, source_dir, tmp_path):
        out = tmp_path / "c.jsonl"
        result = runner.invoke(main, [
            "make-manifest", "--speech-dir", str(source_dir / "speech"),
            "--noise-dir", str(source_dir / "noise"), "--n", "6",
            "--snr-range", "-2.5:2.5", "--seed", "1", "--out", str(out)])
        assert result.exit_code == 0
        snrs = [r.snr_db for r in ds.Manifest.load(out).recipes]
        assert all(-2.5 <= v <= 2.5 for v in snrs)
        assert any(not float(v).is_integer() for v in snrs)

    def test_empty_source_dir_exit_2(self, runner, tmp_path):
        (tmp_path / "empty").mkdir()
        result = runner.invoke(main, [
            "make-manifest", "--speech-dir", str(tmp_path / "empty"),
            "--noise-dir", str(tmp_path / "empty"), "--n", "2",
            "--out", str(tmp_path / "m.jsonl")])
        assert result.exit_code == 2

    def test_bad_range_exit_2(self, runner, source_dir, tmp_path):
        result = runner.invoke(main, [
            "make-manifest", "--speech-dir", str(source_dir / "speech"),
            "--noise-dir", str(source_dir / "noise"), "--n", "2",
            "--snr-range", "oops", "--out", str(tmp_path / "m.jsonl")])
        assert result.exit_code == 2


class TestSynth:
    def test_homophasic_channels_byte_identical(self, runner, source_dir, tmp_path):
        manifest = tmp_path / "m.jsonl"
        ds.Manifest([ds.MixtureRecipe(str(source_dir / "speech/sp0.wav"),
                                      str(source_dir / "noise/n0.wav"),
                                      -20.0, 0.0, "homophasic", 8000, 5)]).save(manifest)
        out = tmp_path / "data"
        result = runner.invoke(main, ["synth", "--manifest", str(manifest),
                                      "--out-dir", str(out)])
        assert result.exit_code == 0
        entry = ds.load_index(out)[0]
        left = (out / entry["dir"] / "yl.wav").read_bytes()
        right = (out / entry["dir"] / "yr.wav").read_bytes()
        assert left == right
        assert (out / "summary.json").exists()

    def test_nothing_written_exit_2(self, runner, source_dir, tmp_path):
        manifest = tmp_path / "m.jsonl"
        ds.Manifest([ds.MixtureRecipe(str(tmp_path / "missing.wav"),
                                      str(source_dir / "noise/n0.wav"),
                                      -20.0, 0.0, "antiphasic", 8000, 5)]).save(manifest)
        result = runner.invoke(main, ["synth", "--manifest", str(manifest),
                                      "--out-dir", str(tmp_path / "data")])
        assert result.exit_code == 2


class TestAnalyze:
    def _write_pair(self, tmp_path, invert=False):
        sig = voiced_signal(8000, seed=6)
        audio_io.write_wav(tmp_path / "l.wav", dsp.Waveform(sig))
        audio_io.write_wav(tmp_path / "r.wav", dsp.Waveform(-sig if invert else sig))

    def test_identical_pair(self, runner, tmp_path):
        self._write_pair(tmp_path)
        result = runner.invoke(main, ["analyze", "--left", str(tmp_path / "l.wav"),
                                      "--right", str(tmp_path / "r.wav"),
                                      "--out-prefix", str(tmp_path / "rep")])
        assert result.exit_code == 0
        summary = json.loads(result.output)
        assert abs(summary["mean_abs_ipd_rad"]) < 1e-9
        assert summary["mean_psd_ratio"] == pytest.approx(1.0, abs=1e-9)
        for suffix in ("_psd_ratio.csv", "_ipd.csv"):
            grid = np.loadtxt(str(tmp_path / "rep") + suffix, delimiter=",")
            assert grid.shape == tuple(summary["grid_shape"])

    def test_sign_inverted_pair_reports_pi(self, runner, tmp_path):
        self._write_pair(tmp_path, invert=True)
        result = runner.invoke(main, ["analyze", "--left", str(tmp_path / "l.wav"),
                                      "--right", str(tmp_path / "r.wav"),
                                      "--out-prefix", str(tmp_path / "rep")])
        summary = json.loads(result.output)
        assert summary["mean_abs_ipd_rad"] == pytest.approx(np.pi, abs=1e-9)

    def test_length_mismatch_exit_2(self, runner, tmp_path):
        audio_io.write_wav(tmp_path / "l.wav", dsp.Waveform(np.zeros(8000) + 0.1))
        audio_io.write_wav(tmp_path / "r.wav", dsp.Waveform(np.zeros(4000) + 0.1))
        result = runner.invoke(main, ["analyze", "--left", str(tmp_path / "l.wav"),
                                      "--right", str(tmp_path / "r.wav"),
                                      "--out-prefix", str(tmp_path / "rep")])
        assert result.exit_code == 2


class TestConfigErrors:
    def test_wrong_type_exit_3_names_key(self, runner, tmp_path, tiny_dataset):
        path = micro_config(tmp_path, tiny_dataset)
        doc = json.loads(path.read_text())
        doc["train"]["gamma"] = "high"
        path.write_text(json.dumps(doc))
        result = runner.invoke(main, ["train", "--config", str(path)])
        assert result.exit_code == 3
        assert "train/gamma" in result.stderr

    def test_unknown_key_exit_3(self, runner, tmp_path, tiny_dataset):
        path = micro_config(tmp_path, tiny_dataset)
        doc = json.loads(path.read_text())
        doc["optimizer"] = "sgd"
        path.write_text(json.dumps(doc))
        result = runner.invoke(main, ["train", "--config", str(path)])
        assert result.exit_code == 3


class TestTrainEvalAblate:
    def test_train_then_eval_writes_reports(self, runner, tmp_path, tiny_dataset):
        path = micro_config(tmp_path, tiny_dataset)
        result = runner.invoke(main, ["train", "--config", str(path)])
        assert result.exit_code == 0, result.stderr
        ckpt = tmp_path / "ckpt/final.ckpt"
        assert ckpt.exists()
        prefix = tmp_path / "report"
        result = runner.invoke(main, ["eval", "--checkpoint", str(ckpt),
                                      "--data-dir", str(tiny_dataset["dir"]),
                                      "--out-prefix", str(prefix)])
        assert result.exit_code == 0, result.stderr
        for suffix in (".json", ".txt", ".csv", ".png"):
            assert (tmp_path / ("report" + suffix)).exists()
        report = json.loads((tmp_path / "report.json").read_text())
        assert report["n_evaluated"] == 2
        assert "STOI" in (tmp_path / "report.txt").read_text()

    def test_eval_pesq_sidecar(self, runner, tmp_path, tiny_dataset):
        path = micro_config(tmp_path, tiny_dataset, max_steps=1)
        assert runner.invoke(main, ["train", "--config", str(path)]).exit_code == 0
        names = [e["dir"] for e in ds.load_index(tiny_dataset["dir"])]
        sidecar = tmp_path / "pesq.json"
        sidecar.write_text(json.dumps({n: 2.5 for n in names}))
        prefix = tmp_path / "rep2"
        result = runner.invoke(main, ["eval", "--checkpoint", str(tmp_path / "ckpt/final.ckpt"),
                                      "--data-dir", str(tiny_dataset["dir"]),
                                      "--pesq-sidecar", str(sidecar),
                                      "--out-prefix", str(prefix), "--no-figures"])
        assert result.exit_code == 0, result.stderr
        assert "PESQ" in (tmp_path / "rep2.txt").read_text()

    def test_ablate_params_only(self, runner, tmp_path, tiny_dataset):
        path = micro_config(tmp_path, tiny_dataset, max_steps=0)
        work = tmp_path / "ab"
        result = runner.invoke(main, ["ablate", "--config", str(path),
                                      "--axis", "ssm_pairs",
                                      "--work-dir", str(work), "--no-figures"])
        assert result.exit_code == 0, result.stderr
        assert (work / "table.txt").exists() and (work / "table.json").exists()
        table = json.loads((work / "table.json").read_text())
        assert table["axis"] == "ssm_pairs" and len(table["variants"]) == 5

    def test_ablate_with_figures(self, runner, tmp_path, tiny_dataset):
        path = micro_config(tmp_path, tiny_dataset, max_steps=0)
        work = tmp_path / "abf"
        result = runner.invoke(main, ["ablate", "--config", str(path),
                                      "--axis", "component_case",
                                      "--work-dir", str(work)])
        assert result.exit_code == 0, result.stderr
        assert (work / "table.png").exists()

    def test_env_checkpoint_override(self, runner, tmp_path, tiny_dataset, monkeypatch):
        path = micro_config(tmp_path, tiny_dataset, max_steps=1)
        override = tmp_path / "elsewhere"
        monkeypatch.setenv("BINSE_CHECKPOINT_DIR", str(override))
        result = runner.invoke(main, ["train", "--config", str(path)])
        assert result.exit_code == 0, result.stderr
        assert (override / "final.ckpt").exists()
