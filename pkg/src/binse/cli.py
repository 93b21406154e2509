"""Batch operator surface.

Exit codes: 0 success, 1 internal fault, 2 bad input, 3 config error.
Progress goes to stderr; results go to files.
"""

import functools
import glob
import json
import os
import sys

import click
import numpy as np

from . import binaural, config as config_mod, dataset as ds, dsp, train as train_mod
from . import audio_io
from .errors import (BinseError, CheckpointVersionError, CorruptDatasetError,
                     DegenerateInputError, InsufficientSignalError,
                     InvalidConfigError, InvalidInputError)

EXIT_INTERNAL = 1
EXIT_BAD_INPUT = 2
EXIT_CONFIG = 3


def _log(msg):
    click.echo(msg, err=True)


def handle_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except InvalidConfigError as exc:
            _log(f"config error: {exc}")
            sys.exit(EXIT_CONFIG)
        except (InvalidInputError, DegenerateInputError, CorruptDatasetError,
                InsufficientSignalError, FileNotFoundError) as exc:
            _log(f"bad input: {exc}")
            sys.exit(EXIT_BAD_INPUT)
        except (BinseError, CheckpointVersionError) as exc:
            _log(f"error: {exc}")
            sys.exit(EXIT_INTERNAL)
    return wrapper


@click.group()
def main():
    """Monaural speech enhancement via virtual binaural space mapping."""


def _parse_range(text):
    try:
        lo, hi = (float(v) for v in text.split(":"))
    except ValueError as exc:
        raise InvalidInputError(f"range must be 'lo:hi', got {text!r}") from exc
    if lo > hi:
        raise InvalidInputError(f"empty range: {text}")
    return lo, hi


def _draw_db(rng, lo, hi):
    # integer-dB grid when the bounds are integral, else continuous
    if lo.is_integer() and hi.is_integer():
        return float(rng.integers(int(lo), int(hi) + 1))
    return float(rng.uniform(lo, hi))


@main.command("make-manifest")
@click.option("--speech-dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--noise-dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--n", "n_recipes", required=True, type=int)
@click.option("--scenario", default="antiphasic", type=click.Choice(binaural.SCENARIO_KINDS))
@click.option("--snr-range", default="-15:15", show_default=True)
@click.option("--eps-range", default="-35:-15", show_default=True)
@click.option("--segment-len", default=40000, show_default=True, type=int)
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--out", required=True, type=click.Path())
@handle_errors
def cmd_make_manifest(speech_dir, noise_dir, n_recipes, scenario, snr_range,
                      eps_range, segment_len, seed, out):
    """Write a JSON-lines manifest with all random draws materialized."""
    speech_files = sorted(glob.glob(os.path.join(speech_dir, "*.wav")))
    noise_files = sorted(glob.glob(os.path.join(noise_dir, "*.wav")))
    if not speech_files or not noise_files:
        raise InvalidInputError("speech/noise directory contains no WAV files")
    snr_lo, snr_hi = _parse_range(snr_range)
    eps_lo, eps_hi = _parse_range(eps_range)
    rng = np.random.default_rng(seed)
    recipes = []
    for i in range(n_recipes):
        recipes.append(ds.MixtureRecipe(
            speech_path=speech_files[int(rng.integers(len(speech_files)))],
            noise_path=noise_files[int(rng.integers(len(noise_files)))],
            epsilon_db=_draw_db(rng, eps_lo, eps_hi),
            snr_db=_draw_db(rng, snr_lo, snr_hi),
            scenario_kind=scenario,
            segment_len=segment_len,
            seed=seed * 1_000_003 + i,
        ))
    manifest = ds.Manifest(recipes)
    manifest.save(out)
    _log(f"wrote {len(recipes)} recipes to {out} (config hash {manifest.config_hash})")


@main.command("synth")
@click.option("--manifest", required=True, type=click.Path(exists=True))
@click.option("--out-dir", required=True, type=click.Path())
@click.option("--config", "config_path", default=None, type=click.Path(exists=True),
              help="Pipeline config supplying scenario overrides.")
@click.option("--format", "wav_format", default="float32",
              type=click.Choice(["float32", "int16"]), show_default=True)
@handle_errors
def cmd_synth(manifest, out_dir, config_path, wav_format):
    """Generate the dataset described by a manifest."""
    m = ds.Manifest.load(manifest)
    scenarios = None
    if config_path:
        scenarios = config_mod.load_config(config_path).scenarios()
    summary = ds.generate_dataset(m, out_dir, scenarios, wav_format)
    _log(f"wrote {summary['n_written']}/{summary['n_requested']} examples to {out_dir}")
    for failure in summary["failures"]:
        _log(f"  failed {failure['recipe_id']}: {failure['error']}")
    summary_path = os.path.join(out_dir, "summary.json")
    with open(summary_path, "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
    if summary["n_written"] == 0:
        sys.exit(EXIT_BAD_INPUT)


@main.command("train")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@handle_errors
def cmd_train(config_path):
    """Train a model per the pipeline config."""
    cfg = config_mod.load_config(config_path)
    summary = train_mod.train(cfg.model, cfg.train, cfg.dataset_dir, cfg.stft)
    _log(f"final checkpoint: {summary['checkpoint']}")
    _log(f"final loss: {summary['final_loss']}")


@main.command("eval")
@click.option("--checkpoint", required=True, type=click.Path(exists=True))
@click.option("--manifest", default=None, type=click.Path(exists=True),
              help="Generate the evaluation data from this manifest if needed.")
@click.option("--data-dir", required=True, type=click.Path())
@click.option("--pesq-sidecar", default=None, type=click.Path(exists=True),
              help="JSON mapping utterance name to externally computed PESQ.")
@click.option("--out-prefix", default="report", show_default=True)
@click.option("--figures/--no-figures", default=True, show_default=True)
@handle_errors
def cmd_eval(checkpoint, manifest, data_dir, pesq_sidecar, out_prefix, figures):
    """Evaluate a checkpoint; writes <prefix>.json/.txt/.csv and a figure."""
    if not os.path.exists(os.path.join(data_dir, "index.jsonl")):
        if manifest is None:
            raise InvalidInputError(f"{data_dir} has no index.jsonl and no --manifest given")
        ds.generate_dataset(ds.Manifest.load(manifest), data_dir)
    pesq_scores = None
    if pesq_sidecar:
        with open(pesq_sidecar, encoding="utf-8") as fh:
            pesq_scores = json.load(fh)
    report = train_mod.evaluate(checkpoint, data_dir, pesq_scores)
    with open(out_prefix + ".json", "w", encoding="utf-8") as fh:
        fh.write(report.to_json() + "\n")
    with open(out_prefix + ".txt", "w", encoding="utf-8") as fh:
        fh.write(report.to_table() + "\n")
    _write_metrics_csv(report, out_prefix + ".csv")
    if figures and report.per_utterance:
        from . import plotting
        plotting.save_metric_bars(report, out_prefix + ".png")
    _log(report.to_table())


def _write_metrics_csv(report, path):
    keys = sorted({k for e in report.per_utterance for k in e if k != "name"})
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(["name"] + keys) + "\n")
        for e in report.per_utterance:
            fh.write(",".join([e["name"]] + [f"{e.get(k, float('nan')):.6f}" for k in keys]) + "\n")


@main.command("ablate")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--axis", required=True,
              type=click.Choice(train_mod.ABLATION_AXES))
@click.option("--work-dir", default="ablation", show_default=True, type=click.Path())
@click.option("--figures/--no-figures", default=True, show_default=True)
@handle_errors
def cmd_ablate(config_path, axis, work_dir, figures):
    """Run one ablation axis; writes table.txt/table.json under the work dir."""
    cfg = config_mod.load_config(config_path)
    manifest = ds.Manifest.load(cfg.manifest_path)
    result = train_mod.run_ablation(axis, cfg.model, cfg.train, manifest, work_dir, cfg.stft)
    if figures:
        from . import plotting
        plotting.save_ablation_bars(result["variants"], os.path.join(work_dir, "table.png"))
    _log(result["table"])


@main.command("analyze")
@click.option("--left", required=True, type=click.Path(exists=True))
@click.option("--right", required=True, type=click.Path(exists=True))
@click.option("--out-prefix", required=True)
@click.option("--heatmaps/--no-heatmaps", default=False, show_default=True)
@handle_errors
def cmd_analyze(left, right, out_prefix, heatmaps):
    """PSD-ratio / inter-channel phase difference analysis of a stereo pair."""
    wl = audio_io.read_wav(left)
    wr = audio_io.read_wav(right)
    if len(wl) != len(wr):
        raise InvalidInputError("left/right files differ in length")
    sl = dsp.stft(wl)
    sr = dsp.stft(wr)
    ratio = dsp.psd_ratio(sl, sr)
    phase = dsp.ipd(sl, sr)
    t, f = ratio.shape
    header = f"time x frequency grid, {t} x {f}"
    np.savetxt(out_prefix + "_psd_ratio.csv", ratio, delimiter=",", header=header)
    np.savetxt(out_prefix + "_ipd.csv", phase, delimiter=",", header=header)
    power = np.maximum(sl.real**2 + sl.imag**2, sr.real**2 + sr.imag**2)
    active = power > power.max() * 1e-6 if power.max() > 0 else np.zeros_like(power, bool)
    mean_abs_ipd = float(np.abs(phase[active]).mean()) if active.any() else 0.0
    mean_ratio = float(ratio[active].mean()) if active.any() else 1.0
    if heatmaps:
        from . import plotting
        plotting.save_heatmap(ratio, out_prefix + "_psd_ratio.png", "PSD ratio", log_scale=True)
        plotting.save_heatmap(phase, out_prefix + "_ipd.png", "IPD (rad)")
    click.echo(json.dumps({
        "mean_abs_ipd_rad": mean_abs_ipd,
        "mean_psd_ratio": mean_ratio,
        "n_active_bins": int(active.sum()),
        "grid_shape": [t, f],
    }, sort_keys=True))


if __name__ == "__main__":
    main()
