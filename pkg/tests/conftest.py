import numpy as np
import pytest

from binse import audio_io, dataset as ds, dsp


def voiced_signal(n_samples: int, f0: float = 120.0, seed: int = 0,
                  sample_rate: int = 16000) -> np.ndarray:
    """Speech-like test signal: vibrato harmonics under a slow envelope."""
    rng = np.random.default_rng(seed)
    t = np.arange(n_samples) / sample_rate
    inst_f0 = f0 * (1.0 + 0.02 * np.sin(2 * np.pi * 3.1 * t + rng.uniform(0, np.pi)))
    phase = 2 * np.pi * np.cumsum(inst_f0) / sample_rate
    sig = sum(np.sin(k * phase + rng.uniform(0, np.pi)) / k for k in range(1, 9))
    sig *= 0.55 + 0.45 * np.sin(2 * np.pi * 2.3 * t + rng.uniform(0, np.pi))
    return sig / np.max(np.abs(sig))


@pytest.fixture(scope="session")
def source_dir(tmp_path_factory):
    """Two synthetic speech files and two noise files on disk."""
    root = tmp_path_factory.mktemp("sources")
    speech = root / "speech"
    noise = root / "noise"
    speech.mkdir()
    noise.mkdir()
    rng = np.random.default_rng(99)
    for i in range(2):
        audio_io.write_wav(speech / f"sp{i}.wav",
                           dsp.Waveform(voiced_signal(16000, f0=110 + 40 * i, seed=i)))
        audio_io.write_wav(noise / f"n{i}.wav",
                           dsp.Waveform(0.3 * rng.normal(0, 1, 16000)))
    return root


@pytest.fixture(scope="session")
def tiny_dataset(source_dir, tmp_path_factory):
    """A generated 2-example antiphasic dataset with 8000-sample segments."""
    out = tmp_path_factory.mktemp("tiny_data")
    recipes = [
        ds.MixtureRecipe(str(source_dir / "speech/sp0.wav"), str(source_dir / "noise/n0.wav"),
                         -20.0, 0.0, "antiphasic", 8000, 11),
        ds.MixtureRecipe(str(source_dir / "speech/sp1.wav"), str(source_dir / "noise/n1.wav"),
                         -22.0, 2.0, "antiphasic", 8000, 12),
    ]
    manifest = ds.Manifest(recipes)
    ds.generate_dataset(manifest, out)
    return {"dir": out, "manifest": manifest}
