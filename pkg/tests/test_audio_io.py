import json

import numpy as np
import pytest

from binse import audio_io, dsp
from binse.errors import InvalidInputError


def test_float32_round_trip(tmp_path):
    w = dsp.Waveform(np.random.default_rng(0).uniform(-1, 1, 4000).astype(np.float32).astype(np.float64))
    path = tmp_path / "a.wav"
    audio_io.write_wav(path, w)
    back = audio_io.read_wav(path)
    np.testing.assert_array_equal(back.samples, w.samples)
    assert back.sample_rate == 16000


def test_int16_round_trip_quantization(tmp_path):
    w = dsp.Waveform(np.random.default_rng(1).uniform(-0.9, 0.9, 4000))
    path = tmp_path / "a.wav"
    audio_io.write_wav(path, w, fmt="int16")
    back = audio_io.read_wav(path)
    assert np.abs(back.samples - w.samples).max() <= 2**-15


def test_resample_on_load(tmp_path):
    # a 1 kHz tone written at 8 kHz must come back at 16 kHz, same duration
    t = np.arange(8000) / 8000
    w = dsp.Waveform(0.5 * np.sin(2 * np.pi * 1000 * t), sample_rate=8000)
    path = tmp_path / "tone8k.wav"
    audio_io.write_wav(path, w)
    back = audio_io.read_wav(path)
    assert back.sample_rate == 16000
    assert len(back) == 16000
    spec = np.abs(np.fft.rfft(back.samples))
    assert abs(spec.argmax() - 1000) <= 1


def test_stereo_downmix_and_split(tmp_path):
    from scipy.io import wavfile
    rng = np.random.default_rng(2)
    data = rng.uniform(-0.5, 0.5, (4000, 2)).astype(np.float32)
    path = tmp_path / "st.wav"
    wavfile.write(path, 16000, data)
    mono = audio_io.read_wav(path)
    np.testing.assert_allclose(mono.samples, data.astype(np.float64).mean(axis=1), atol=1e-9)
    left, right = audio_io.read_wav_stereo(path)
    np.testing.assert_allclose(left.samples, data[:, 0], atol=1e-9)
    np.testing.assert_allclose(right.samples, data[:, 1], atol=1e-9)


def test_raw_brir_with_sidecar(tmp_path):
    rng = np.random.default_rng(3)
    data = rng.normal(size=(128, 2)).astype(np.float32)
    path = tmp_path / "brir.f32"
    data.tofile(path)
    with open(str(path) + ".json", "w") as fh:
        json.dump({"sample_rate": 16000, "label": "az+45"}, fh)
    left, right, label = audio_io.read_raw_stereo(path)
    assert label == "az+45"
    np.testing.assert_allclose(left.samples, data[:, 0], atol=1e-9)
    np.testing.assert_allclose(right.samples, data[:, 1], atol=1e-9)


def test_bad_format_rejected(tmp_path):
    with pytest.raises(InvalidInputError):
        audio_io.write_wav(tmp_path / "x.wav", dsp.Waveform(np.zeros(10)), fmt="mp3")
