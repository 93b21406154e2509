"""WAV file input/output with on-load resampling to the pipeline rate."""

import json
import math
import os

import numpy as np
from scipy.io import wavfile
from scipy.signal import resample_poly

from .dsp import DEFAULT_SAMPLE_RATE, Waveform
from .errors import InvalidInputError

_INT16_SCALE = 32768.0


def _to_float(data: np.ndarray) -> np.ndarray:
    if data.dtype == np.int16:
        return data.astype(np.float64) / _INT16_SCALE
    if data.dtype == np.int32:
        return data.astype(np.float64) / 2147483648.0
    if data.dtype in (np.float32, np.float64):
        return data.astype(np.float64)
    raise InvalidInputError(f"unsupported WAV sample format: {data.dtype}")


def resample(samples: np.ndarray, rate_in: int, rate_out: int) -> np.ndarray:
    """Polyphase windowed-sinc resampling."""
    if rate_in == rate_out:
        return samples
    g = math.gcd(rate_in, rate_out)
    return resample_poly(samples, rate_out // g, rate_in // g, axis=0)


def read_wav(path, target_rate: int = DEFAULT_SAMPLE_RATE, mono: bool = True) -> Waveform:
    """Load a WAV file, downmix to mono if requested, resample to target_rate."""
    rate, data = wavfile.read(path)
    data = _to_float(data)
    if data.ndim == 2 and mono:
        data = data.mean(axis=1)
    data = resample(data, rate, target_rate)
    if data.ndim == 2:
        raise InvalidInputError(f"{path}: expected mono, got {data.shape[1]} channels")
    return Waveform(data, target_rate)


def read_wav_stereo(path, target_rate: int = DEFAULT_SAMPLE_RATE):
    """Load a stereo WAV as a (left, right) Waveform pair."""
    rate, data = wavfile.read(path)
    data = _to_float(data)
    if data.ndim != 2 or data.shape[1] != 2:
        raise InvalidInputError(f"{path}: expected a 2-channel WAV")
    data = resample(data, rate, target_rate)
    return Waveform(data[:, 0], target_rate), Waveform(data[:, 1], target_rate)


def write_wav(path, w: Waveform, fmt: str = "float32"):
    """Write a mono waveform as 32-bit float (default) or 16-bit PCM."""
    if fmt == "float32":
        wavfile.write(path, w.sample_rate, w.samples.astype(np.float32))
    elif fmt == "int16":
        clipped = np.clip(w.samples, -1.0, 32767.0 / _INT16_SCALE)
        wavfile.write(path, w.sample_rate, np.round(clipped * _INT16_SCALE).astype(np.int16))
    else:
        raise InvalidInputError(f"unsupported output format: {fmt}")


def read_raw_stereo(path, sidecar_path=None, target_rate: int = DEFAULT_SAMPLE_RATE):
    """Load a two-column 32-bit-float raw file with a JSON sidecar.

    The sidecar ({"sample_rate": ..., "label": ...}) defaults to path + ".json".
    Returns (left, right, label).
    """
    sidecar_path = sidecar_path or (os.fspath(path) + ".json")
    with open(sidecar_path, encoding="utf-8") as fh:
        meta = json.load(fh)
    raw = np.fromfile(path, dtype=np.float32)
    if len(raw) % 2:
        raise InvalidInputError(f"{path}: odd sample count for a two-column raw file")
    data = raw.reshape(-1, 2).astype(np.float64)
    data = resample(data, int(meta["sample_rate"]), target_rate)
    left = Waveform(data[:, 0], target_rate)
    right = Waveform(data[:, 1], target_rate)
    return left, right, meta.get("label", "")
