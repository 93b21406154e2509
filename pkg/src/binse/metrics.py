"""Objective evaluation: SI-SNR (improvement), segmental SNR, and STOI.

STOI follows the standard short-time objective intelligibility procedure:
resample to 10 kHz, drop frames more than 40 dB below the loudest frame,
one-third-octave band envelopes from 256-sample half-overlapped Hann frames,
384 ms analysis segments with normalization and -15 dB clipping, and
correlation averaging over bands and segments.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from . import losses
from .audio_io import resample
from .dsp import Waveform
from .errors import DegenerateInputError, InsufficientSignalError, InvalidInputError

SSNR_FRAME_SEC = 0.032
SSNR_MIN_DB = -10.0
SSNR_MAX_DB = 35.0
SSNR_ACTIVITY_DB = 40.0

STOI_FS = 10000
STOI_FRAME = 256
STOI_NFFT = 512
STOI_NBANDS = 15
STOI_MIN_FREQ = 150.0
STOI_SEG_FRAMES = 30
STOI_BETA_DB = -15.0
STOI_DYN_RANGE_DB = 40.0


def si_snr_db(ref: Waveform, est: Waveform) -> float:
    return float(losses.si_snr(ref.samples, est.samples))


def ssnr(ref: Waveform, est: Waveform) -> float:
    """Segmental SNR over 32 ms non-overlapping frames, clipped to [-10, 35] dB.

    Frames whose reference energy is more than 40 dB below the loudest frame
    are excluded from the average.
    """
    if len(ref) != len(est):
        raise InvalidInputError("reference/estimate lengths differ")
    frame = int(round(SSNR_FRAME_SEC * ref.sample_rate))
    n_frames = len(ref) // frame
    if n_frames == 0:
        raise DegenerateInputError("signal shorter than one segmental-SNR frame")
    r = ref.samples[: n_frames * frame].reshape(n_frames, frame)
    e = est.samples[: n_frames * frame].reshape(n_frames, frame)
    ref_energy = (r**2).sum(axis=1)
    err_energy = ((r - e) ** 2).sum(axis=1)
    max_energy = ref_energy.max()
    if max_energy == 0:
        raise DegenerateInputError("all-zero reference in segmental SNR")
    active = ref_energy > max_energy * 10.0 ** (-SSNR_ACTIVITY_DB / 10.0)
    if not np.any(active):
        raise DegenerateInputError("no active frames in segmental SNR")
    with np.errstate(divide="ignore"):
        snr = 10.0 * np.log10(ref_energy[active] / np.maximum(err_energy[active], 1e-300))
    return float(np.mean(np.clip(snr, SSNR_MIN_DB, SSNR_MAX_DB)))


def _stoi_window() -> np.ndarray:
    # MATLAB-style hanning(N): zero endpoints excluded
    n = np.arange(1, STOI_FRAME + 1)
    return 0.5 * (1.0 - np.cos(2.0 * np.pi * n / (STOI_FRAME + 1)))


def _frame(x: np.ndarray, frame: int, hop: int) -> np.ndarray:
    n = (len(x) - frame) // hop + 1
    if n < 1:
        return np.empty((0, frame))
    return np.lib.stride_tricks.sliding_window_view(x, frame)[::hop][:n]


def _remove_silent_frames(x: np.ndarray, y: np.ndarray):
    win = _stoi_window()
    hop = STOI_FRAME // 2
    xf = _frame(x, STOI_FRAME, hop) * win
    yf = _frame(y, STOI_FRAME, hop) * win
    if len(xf) == 0:
        raise InsufficientSignalError("signal shorter than one STOI frame")
    energy_db = 20.0 * np.log10(np.linalg.norm(xf, axis=1) + 1e-300)
    keep = energy_db > energy_db.max() - STOI_DYN_RANGE_DB
    xf, yf = xf[keep], yf[keep]
    out_len = (len(xf) - 1) * hop + STOI_FRAME if len(xf) else 0
    xs, ys = np.zeros(out_len), np.zeros(out_len)
    for i in range(len(xf)):
        xs[i * hop : i * hop + STOI_FRAME] += xf[i]
        ys[i * hop : i * hop + STOI_FRAME] += yf[i]
    return xs, ys


def _third_octave_matrix(fs: int, nfft: int):
    freqs = np.arange(nfft // 2 + 1) * fs / nfft
    centers = STOI_MIN_FREQ * 2.0 ** (np.arange(STOI_NBANDS) / 3.0)
    low = centers * 2.0 ** (-1.0 / 6.0)
    high = centers * 2.0 ** (1.0 / 6.0)
    mat = np.zeros((STOI_NBANDS, len(freqs)))
    for k in range(STOI_NBANDS):
        mat[k, (freqs >= low[k]) & (freqs < high[k])] = 1.0
    return mat


def stoi(ref: Waveform, est: Waveform) -> float:
    """Short-time objective intelligibility in [-1, 1]."""
    if len(ref) != len(est):
        raise InvalidInputError("reference/estimate lengths differ")
    x = resample(ref.samples, ref.sample_rate, STOI_FS)
    y = resample(est.samples, est.sample_rate, STOI_FS)
    x, y = _remove_silent_frames(x, y)
    win = _stoi_window()
    hop = STOI_FRAME // 2
    xf = _frame(x, STOI_FRAME, hop) * win
    yf = _frame(y, STOI_FRAME, hop) * win
    if len(xf) < STOI_SEG_FRAMES:
        raise InsufficientSignalError(
            f"need at least {STOI_SEG_FRAMES} active frames for STOI, got {len(xf)}"
        )
    xs = np.abs(np.fft.rfft(xf, n=STOI_NFFT, axis=1))
    ys = np.abs(np.fft.rfft(yf, n=STOI_NFFT, axis=1))
    band = _third_octave_matrix(STOI_FS, STOI_NFFT)
    xb = np.sqrt(band @ (xs**2).T)  # (bands, frames)
    yb = np.sqrt(band @ (ys**2).T)
    clip_gain = 10.0 ** (-STOI_BETA_DB / 20.0)
    scores = []
    for m in range(STOI_SEG_FRAMES, xb.shape[1] + 1):
        xseg = xb[:, m - STOI_SEG_FRAMES : m]
        yseg = yb[:, m - STOI_SEG_FRAMES : m]
        norm_x = np.linalg.norm(xseg, axis=1, keepdims=True)
        norm_y = np.linalg.norm(yseg, axis=1, keepdims=True)
        alpha = norm_x / np.maximum(norm_y, 1e-300)
        yn = np.minimum(yseg * alpha, xseg * (1.0 + clip_gain))
        xc = xseg - xseg.mean(axis=1, keepdims=True)
        yc = yn - yn.mean(axis=1, keepdims=True)
        denom = np.linalg.norm(xc, axis=1) * np.linalg.norm(yc, axis=1)
        corr = np.where(denom > 0, (xc * yc).sum(axis=1) / np.maximum(denom, 1e-300), 0.0)
        scores.append(corr)
    return float(np.mean(scores))


@dataclass
class MetricsReport:
    """Per-utterance metrics plus corpus means."""

    per_utterance: list = field(default_factory=list)
    means: dict = field(default_factory=dict)
    n_evaluated: int = 0
    n_failed: int = 0
    failures: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "per_utterance": self.per_utterance,
            "means": self.means,
            "n_evaluated": self.n_evaluated,
            "n_failed": self.n_failed,
            "failures": self.failures,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_table(self) -> str:
        """Aligned text table: SSNR, [PESQ], STOI(%) column order."""
        cols = ["SSNR (dB)"]
        if "pesq" in self.means:
            cols.append("PESQ")
        cols += ["STOI (%)", "SI-SNRi (dB)"]
        keys = ["ssnr_db"] + (["pesq"] if "pesq" in self.means else []) + ["stoi", "si_snr_improvement_db"]
        header = " | ".join(f"{c:>14}" for c in cols)
        vals = []
        for key in keys:
            v = self.means.get(key, float("nan"))
            vals.append(f"{v * 100.0:>14.2f}" if key == "stoi" else f"{v:>14.2f}")
        return header + "\n" + " | ".join(vals)


def evaluate_corpus(pairs, pesq_scores: dict | None = None) -> MetricsReport:
    """Evaluate (name, ref, noisy, est) tuples; per-pair failures are recorded.

    pesq_scores optionally maps utterance name to an externally computed PESQ
    value, merged into the report.
    """
    if not pairs:
        raise InvalidInputError("empty evaluation corpus")
    report = MetricsReport()
    for name, ref, noisy, est in pairs:
        try:
            entry = {
                "name": name,
                "si_snr_db": si_snr_db(ref, est),
                "si_snr_improvement_db": si_snr_db(ref, est) - si_snr_db(ref, noisy),
                "ssnr_db": ssnr(ref, est),
                "stoi": stoi(ref, est),
            }
            if pesq_scores and name in pesq_scores:
                entry["pesq"] = float(pesq_scores[name])
            report.per_utterance.append(entry)
        except Exception as exc:  # record and continue
            report.failures.append({"name": name, "error": str(exc)})
    report.n_evaluated = len(report.per_utterance)
    report.n_failed = len(report.failures)
    if report.per_utterance:
        keys = set().union(*(set(e) for e in report.per_utterance)) - {"name"}
        for key in sorted(keys):
            vals = [e[key] for e in report.per_utterance if key in e]
            report.means[key] = float(np.mean(vals))
    return report
