"""Short-time Fourier analysis/synthesis and binaural time-frequency statistics.

All transforms run in float64. The analysis is centered: the signal is
reflect-padded by half a window on each side, so a signal of N samples with
hop H yields floor(N/H)+1 frames (40000 samples at the default 400/160/512
configuration give a 251x257 grid).
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.signal import get_window

from .errors import InvalidConfigError, InvalidInputError

DEFAULT_SAMPLE_RATE = 16000


@dataclass
class Waveform:
    """A sampled time-domain signal."""

    samples: np.ndarray
    sample_rate: int = DEFAULT_SAMPLE_RATE

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1:
            raise InvalidInputError("waveform samples must be one-dimensional")
        if not np.all(np.isfinite(self.samples)):
            raise InvalidInputError("waveform contains non-finite samples")
        if self.sample_rate <= 0:
            raise InvalidInputError("sample_rate must be positive")

    def __len__(self):
        return len(self.samples)

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate

    def rms(self) -> float:
        return float(np.sqrt(np.mean(self.samples**2))) if len(self) else 0.0


@dataclass(frozen=True)
class StftConfig:
    """Analysis/synthesis configuration. Window is periodic Hann."""

    window_len: int = 400
    hop: int = 160
    fft_size: int = 512
    centered: bool = True

    def __post_init__(self):
        if self.window_len > self.fft_size:
            raise InvalidConfigError("window_len must not exceed fft_size")
        if self.hop > self.window_len:
            raise InvalidConfigError("hop must not exceed window_len (overlap-add infeasible)")
        if min(self.window_len, self.hop, self.fft_size) <= 0:
            raise InvalidConfigError("window_len, hop and fft_size must be positive")

    @property
    def n_bins(self) -> int:
        return self.fft_size // 2 + 1

    def n_frames(self, source_len: int) -> int:
        if self.centered:
            return source_len // self.hop + 1
        return max(0, (source_len - self.window_len) // self.hop + 1)

    def window(self) -> np.ndarray:
        return get_window("hann", self.window_len, fftbins=True).astype(np.float64)


@dataclass
class ComplexSpectrogram:
    """T x F complex grid stored as separate real/imag planes."""

    real: np.ndarray
    imag: np.ndarray
    config: StftConfig = field(default_factory=StftConfig)
    source_len: int = 0

    def __post_init__(self):
        self.real = np.asarray(self.real, dtype=np.float64)
        self.imag = np.asarray(self.imag, dtype=np.float64)
        if self.real.shape != self.imag.shape or self.real.ndim != 2:
            raise InvalidInputError("real/imag planes must be 2-D grids of equal shape")

    @property
    def shape(self):
        return self.real.shape

    @property
    def complex(self) -> np.ndarray:
        return self.real + 1j * self.imag

    @classmethod
    def from_complex(cls, z: np.ndarray, config: StftConfig, source_len: int):
        return cls(z.real.copy(), z.imag.copy(), config, source_len)


def stft(w: Waveform, cfg: StftConfig | None = None) -> ComplexSpectrogram:
    """Analyze a waveform into a T x F complex spectrogram.

    Linear in the input: stft(a*w) == a*stft(w).
    """
    cfg = cfg or StftConfig()
    x = w.samples
    if len(x) == 0:
        raise InvalidInputError("cannot analyze an empty waveform")
    pad = cfg.window_len // 2
    if cfg.centered:
        x = np.pad(x, pad, mode="reflect")
    n_frames = cfg.n_frames(len(w.samples))
    win = cfg.window()
    frames = np.lib.stride_tricks.sliding_window_view(x, cfg.window_len)[:: cfg.hop][:n_frames]
    spec = np.fft.rfft(frames * win, n=cfg.fft_size, axis=1)
    return ComplexSpectrogram.from_complex(spec, cfg, len(w.samples))


def istft(s: ComplexSpectrogram, sample_rate: int = DEFAULT_SAMPLE_RATE) -> Waveform:
    """Windowed overlap-add synthesis, normalized by the summed squared window.

    Output length equals s.source_len; istft(stft(w)) reconstructs w to
    float64 round-off.
    """
    cfg = s.config
    if cfg.hop > cfg.window_len:
        raise InvalidConfigError("hop exceeds window length; overlap-add infeasible")
    n_frames, n_bins = s.shape
    if n_bins != cfg.n_bins:
        raise InvalidInputError(f"expected {cfg.n_bins} frequency bins, got {n_bins}")
    win = cfg.window()
    frames = np.fft.irfft(s.complex, n=cfg.fft_size, axis=1)[:, : cfg.window_len]
    frames *= win
    total = (n_frames - 1) * cfg.hop + cfg.window_len
    out = np.zeros(total)
    den = np.zeros(total)
    wsq = win**2
    for t in range(n_frames):
        start = t * cfg.hop
        out[start : start + cfg.window_len] += frames[t]
        den[start : start + cfg.window_len] += wsq
    out = out / np.maximum(den, 1e-12)
    pad = cfg.window_len // 2 if cfg.centered else 0
    out = out[pad : pad + s.source_len]
    if len(out) < s.source_len:
        out = np.pad(out, (0, s.source_len - len(out)))
    return Waveform(out, sample_rate)


def cola_normalizer(cfg: StftConfig, n_samples: int = 4000) -> np.ndarray:
    """Summed squared-window envelope over the steady-state region."""
    win = cfg.window()
    den = np.zeros(n_samples + cfg.window_len)
    for start in range(0, n_samples, cfg.hop):
        den[start : start + cfg.window_len] += win**2
    return den[cfg.window_len : n_samples]


def psd_ratio(sl: ComplexSpectrogram, sr: ComplexSpectrogram, floor: float = 1e-10) -> np.ndarray:
    """Per-bin left/right power ratio with an additive power floor."""
    if sl.shape != sr.shape:
        raise InvalidInputError("left/right spectrograms differ in shape")
    if floor <= 0:
        raise InvalidInputError("power floor must be positive")
    pl = sl.real**2 + sl.imag**2
    pr = sr.real**2 + sr.imag**2
    return (pl + floor) / (pr + floor)


def ipd(sl: ComplexSpectrogram, sr: ComplexSpectrogram) -> np.ndarray:
    """Inter-channel phase difference arg(L * conj(R)), wrapped to (-pi, pi]."""
    if sl.shape != sr.shape:
        raise InvalidInputError("left/right spectrograms differ in shape")
    # expand the cross-spectrum by plane: identical channels then give an
    # exact zero imaginary part (complex multiply may round it to ~1e-16)
    re = sl.real * sr.real + sl.imag * sr.imag
    im = sl.imag * sr.real - sl.real * sr.imag
    a = np.arctan2(im, re)
    # arctan2 returns -pi for negative reals with a -0.0 imaginary part
    return np.where(a <= -np.pi, a + 2 * np.pi, a)
