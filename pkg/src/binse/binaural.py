"""Level scaling, monaural mixing, and binaural target rendering.

Speech is scaled to a target RMS level in dB, noise is scaled to hit a target
SNR against the scaled speech, and binaural supervision targets are produced
by convolving each source with the left/right impulse responses of its
rendering direction.
"""

import os
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import get_window, oaconvolve

from . import audio_io
from .dsp import DEFAULT_SAMPLE_RATE, Waveform
from .errors import DegenerateInputError, InvalidInputError

SCENARIO_KINDS = ("antiphasic", "heterophasic_1", "heterophasic_2", "homophasic")

# below this tap count direct convolution beats FFT overlap-save
_DIRECT_CONV_MAX_TAPS = 128


@dataclass
class Brir:
    """Left/right impulse response pair for one rendering direction."""

    left: np.ndarray
    right: np.ndarray
    sample_rate: int = DEFAULT_SAMPLE_RATE
    label: str = ""

    def __post_init__(self):
        self.left = np.asarray(self.left, dtype=np.float64)
        self.right = np.asarray(self.right, dtype=np.float64)
        for side, h in (("left", self.left), ("right", self.right)):
            if h.size == 0:
                raise InvalidInputError(f"{side} impulse response is empty")
            if not np.all(np.isfinite(h)):
                raise InvalidInputError(f"{side} impulse response has non-finite taps")


@dataclass
class ScenarioSpec:
    """Rendering directions for the speech and noise sources."""

    kind: str
    speech_brir: Brir
    noise_brir: Brir

    def __post_init__(self):
        if self.kind not in SCENARIO_KINDS:
            raise InvalidInputError(f"unknown scenario kind: {self.kind}")


@dataclass
class SyntheticBrirParams:
    """Spherical-head stand-in for measured impulse responses.

    ITD follows the Woodworth model tau = (a/c)(theta + sin theta); ILD is a
    level tilt linear in sin(theta) reaching ild_db_at_90 at +/-90 degrees.
    """

    azimuth: float = 0.0
    head_radius: float = 0.0875
    sound_speed: float = 343.0
    ild_db_at_90: float = 6.0
    phase_invert_right: bool = False
    n_taps: int = 81
    sample_rate: int = DEFAULT_SAMPLE_RATE


def scale_speech(x: Waveform, epsilon_db: float) -> Waveform:
    """Scale speech so its RMS equals 10**(epsilon_db/20)."""
    sigma = x.rms()
    if sigma == 0.0:
        raise DegenerateInputError("cannot level-scale an all-zero speech signal")
    nu = 10.0 ** (epsilon_db / 20.0) / sigma
    return Waveform(nu * x.samples, x.sample_rate)


def scale_noise(v: Waveform, x_hat: Waveform, snr_db: float) -> Waveform:
    """Scale noise so the variance ratio of x_hat to the result equals snr_db."""
    var_x = float(np.mean(x_hat.samples**2))
    var_v = float(np.mean(v.samples**2))
    if var_v == 0.0 or var_x == 0.0:
        raise DegenerateInputError("zero-energy signal in noise scaling")
    theta = np.sqrt(10.0 ** (-snr_db / 10.0) * var_x / var_v)
    return Waveform(theta * v.samples, v.sample_rate)


def trim_or_loop(v: Waveform, target_len: int, rng: np.random.Generator | None = None) -> Waveform:
    """Fit a signal to target_len: random contiguous slice if long enough, else tile."""
    if len(v) == 0:
        raise InvalidInputError("cannot trim an empty waveform")
    samples = v.samples
    if len(samples) < target_len:
        reps = -(-target_len // len(samples))
        samples = np.tile(samples, reps)
    slack = len(samples) - target_len
    offset = 0
    if slack > 0 and rng is not None:
        offset = int(rng.integers(0, slack + 1))
    return Waveform(samples[offset : offset + target_len], v.sample_rate)


def make_monaural_mixture(x_hat: Waveform, v_hat: Waveform) -> Waveform:
    """y(n) = x_hat(n) + v_hat(n)."""
    if len(x_hat) != len(v_hat):
        raise InvalidInputError("speech and noise lengths differ")
    return Waveform(x_hat.samples + v_hat.samples, x_hat.sample_rate)


def _convolve_trunc(x: np.ndarray, h: np.ndarray) -> np.ndarray:
    if len(h) <= _DIRECT_CONV_MAX_TAPS:
        full = np.convolve(x, h)
    else:
        full = oaconvolve(x, h)
    return full[: len(x)]


def render_binaural(x_hat: Waveform, v_hat: Waveform, scenario: ScenarioSpec):
    """Render the binaural supervision pair.

    y_L = x*h_xL + v*h_vL and y_R = x*h_xR + v*h_vR, full convolution
    truncated to the input length so targets align with the monaural mixture.
    """
    if len(x_hat) != len(v_hat):
        raise InvalidInputError("speech and noise lengths differ")
    sb, nb = scenario.speech_brir, scenario.noise_brir
    if sb.sample_rate != x_hat.sample_rate or nb.sample_rate != x_hat.sample_rate:
        raise InvalidInputError("BRIR sample rate does not match the signals")
    y_l = _convolve_trunc(x_hat.samples, sb.left) + _convolve_trunc(v_hat.samples, nb.left)
    y_r = _convolve_trunc(x_hat.samples, sb.right) + _convolve_trunc(v_hat.samples, nb.right)
    return Waveform(y_l, x_hat.sample_rate), Waveform(y_r, x_hat.sample_rate)


def _frac_delay_filter(delay: float, n_taps: int) -> np.ndarray:
    """Windowed-sinc fractional delay, Hann-windowed, centered in n_taps."""
    center = (n_taps - 1) / 2.0
    n = np.arange(n_taps)
    h = np.sinc(n - center - delay)
    h *= get_window("hann", n_taps, fftbins=False)
    return h / np.linalg.norm(h)  # unit energy so the ILD tilt is exact


def synth_brir(p: SyntheticBrirParams) -> Brir:
    """Generate a synthetic left/right impulse-response pair.

    Azimuth 0 with no inversion yields identical (diotic) responses. Positive
    azimuth places the source toward the right ear: the left response is
    delayed by the full Woodworth ITD and attenuated by the ILD tilt.
    """
    if abs(p.azimuth) > 90.0:
        raise InvalidInputError("azimuth must lie in [-90, +90] degrees")
    theta = np.deg2rad(p.azimuth)
    itd = (p.head_radius / p.sound_speed) * (abs(theta) + np.sin(abs(theta)))
    itd_samples = itd * p.sample_rate
    gain_near = 10.0 ** (+p.ild_db_at_90 * abs(np.sin(theta)) / 2.0 / 20.0)
    gain_far = 10.0 ** (-p.ild_db_at_90 * abs(np.sin(theta)) / 2.0 / 20.0)
    if p.azimuth >= 0:
        delay_l, delay_r = itd_samples, 0.0
        gain_l, gain_r = gain_far, gain_near
    else:
        delay_l, delay_r = 0.0, itd_samples
        gain_l, gain_r = gain_near, gain_far
    left = gain_l * _frac_delay_filter(delay_l, p.n_taps)
    right = gain_r * _frac_delay_filter(delay_r, p.n_taps)
    if p.phase_invert_right:
        right = -right
    label = f"az{p.azimuth:+.0f}" + ("_inv" if p.phase_invert_right else "")
    return Brir(left, right, p.sample_rate, label)


def default_scenarios(sample_rate: int = DEFAULT_SAMPLE_RATE) -> dict[str, ScenarioSpec]:
    """The four presentation scenarios.

    antiphasic: speech diotic, noise diotic with the right ear sign-inverted
    (exactly pi inter-channel phase difference at all frequencies);
    heterophasic_1/_2: speech frontal, noise lateralized to +90/-90 degrees;
    homophasic: everything diotic (monaural presentation).
    """
    diotic = lambda **kw: synth_brir(SyntheticBrirParams(azimuth=0.0, sample_rate=sample_rate, **kw))
    lateral = lambda az: synth_brir(SyntheticBrirParams(azimuth=az, sample_rate=sample_rate))
    return {
        "antiphasic": ScenarioSpec("antiphasic", diotic(), diotic(phase_invert_right=True)),
        "heterophasic_1": ScenarioSpec("heterophasic_1", diotic(), lateral(+90.0)),
        "heterophasic_2": ScenarioSpec("heterophasic_2", diotic(), lateral(-90.0)),
        "homophasic": ScenarioSpec("homophasic", diotic(), diotic()),
    }


def load_brir(path, label: str = "", target_rate: int = DEFAULT_SAMPLE_RATE) -> Brir:
    """Load a measured BRIR from a stereo WAV or a raw float32 two-column file."""
    path = os.fspath(path)
    if path.lower().endswith(".wav"):
        left, right = audio_io.read_wav_stereo(path, target_rate)
        return Brir(left.samples, right.samples, target_rate, label)
    left, right, raw_label = audio_io.read_raw_stereo(path, target_rate=target_rate)
    return Brir(left.samples, right.samples, target_rate, label or raw_label)
