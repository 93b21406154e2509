"""Monaural speech enhancement via virtual binaural space mapping."""

__version__ = "0.1.0"

from .dsp import ComplexSpectrogram, StftConfig, Waveform, ipd, istft, psd_ratio, stft
from .binaural import (Brir, ScenarioSpec, SyntheticBrirParams, default_scenarios,
                       make_monaural_mixture, render_binaural, scale_noise,
                       scale_speech, synth_brir, trim_or_loop)
from .model import BinauralMappingEnhancer, ModelConfig, build_model, param_count
from .losses import LossReport, sdi_loss, si_snr, sm_loss, total_loss
from .metrics import MetricsReport, evaluate_corpus, ssnr, stoi
