import numpy as np
import pytest

from binse import dsp, metrics
from conftest import voiced_signal
from stoi_reference import reference_stoi
from binse.errors import DegenerateInputError, InsufficientSignalError, InvalidInputError


def speech_wave(n=16000, seed=0, f0=120.0):
    return dsp.Waveform(voiced_signal(n, f0=f0, seed=seed))


def noisy(ref, snr_db, seed=0):
    rng = np.random.default_rng(seed)
    n = rng.normal(0, 1, len(ref))
    n *= np.sqrt(np.mean(ref.samples**2) / np.mean(n**2) * 10 ** (-snr_db / 10))
    return dsp.Waveform(ref.samples + n)


class TestSsnr:
    def test_perfect_estimate_ceiling(self):
        ref = speech_wave()
        assert metrics.ssnr(ref, ref) == pytest.approx(35.0)

    def test_gross_error_hits_floor(self):
        # est = -3*ref makes the per-frame error power 16x the reference
        # (-12 dB), which clips to the -10 dB floor in every active frame
        ref = speech_wave()
        assert metrics.ssnr(ref, dsp.Waveform(-3.0 * ref.samples)) == pytest.approx(-10.0)

    def test_monotonic_in_snr(self):
        ref = speech_wave(seed=1)
        vals = [metrics.ssnr(ref, noisy(ref, snr, seed=7)) for snr in (-5, 5, 15)]
        assert vals[0] < vals[1] < vals[2]

    def test_zero_reference_rejected(self):
        z = dsp.Waveform(np.zeros(16000))
        with pytest.raises(DegenerateInputError):
            metrics.ssnr(z, z)

    def test_length_mismatch(self):
        with pytest.raises(InvalidInputError):
            metrics.ssnr(speech_wave(), dsp.Waveform(np.zeros(100)))


class TestStoi:
    def test_identity_is_one(self):
        ref = speech_wave()
        assert metrics.stoi(ref, ref) == pytest.approx(1.0, abs=1e-6)

    def test_monotonic_under_noise(self):
        ref = speech_wave(seed=2)
        vals = [metrics.stoi(ref, noisy(ref, snr, seed=3)) for snr in (20, 0, -10)]
        assert vals[0] > vals[1] > vals[2]

    def test_independent_noise_near_zero(self):
        ref = speech_wave(seed=4)
        junk = dsp.Waveform(np.random.default_rng(8).normal(0, 0.1, len(ref)))
        assert metrics.stoi(ref, junk) < 0.2

    def test_scale_invariance_of_estimate(self):
        ref = speech_wave(seed=5)
        est = noisy(ref, 5, seed=6)
        a = metrics.stoi(ref, est)
        b = metrics.stoi(ref, dsp.Waveform(13.0 * est.samples))
        assert a == pytest.approx(b, abs=1e-9)

    def test_too_short_rejected(self):
        short = dsp.Waveform(np.random.default_rng(0).uniform(-1, 1, 2000))
        with pytest.raises(InsufficientSignalError):
            metrics.stoi(short, short)

    @pytest.mark.parametrize("seed,snr", [(0, 20), (1, 10), (2, 5), (3, 0),
                                          (4, -5), (5, -10), (6, 15), (7, 2),
                                          (8, -2), (9, 8)])
    def test_agrees_with_independent_reference(self, seed, snr):
        ref = speech_wave(seed=seed, f0=100 + 11 * seed)
        est = noisy(ref, snr, seed=seed + 100)
        ours = metrics.stoi(ref, est)
        theirs = reference_stoi(ref.samples, est.samples, ref.sample_rate)
        assert ours == pytest.approx(theirs, abs=0.01)


class TestEvaluateCorpus:
    def _pairs(self, n=3):
        out = []
        for i in range(n):
            ref = speech_wave(seed=i, f0=100 + 20 * i)
            out.append((f"utt{i}", ref, noisy(ref, 0, seed=i), noisy(ref, 10, seed=i + 50)))
        return out

    def test_est_equals_noisy_zero_improvement(self):
        pairs = [(name, ref, nz, nz) for name, ref, nz, _ in self._pairs()]
        report = metrics.evaluate_corpus(pairs)
        assert report.means["si_snr_improvement_db"] == pytest.approx(0.0, abs=1e-9)

    def test_est_equals_ref_perfect_scores(self):
        pairs = [(name, ref, nz, ref) for name, ref, nz, _ in self._pairs()]
        report = metrics.evaluate_corpus(pairs)
        assert report.means["stoi"] == pytest.approx(1.0, abs=1e-6)
        assert report.means["ssnr_db"] == pytest.approx(35.0)

    def test_single_pair_means_equal_values(self):
        report = metrics.evaluate_corpus(self._pairs(1))
        entry = report.per_utterance[0]
        for key, mean in report.means.items():
            assert mean == pytest.approx(entry[key])

    def test_failures_recorded(self):
        pairs = self._pairs(2)
        ref = pairs[0][1]
        pairs.append(("bad", ref, pairs[0][2], dsp.Waveform(np.zeros(100))))
        report = metrics.evaluate_corpus(pairs)
        assert report.n_evaluated == 2 and report.n_failed == 1

    def test_pesq_sidecar_merged(self):
        report = metrics.evaluate_corpus(self._pairs(2), pesq_scores={"utt0": 3.1, "utt1": 2.7})
        assert report.means["pesq"] == pytest.approx(2.9)
        assert "PESQ" in report.to_table()

    def test_empty_corpus_rejected(self):
        with pytest.raises(InvalidInputError):
            metrics.evaluate_corpus([])
