import numpy as np
import pytest

from wvdnet.analytic import ComplexSignal, analytic_signal, fft
from wvdnet.signal_core import Signal


def direct_dft(x):
    """O(N^2) reference transform."""
    x = np.asarray(x, dtype=np.complex128)
    n = len(x)
    k = np.arange(n)
    return np.exp(-2j * np.pi * np.outer(k, k) / n) @ x


class TestFft:
    def test_impulse(self):
        np.testing.assert_allclose(fft([1, 0, 0, 0]), np.ones(4), atol=1e-12)

    def test_dc(self):
        np.testing.assert_allclose(fft([1, 1, 1, 1]), [4, 0, 0, 0], atol=1e-12)

    def test_prime_length_matches_direct_dft(self):
        rng = np.random.default_rng(17)
        x = rng.standard_normal(17) + 1j * rng.standard_normal(17)
        np.testing.assert_allclose(fft(x), direct_dft(x), atol=1e-9)

    def test_round_trip(self):
        rng = np.random.default_rng(17)
        x = rng.standard_normal(17) + 1j * rng.standard_normal(17)
        back = fft(fft(x), inverse=True)
        assert np.abs(back - x).max() < 1e-9

    def test_parseval(self):
        for n in (16, 100, 257):
            x = np.random.default_rng(n).standard_normal(n)
            spectral = np.sum(np.abs(fft(x)) ** 2)
            temporal = np.sum(np.abs(x) ** 2)
            assert abs(spectral - n * temporal) < 1e-9 * spectral

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            fft([])


class TestAnalyticSignal:
    def test_cosine_becomes_complex_exponential(self):
        rate = 4000.0
        t = np.arange(4000) / rate
        out = analytic_signal(Signal(np.cos(2 * np.pi * 100.0 * t), rate))
        modulus = np.abs(out.samples[100:-100])
        np.testing.assert_allclose(modulus, 1.0, atol=1e-6)
        expected = np.exp(2j * np.pi * 100.0 * t)
        np.testing.assert_allclose(out.samples[100:-100], expected[100:-100], atol=1e-3)

    def test_zeros_map_to_zeros(self):
        out = analytic_signal(Signal(np.zeros(64), 1000.0))
        np.testing.assert_array_equal(out.samples, np.zeros(64))

    def test_negative_frequency_energy_suppressed(self):
        # oracle: inspect the output spectrum directly
        x = np.random.default_rng(5).standard_normal(1024)
        out = analytic_signal(Signal(x, 4000.0))
        spectrum = np.fft.fft(out.samples)
        negative = np.sum(np.abs(spectrum[1024 // 2 + 1 :]) ** 2)
        total = np.sum(np.abs(spectrum) ** 2)
        assert negative < 1e-10 * total

    def test_real_part_round_trips(self):
        for n in (33, 256, 1001):
            x = np.random.default_rng(n).standard_normal(n)
            out = analytic_signal(Signal(x, 4000.0))
            rel = np.abs(out.samples.real - x).max() / np.abs(x).max()
            assert rel < 1e-9

    def test_energy_doubles_for_zero_mean_broadband(self):
        x = np.random.default_rng(6).standard_normal(1024)
        x -= x.mean()
        out = analytic_signal(Signal(x, 4000.0))
        ratio = np.sum(np.abs(out.samples) ** 2) / np.sum(x**2)
        assert abs(ratio - 2.0) < 0.02

    def test_complex_input_rejected(self):
        sig = Signal(np.zeros(8), 1000.0)
        object.__setattr__(sig, "samples", np.zeros(8, dtype=complex))
        with pytest.raises(ValueError, match="real"):
            analytic_signal(sig)

    def test_too_short_rejected(self):
        with pytest.raises(ValueError):
            analytic_signal(Signal([1.0], 1000.0))


def test_complex_signal_validation():
    with pytest.raises(ValueError):
        ComplexSignal(np.zeros(4, dtype=complex), -1.0)
    sig = ComplexSignal(np.zeros(8, dtype=complex), 2000.0)
    assert sig.duration_s == pytest.approx(0.004)
