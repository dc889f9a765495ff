"""FFT plumbing and the analytic-signal construction.

The analytic signal keeps only non-negative frequencies, which is what lets
the quadratic time-frequency transform cover [0, fs/2) without mirrored
aliases. Everything here runs in double precision.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .signal_core import Signal


@dataclass(frozen=True)
class ComplexSignal:
    """A uniformly sampled complex waveform."""

    samples: np.ndarray
    sample_rate_hz: float

    def __post_init__(self):
        if self.sample_rate_hz <= 0:
            raise ValueError(f"sample_rate_hz must be positive, got {self.sample_rate_hz}")
        object.__setattr__(self, "samples", np.asarray(self.samples, dtype=np.complex128))
        if self.samples.ndim != 1:
            raise ValueError("samples must be one-dimensional")

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def duration_s(self) -> float:
        return len(self.samples) / self.sample_rate_hz


def fft(samples, inverse: bool = False) -> np.ndarray:
    """Discrete Fourier transform, any length.

    Forward: X[k] = sum_n x[n] exp(-2j pi k n / N). Inverse carries the 1/N
    factor, so fft(fft(x), inverse=True) round-trips.
    """
    x = np.asarray(samples, dtype=np.complex128)
    if x.size == 0:
        raise ValueError("fft of an empty sequence")
    return np.fft.ifft(x) if inverse else np.fft.fft(x)


def analytic_signal(signal: Signal) -> ComplexSignal:
    """Analytic version of a real signal via the frequency-domain Hilbert method.

    Doubles positive-frequency bins, zeroes negative ones, and leaves DC (and
    the Nyquist bin for even lengths) untouched. The real part of the result
    equals the input to round-off.
    """
    if np.iscomplexobj(signal.samples):
        raise ValueError("analytic_signal expects a real-valued input signal")
    n = len(signal)
    if n < 2:
        raise ValueError(f"analytic_signal needs at least 2 samples, got {n}")
    spectrum = np.fft.fft(signal.samples)
    gain = np.zeros(n)
    gain[0] = 1.0
    if n % 2 == 0:
        gain[1 : n // 2] = 2.0
        gain[n // 2] = 1.0
    else:
        gain[1 : (n + 1) // 2] = 2.0
    return ComplexSignal(np.fft.ifft(spectrum * gain), signal.sample_rate_hz)
