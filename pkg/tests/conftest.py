"""Shared test helpers: finite-difference gradients and a direct (non-FFT)
evaluation of the quadratic time-frequency sum used as the independent oracle."""

import numpy as np


def numeric_gradient(loss_fn, array, h=1e-6):
    """Central-difference gradient of a scalar loss w.r.t. every array element."""
    grad = np.zeros_like(array, dtype=np.float64)
    it = np.nditer(array, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        original = array[idx]
        array[idx] = original + h
        hi = loss_fn()
        array[idx] = original - h
        lo = loss_fn()
        array[idx] = original
        grad[idx] = (hi - lo) / (2 * h)
    return grad


def assert_grads_close(analytic, numeric, rel_tol=1e-4, abs_floor=1e-8, abs_tol=1e-6):
    """Elementwise check: relative error below rel_tol, except near-zero
    entries which are compared absolutely."""
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    assert analytic.shape == numeric.shape
    small = np.abs(analytic) < abs_floor
    if small.any():
        assert np.abs(analytic[small] - numeric[small]).max() < abs_tol
    rest = ~small
    if rest.any():
        rel = np.abs(analytic[rest] - numeric[rest]) / np.maximum(
            np.abs(analytic[rest]), np.abs(numeric[rest])
        )
        assert rel.max() < rel_tol, f"max relative gradient error {rel.max():.3g}"


def direct_quadratic_tfd(samples, window_coeffs, time_stride, n_freq_bins):
    """O(rows * bins * lags) evaluation of the defining sum:

        W[n][k] = 2 Re( sum_m h[m] x[n+m] conj(x[n-m]) exp(-2j pi k m / F) )

    with out-of-range samples read as zero. Deliberately avoids the FFT path.
    """
    samples = np.asarray(samples, dtype=np.complex128)
    half = len(window_coeffs) // 2
    rows = np.arange(0, len(samples), time_stride)
    lags = np.arange(-half, half + 1)
    exp_matrix = np.exp(
        -2j * np.pi * np.outer(np.arange(n_freq_bins), lags) / n_freq_bins
    )
    out = np.zeros((len(rows), n_freq_bins))
    for ri, n in enumerate(rows):
        products = np.zeros(len(lags), dtype=np.complex128)
        for mi, m in enumerate(lags):
            i, j = n + m, n - m
            if 0 <= i < len(samples) and 0 <= j < len(samples):
                products[mi] = window_coeffs[mi] * samples[i] * np.conj(samples[j])
        out[ri] = 2.0 * (exp_matrix @ products).real
    return out
