"""Quadratic and short-time time-frequency transforms.

The central transform builds, per output time n, the lag product
x[n+m] * conj(x[n-m]) tapered by a symmetric lag window h[m], and Fourier
transforms it over m:

    W[n][k] = 2 * Re( sum_m h[m] x[n+m] conj(x[n-m]) exp(-2j pi k m / F) )

with F frequency bins. Because the lag step is two signal samples, bin k
corresponds to k * rate / (2F) Hz, covering [0, rate/2) for analytic input.
The lag kernel is conjugate-symmetric in m, so the sum is real up to
round-off; values are kept signed until normalize_image.

Images are stored rows = time, columns = frequency, frequency increasing with
column index. PNG/CSV export formats are pinned by golden tests.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass, replace

import numpy as np

from .analytic import ComplexSignal

IMAGE_KINDS = ("pseudo_wvd", "wvd", "spectrogram")


@dataclass(frozen=True)
class TFDImage:
    """A 2D time x frequency energy array with axis metadata."""

    values: np.ndarray
    time_axis_s: np.ndarray
    freq_axis_hz: np.ndarray
    source_rate_hz: float
    kind: str

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=np.float64))
        object.__setattr__(self, "time_axis_s", np.asarray(self.time_axis_s, dtype=np.float64))
        object.__setattr__(self, "freq_axis_hz", np.asarray(self.freq_axis_hz, dtype=np.float64))
        if self.kind not in IMAGE_KINDS:
            raise ValueError(f"unknown image kind {self.kind!r}")
        if self.values.ndim != 2:
            raise ValueError("values must be a 2D array")
        rows, cols = self.values.shape
        if len(self.time_axis_s) != rows or len(self.freq_axis_hz) != cols:
            raise ValueError(
                f"axis lengths ({len(self.time_axis_s)}, {len(self.freq_axis_hz)}) "
                f"do not match array shape {self.values.shape}"
            )
        if cols > 1 and not np.all(np.diff(self.freq_axis_hz) > 0):
            raise ValueError("freq_axis_hz must be strictly increasing")
        nyquist = self.source_rate_hz / 2.0
        if self.freq_axis_hz[0] < -1e-9 or self.freq_axis_hz[-1] > nyquist * (1 + 1e-12):
            raise ValueError("freq_axis_hz must lie within [0, source_rate_hz / 2]")

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


@dataclass(frozen=True)
class LagWindow:
    """Symmetric taper over the lag axis, peak 1 at the center."""

    coefficients: np.ndarray
    name: str

    def __post_init__(self):
        object.__setattr__(
            self, "coefficients", np.asarray(self.coefficients, dtype=np.float64)
        )
        n = len(self.coefficients)
        if n % 2 == 0:
            raise ValueError(f"lag window length must be odd, got {n}")
        if abs(self.coefficients[n // 2] - 1.0) > 1e-12:
            raise ValueError("lag window center coefficient must be 1")
        if not np.allclose(self.coefficients, self.coefficients[::-1], atol=1e-12):
            raise ValueError("lag window must be symmetric")

    def __len__(self) -> int:
        return len(self.coefficients)

    @property
    def half_length(self) -> int:
        return len(self.coefficients) // 2


def hamming_lag_window(length: int) -> LagWindow:
    if length < 1 or length % 2 == 0:
        raise ValueError(f"lag window length must be a positive odd integer, got {length}")
    if length == 1:
        return LagWindow(np.ones(1), "hamming-1")
    coeffs = np.hamming(length)
    coeffs /= coeffs[length // 2]  # np.hamming peaks at 1 for odd lengths; keep exact
    return LagWindow(coeffs, f"hamming-{length}")


def rectangular_lag_window(length: int) -> LagWindow:
    if length < 1 or length % 2 == 0:
        raise ValueError(f"lag window length must be a positive odd integer, got {length}")
    return LagWindow(np.ones(length), f"rect-{length}")


def default_lag_window_length(num_samples: int) -> int:
    """Default taper length: 127, capped at the largest odd value <= N/4."""
    cap = num_samples // 4
    if cap % 2 == 0:
        cap -= 1
    return max(1, min(127, cap))


def ambiguity_product(x: ComplexSignal, n: int, m: int) -> complex:
    """Lag product x[n+m] * conj(x[n-m]); zero when either index is outside."""
    i, j = n + m, n - m
    size = len(x)
    if i < 0 or i >= size or j < 0 or j >= size:
        return 0j
    return complex(x.samples[i] * np.conj(x.samples[j]))


def _lag_kernel(x: ComplexSignal, window: LagWindow, rows: np.ndarray) -> np.ndarray:
    """Windowed lag products for each output row, columns ordered m = -L..L."""
    half = window.half_length
    padded = np.concatenate(
        [np.zeros(half, dtype=np.complex128), x.samples, np.zeros(half, dtype=np.complex128)]
    )
    m = np.arange(-half, half + 1)
    plus = padded[rows[:, None] + m[None, :] + half]
    minus = padded[rows[:, None] - m[None, :] + half]
    return window.coefficients[None, :] * plus * np.conj(minus)


def pseudo_wvd(
    x: ComplexSignal,
    window: LagWindow,
    time_stride: int,
    n_freq_bins: int,
    kind: str = "pseudo_wvd",
) -> TFDImage:
    """Lag-windowed quadratic time-frequency image of an analytic signal.

    Output rows sit at samples 0, time_stride, 2*time_stride, ...; column k
    is k * rate / (2 * n_freq_bins) Hz. Lags beyond the signal ends read as
    zero. Lag offsets alias modulo n_freq_bins, which matches the defining
    sum exactly, so the window may extend up to 2 * n_freq_bins - 1 taps.
    """
    if len(x) == 0:
        raise ValueError("cannot transform an empty signal")
    if time_stride < 1:
        raise ValueError(f"time_stride must be a positive integer, got {time_stride}")
    if n_freq_bins < 1:
        raise ValueError(f"n_freq_bins must be a positive integer, got {n_freq_bins}")
    if len(window) > 2 * n_freq_bins - 1:
        raise ValueError(
            f"lag window length {len(window)} exceeds 2 * n_freq_bins - 1 = {2 * n_freq_bins - 1}"
        )
    rows = np.arange(0, len(x), time_stride)
    kernel = _lag_kernel(x, window, rows)

    # Fold lag columns onto their residues mod n_freq_bins, then rotate so
    # residue 0 holds m = 0: the FFT over that buffer equals the defining sum.
    half = window.half_length
    width = len(window)
    blocks = -(-width // n_freq_bins)
    padded = np.zeros((len(rows), blocks * n_freq_bins), dtype=np.complex128)
    padded[:, :width] = kernel
    folded = padded.reshape(len(rows), blocks, n_freq_bins).sum(axis=1)
    folded = np.roll(folded, (-half) % n_freq_bins, axis=1)

    values = 2.0 * np.fft.fft(folded, axis=1).real
    rate = x.sample_rate_hz
    time_axis = rows / rate
    freq_axis = np.arange(n_freq_bins) * rate / (2.0 * n_freq_bins)
    return TFDImage(values, time_axis, freq_axis, rate, kind)


def wvd(x: ComplexSignal, time_stride: int = 1, n_freq_bins: int | None = None) -> TFDImage:
    """Plain (unwindowed) variant: rectangular window over all available lags.

    Memory grows as rows x lag extent; pass n_freq_bins to cap the lag window
    (at 2 * n_freq_bins - 1) for long signals.
    """
    if len(x) == 0:
        raise ValueError("cannot transform an empty signal")
    if n_freq_bins is None:
        n_freq_bins = len(x)
    length = min(2 * len(x) - 1, 2 * n_freq_bins - 1)
    return pseudo_wvd(x, rectangular_lag_window(length), time_stride, n_freq_bins, kind="wvd")


def wvd_time_marginal(image: TFDImage, x: ComplexSignal) -> np.ndarray:
    """Per-sample energy |x[n]|^2 recovered from a full-lag, stride-1 image.

    Only the m = 0 lag survives averaging over frequency bins, so the row
    mean divided by the factor 2 in the transform is the instantaneous power.
    """
    if image.kind != "wvd":
        raise ValueError("time marginal requires a plain (rectangular full-lag) image")
    if image.shape[0] != len(x):
        raise ValueError(
            f"image has {image.shape[0]} rows but the signal has {len(x)} samples; "
            "the marginal needs time_stride 1"
        )
    return image.values.mean(axis=1) / 2.0


def spectrogram(x: ComplexSignal, window_len: int, hop: int) -> TFDImage:
    """Squared-magnitude short-time Fourier transform, Hamming analysis window.

    Keeps the non-negative frequency bins 0..window_len//2; rows are window
    centers at starts 0, hop, 2*hop, ...
    """
    if hop < 1:
        raise ValueError(f"hop must be a positive integer, got {hop}")
    if window_len < 1:
        raise ValueError(f"window_len must be a positive integer, got {window_len}")
    if window_len > len(x):
        raise ValueError(f"window_len {window_len} exceeds signal length {len(x)}")
    taper = np.hamming(window_len)
    starts = np.arange(0, len(x) - window_len + 1, hop)
    frames = x.samples[starts[:, None] + np.arange(window_len)[None, :]] * taper[None, :]
    spectra = np.fft.fft(frames, axis=1)
    keep = window_len // 2 + 1
    values = np.abs(spectra[:, :keep]) ** 2
    rate = x.sample_rate_hz
    time_axis = (starts + (window_len - 1) / 2.0) / rate
    freq_axis = np.arange(keep) * rate / window_len
    return TFDImage(values, time_axis, freq_axis, rate, "spectrogram")


def _axis_positions(out_len: int, in_len: int) -> np.ndarray:
    """Source coordinates for each output index, endpoints mapped to endpoints."""
    if out_len == 1:
        return np.array([(in_len - 1) / 2.0])
    return np.arange(out_len) * (in_len - 1) / (out_len - 1)


def resize_bilinear(image: TFDImage, out_rows: int, out_cols: int) -> TFDImage:
    """Bilinear resample to (out_rows, out_cols); axes are resampled to match."""
    if out_rows < 1 or out_cols < 1:
        raise ValueError(f"requested dimensions must be positive, got {out_rows}x{out_cols}")
    rows, cols = image.shape
    if rows < 2 or cols < 2:
        raise ValueError(f"input must be at least 2x2, got {rows}x{cols}")

    def interp_1d(values: np.ndarray, pos: np.ndarray, axis: int) -> np.ndarray:
        lo = np.floor(pos).astype(int)
        lo = np.clip(lo, 0, values.shape[axis] - 2)
        frac = pos - lo
        lower = np.take(values, lo, axis=axis)
        upper = np.take(values, lo + 1, axis=axis)
        shape = [1, 1]
        shape[axis] = len(pos)
        f = frac.reshape(shape) if values.ndim == 2 else frac
        return lower * (1 - f) + upper * f

    rpos = _axis_positions(out_rows, rows)
    cpos = _axis_positions(out_cols, cols)
    values = interp_1d(interp_1d(image.values, rpos, axis=0), cpos, axis=1)
    time_axis = interp_1d(image.time_axis_s, rpos, axis=0)
    freq_axis = interp_1d(image.freq_axis_hz, cpos, axis=0)
    return TFDImage(values, time_axis, freq_axis, image.source_rate_hz, image.kind)


def normalize_image(image: TFDImage) -> TFDImage:
    """Clamp negatives to zero, then min-max scale into [0, 1].

    An image that is constant after clamping maps to all zeros.
    """
    clamped = np.maximum(image.values, 0.0)
    lo, hi = clamped.min(), clamped.max()
    if hi - lo == 0:
        return replace(image, values=np.zeros_like(clamped))
    return replace(image, values=(clamped - lo) / (hi - lo))


def log_compress(image: TFDImage) -> TFDImage:
    """log1p on the non-negative part; intended between resize and normalize."""
    return replace(image, values=np.log1p(np.maximum(image.values, 0.0)))


# -- export formats ----------------------------------------------------------


def image_to_png_bytes(image: TFDImage) -> bytes:
    """8-bit grayscale PNG, pixel = round(255 * v), row 0 (earliest time) on top."""
    gray = np.clip(np.round(image.values * 255.0), 0, 255).astype(np.uint8)
    height, width = gray.shape

    def chunk(tag: bytes, payload: bytes) -> bytes:
        return (
            struct.pack(">I", len(payload))
            + tag
            + payload
            + struct.pack(">I", zlib.crc32(tag + payload) & 0xFFFFFFFF)
        )

    header = struct.pack(">IIBBBBB", width, height, 8, 0, 0, 0, 0)
    raw = b"".join(b"\x00" + row.tobytes() for row in gray)
    return (
        b"\x89PNG\r\n\x1a\n"
        + chunk(b"IHDR", header)
        + chunk(b"IDAT", zlib.compress(raw, 6))
        + chunk(b"IEND", b"")
    )


def image_to_csv(image: TFDImage) -> str:
    """Full-precision CSV with a two-line axis-metadata header."""
    lines = [
        "# kind={} source_rate_hz={} time_s={}".format(
            image.kind,
            repr(float(image.source_rate_hz)),
            ",".join(repr(float(v)) for v in image.time_axis_s),
        ),
        "# freq_hz={}".format(",".join(repr(float(v)) for v in image.freq_axis_hz)),
    ]
    for row in image.values:
        lines.append(",".join(repr(float(v)) for v in row))
    return "\n".join(lines) + "\n"


def image_from_csv(text: str) -> TFDImage:
    lines = text.strip("\n").split("\n")
    if len(lines) < 3 or not lines[0].startswith("# kind=") or not lines[1].startswith("# freq_hz="):
        raise ValueError("malformed image CSV: expected a two-line '#' header")
    head = lines[0][2:]
    kind, rest = head.split(" source_rate_hz=", 1)
    kind = kind[len("kind=") :]
    rate_str, time_str = rest.split(" time_s=", 1)
    time_axis = np.array([float(v) for v in time_str.split(",")])
    freq_axis = np.array([float(v) for v in lines[1][len("# freq_hz=") :].split(",")])
    values = np.array([[float(v) for v in line.split(",")] for line in lines[2:]])
    return TFDImage(values, time_axis, freq_axis, float(rate_str), kind)
