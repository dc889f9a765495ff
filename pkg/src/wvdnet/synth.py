"""Deterministic synthetic dataset generation for self-contained runs.

Three clip families, laid out folder-per-class with numeric prefixes so label
order matches generator order: pure tones with per-clip frequency jitter,
linear frequency sweeps with a random cyclic phase (so any 4-second window of
a longer sweep looks in-distribution), and band-limited noise with a bursty
amplitude envelope. Same seed, byte-identical files.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .config import RunConfig
from .datasets import write_wav_pcm16

GENERATOR_KINDS = ("tone", "chirp", "noise")


def class_dir_name(label: int) -> str:
    return f"{label}_{GENERATOR_KINDS[label % 3]}"


def tone_samples(rng, n, rate_hz, band):
    freq = rng.uniform(*band)
    phase = rng.uniform(0, 2 * np.pi)
    amp = rng.uniform(0.4, 0.6)
    t = np.arange(n) / rate_hz
    return amp * np.sin(2 * np.pi * freq * t + phase), freq


def chirp_samples(rng, n, rate_hz, f_start=(150.0, 250.0), f_end=(1100.0, 1300.0),
                  sweep_period_s=None):
    """Sawtooth frequency sweep with continuous phase; the sweep restarts
    every sweep_period_s (whole clip by default) at a random cyclic offset."""
    f0 = rng.uniform(*f_start)
    f1 = rng.uniform(*f_end)
    amp = rng.uniform(0.4, 0.6)
    period = n / rate_hz if sweep_period_s is None else sweep_period_s
    offset = rng.uniform(0, period)
    t = np.arange(n) / rate_hz
    inst_freq = f0 + (f1 - f0) * (((t + offset) % period) / period)
    phase = 2 * np.pi * np.cumsum(inst_freq) / rate_hz
    return amp * np.sin(phase), (f0, f1)


def noise_burst_samples(rng, n, rate_hz, low=(1300.0, 1500.0), high=(1700.0, 1900.0)):
    lo = rng.uniform(*low)
    hi = rng.uniform(*high)
    white = rng.standard_normal(n)
    spectrum = np.fft.rfft(white)
    freqs = np.fft.rfftfreq(n, d=1.0 / rate_hz)
    spectrum[(freqs < lo) | (freqs > hi)] = 0
    banded = np.fft.irfft(spectrum, n)
    bursts = rng.uniform(2.0, 4.0)
    envelope = np.sin(np.pi * bursts * np.arange(n) / n) ** 2
    shaped = banded * envelope
    peak = np.abs(shaped).max()
    amp = rng.uniform(0.4, 0.6)
    return (shaped / peak * amp) if peak > 0 else shaped, (lo, hi)


def generate_dataset(out_root: str | Path, cfg: RunConfig) -> int:
    """Write cfg.synth_classes x cfg.synth_clips_per_class labeled WAV clips.

    Classes beyond the first three reuse the generator families with band
    offsets. Returns the number of files written.
    """
    out_root = Path(out_root)
    rng = np.random.default_rng(cfg.seed)
    n = round(cfg.clip_seconds * cfg.synth_rate_hz)
    written = 0
    for label in range(cfg.synth_classes):
        directory = out_root / class_dir_name(label)
        directory.mkdir(parents=True, exist_ok=True)
        kind = GENERATOR_KINDS[label % 3]
        shift = 150.0 * (label // 3)
        for clip_index in range(cfg.synth_clips_per_class):
            if kind == "tone":
                samples, _ = tone_samples(
                    rng, n, cfg.synth_rate_hz, (cfg.tone_low_hz + shift, cfg.tone_high_hz + shift)
                )
            elif kind == "chirp":
                samples, _ = chirp_samples(rng, n, cfg.synth_rate_hz)
            else:
                samples, _ = noise_burst_samples(rng, n, cfg.synth_rate_hz)
            samples = samples + 0.005 * rng.standard_normal(n)
            write_wav_pcm16(directory / f"clip_{clip_index:03d}.wav", samples, cfg.synth_rate_hz)
            written += 1
    return written
