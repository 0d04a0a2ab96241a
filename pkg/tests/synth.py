"""Synthetic signal builders used as ground-truth oracles in tests.

Every generator takes explicit parameters (modulation frequency, burst
count, voiced spans) so the expected metric value is known by construction.
"""

from __future__ import annotations

import numpy as np

RATE = 16_000


def silence(duration_s: float, rate: int = RATE) -> np.ndarray:
    return np.zeros(int(duration_s * rate))


def sine(freq_hz: float, duration_s: float, amplitude: float = 0.5, rate: int = RATE) -> np.ndarray:
    t = np.arange(int(duration_s * rate)) / rate
    return amplitude * np.sin(2 * np.pi * freq_hz * t)


def square_wave(freq_hz: float, duration_s: float, rate: int = RATE) -> np.ndarray:
    return np.sign(sine(freq_hz, duration_s, 1.0, rate) + 1e-12)


def white_noise(duration_s: float, amplitude: float = 0.3, rate: int = RATE, seed: int = 0) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return amplitude * rng.standard_normal(int(duration_s * rate))


def breathing(
    bpm: float,
    duration_s: float,
    rate: int = RATE,
    snr_db: float | None = 10.0,
    amplitude: float = 0.4,
    seed: int = 1,
) -> np.ndarray:
    """Noise bursts amplitude-modulated at the breathing frequency.

    Ground truth respiratory rate = bpm by construction. The raised-cosine
    envelope is sharpened so each cycle looks like a discrete breath; a
    noise floor at the requested SNR is added on top.
    """
    rng = np.random.default_rng(seed)
    n = int(duration_s * rate)
    t = np.arange(n) / rate
    f = bpm / 60.0
    envelope = (0.5 * (1.0 - np.cos(2 * np.pi * f * t))) ** 2
    signal = amplitude * envelope * rng.standard_normal(n)
    if snr_db is not None:
        sig_power = np.mean(signal**2)
        noise_power = sig_power / (10 ** (snr_db / 10.0))
        signal = signal + np.sqrt(noise_power) * rng.standard_normal(n)
    return np.clip(signal, -1.0, 1.0)


def breath_bursts(
    count: int,
    duration_s: float,
    rate: int = RATE,
    burst_s: float = 1.0,
    amplitude: float = 0.6,
    seed: int = 2,
) -> np.ndarray:
    """Exactly `count` well-separated noise bursts (deep-breath surrogate)."""
    rng = np.random.default_rng(seed)
    n = int(duration_s * rate)
    out = 0.002 * rng.standard_normal(n)
    spacing = duration_s / (count + 1)
    for k in range(1, count + 1):
        start = int((k * spacing - burst_s / 2) * rate)
        length = int(burst_s * rate)
        window = np.hanning(length)
        out[start : start + length] += amplitude * window * rng.standard_normal(length)
    return np.clip(out, -1.0, 1.0)


def tone_spans(
    spans: list[tuple[float, float]],
    total_s: float,
    freq_hz: float = 220.0,
    amplitude: float = 0.3,
    rate: int = RATE,
    noise_amplitude: float = 1e-4,
    seed: int = 3,
) -> np.ndarray:
    """Sine tone active on the given (start, end) spans, near-silence elsewhere.

    Ground truth maximum phonation time = longest span length.
    """
    rng = np.random.default_rng(seed)
    n = int(total_s * rate)
    t = np.arange(n) / rate
    out = noise_amplitude * rng.standard_normal(n)
    carrier = amplitude * np.sin(2 * np.pi * freq_hz * t)
    for start, end in spans:
        i0, i1 = int(start * rate), int(end * rate)
        out[i0:i1] += carrier[i0:i1]
    return out
