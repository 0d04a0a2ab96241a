"""Signal measurements over canonical audio.

Respiratory rate and deep-breath counting both run on a rectified,
1 Hz-low-passed amplitude envelope with scipy peak picking; maximum
phonation time uses framewise RMS gating plus a normalized-autocorrelation
voicing check in the 60-400 Hz band. Every threshold sits in MetricsConfig
so deployments can recalibrate without code changes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.signal import butter, detrend, filtfilt, find_peaks

from .domain import AcousticMetrics, PromptId
from .errors import EmptySignal, TooShort

SILENCE_SENTINEL_DBFS = -120.0


@dataclass(frozen=True)
class MetricsConfig:
    envelope_cutoff_hz: float = 1.0
    envelope_rate_hz: float = 50.0
    rr_min_spacing_s: float = 1.5
    rr_prominence_std_frac: float = 0.25
    rr_valid_bpm: tuple[float, float] = (4.0, 60.0)
    breath_min_spacing_s: float = 2.0
    breath_prominence_max_frac: float = 0.5
    mpt_frame_s: float = 0.025
    mpt_hop_s: float = 0.010
    mpt_voicing_floor_dbfs: float = -40.0
    mpt_noise_margin_db: float = 10.0
    mpt_f0_band_hz: tuple[float, float] = (60.0, 400.0)
    mpt_autocorr_min: float = 0.5
    mpt_bridge_gap_s: float = 0.150
    silence_floor_dbfs: float = -60.0


DEFAULT_CONFIG = MetricsConfig()


def _as_float(signal: np.ndarray) -> np.ndarray:
    x = np.asarray(signal)
    if x.dtype == np.int16:
        return x.astype(np.float64) / 32768.0
    return x.astype(np.float64)


def rms_dbfs(signal: np.ndarray) -> float:
    """RMS level relative to full scale; digital silence reports -120 dBFS."""
    x = _as_float(signal)
    if x.size == 0:
        raise EmptySignal("empty signal")
    rms = math.sqrt(float(np.mean(x * x)))
    if rms <= 0.0:
        return SILENCE_SENTINEL_DBFS
    return max(20.0 * math.log10(rms), SILENCE_SENTINEL_DBFS)


def clipping_fraction(signal: np.ndarray) -> float:
    x = _as_float(signal)
    if x.size == 0:
        raise EmptySignal("empty signal")
    return float(np.mean(np.abs(x) >= 0.999))


def leading_trailing_silence_s(signal: np.ndarray, rate: int, floor: float = 1e-3) -> float:
    x = np.abs(_as_float(signal))
    loud = np.flatnonzero(x > floor)
    if loud.size == 0:
        return x.size / rate
    return (loud[0] + (x.size - 1 - loud[-1])) / rate


def _envelope(signal: np.ndarray, rate: int, cfg: MetricsConfig) -> tuple[np.ndarray, float]:
    """Full-wave rectified envelope, low-passed at the breathing band and
    decimated to cfg.envelope_rate_hz. Returns (envelope, envelope_rate)."""
    x = np.abs(_as_float(signal))
    nyq = rate / 2.0
    b, a = butter(4, cfg.envelope_cutoff_hz / nyq, btype="low")
    env = filtfilt(b, a, x)
    step = max(1, int(round(rate / cfg.envelope_rate_hz)))
    return env[::step], rate / step


def respiratory_rate(
    signal: np.ndarray,
    rate: int,
    window_s: Optional[float] = None,
    cfg: MetricsConfig = DEFAULT_CONFIG,
) -> tuple[Optional[float], float]:
    """Breaths per minute from a nasal-breathing recording.

    Peaks of the breathing envelope give the primary estimate (mean
    inter-peak interval); the envelope autocorrelation's dominant period is
    an independent cross-check that sets the confidence: 1.0 when the two
    agree within 1 bpm, falling linearly to 0 at 6 bpm apart.
    """
    x = _as_float(signal)
    if window_s is not None:
        x = x[: int(window_s * rate)]
    duration = x.size / rate
    if duration < 10.0:
        raise TooShort(f"need at least 10 s, got {duration:.2f} s")
    if rms_dbfs(x) < cfg.silence_floor_dbfs:
        return None, 0.0

    env, env_rate = _envelope(x, rate, cfg)
    env = detrend(env)
    env_std = float(np.std(env))
    if env_std < 1e-6:
        return None, 0.0

    peaks, _ = find_peaks(
        env,
        distance=max(1, int(round(cfg.rr_min_spacing_s * env_rate))),
        prominence=cfg.rr_prominence_std_frac * env_std,
    )
    if peaks.size < 2:
        return None, 0.0
    span_s = (peaks[-1] - peaks[0]) / env_rate
    if span_s <= 0:
        return None, 0.0
    bpm = 60.0 * (peaks.size - 1) / span_s

    low, high = cfg.rr_valid_bpm
    if not (low <= bpm <= high):
        return None, 0.0

    bpm_ac = _autocorr_bpm(env, env_rate, cfg)
    if bpm_ac is None:
        return bpm, 0.0
    diff = abs(bpm - bpm_ac)
    confidence = float(np.clip((6.0 - diff) / 5.0, 0.0, 1.0))
    return bpm, confidence


def _autocorr_bpm(env: np.ndarray, env_rate: float, cfg: MetricsConfig) -> Optional[float]:
    """Dominant breathing period from the envelope autocorrelation."""
    n = env.size
    ac = np.correlate(env, env, mode="full")[n - 1:]
    if ac[0] <= 0:
        return None
    ac = ac / ac[0]
    low, high = cfg.rr_valid_bpm
    min_lag = max(1, int(round(60.0 / high * env_rate)))
    max_lag = min(n - 1, int(round(60.0 / low * env_rate)))
    if max_lag <= min_lag:
        return None
    band = ac[min_lag : max_lag + 1]
    peaks, _ = find_peaks(band)
    if peaks.size == 0:
        return None
    lag = (min_lag + peaks[np.argmax(band[peaks])]) / env_rate
    return 60.0 / lag


def deep_breath_count(
    signal: np.ndarray, rate: int, cfg: MetricsConfig = DEFAULT_CONFIG
) -> int:
    """Count of distinct high-energy breath events."""
    x = _as_float(signal)
    if x.size / rate < 5.0:
        raise TooShort("need at least 5 s")
    if rms_dbfs(x) < cfg.silence_floor_dbfs:
        return 0
    env, env_rate = _envelope(x, rate, cfg)
    env_max = float(env.max())
    if env_max <= 10 ** (cfg.silence_floor_dbfs / 20.0):
        return 0
    peaks, _ = find_peaks(
        env,
        distance=max(1, int(round(cfg.breath_min_spacing_s * env_rate))),
        prominence=cfg.breath_prominence_max_frac * env_max,
    )
    return int(peaks.size)


def max_phonation_time(
    signal: np.ndarray, rate: int, cfg: MetricsConfig = DEFAULT_CONFIG
) -> float:
    """Length in seconds of the longest contiguous voiced run.

    A 25 ms frame (10 ms hop) is voiced when its RMS clears
    max(-40 dBFS, noise floor + 10 dB) and its normalized autocorrelation
    peaks at >= 0.5 somewhere in the 60-400 Hz pitch band. Voiced runs
    bridge unvoiced gaps up to 150 ms.
    """
    x = _as_float(signal)
    duration = x.size / rate
    if duration < 1.0:
        raise TooShort("need at least 1 s")

    frame = int(round(cfg.mpt_frame_s * rate))
    hop = int(round(cfg.mpt_hop_s * rate))
    n_frames = 1 + max(0, (x.size - frame) // hop)
    if n_frames == 0:
        return 0.0
    idx = np.arange(frame)[None, :] + hop * np.arange(n_frames)[:, None]
    frames = x[idx]

    frame_rms = np.sqrt(np.mean(frames * frames, axis=1))
    with np.errstate(divide="ignore"):
        frame_db = 20.0 * np.log10(frame_rms)
    frame_db = np.where(np.isfinite(frame_db), frame_db, SILENCE_SENTINEL_DBFS)
    noise_floor = float(np.percentile(frame_db, 10))
    threshold_db = max(cfg.mpt_voicing_floor_dbfs, noise_floor + cfg.mpt_noise_margin_db)
    loud = frame_db > threshold_db

    # Normalized autocorrelation for all frames at once via the FFT.
    demeaned = frames - frames.mean(axis=1, keepdims=True)
    nfft = 1 << int(np.ceil(np.log2(2 * frame)))
    spectra = np.fft.rfft(demeaned, n=nfft, axis=1)
    ac = np.fft.irfft(spectra * np.conj(spectra), n=nfft, axis=1)
    lag_min = max(1, int(round(rate / cfg.mpt_f0_band_hz[1])))
    lag_max = min(frame - 1, int(round(rate / cfg.mpt_f0_band_hz[0])))
    zero_lag = ac[:, 0]
    zero_lag[zero_lag <= 0] = np.inf  # silent frame: normalized peak becomes 0
    band_peak = ac[:, lag_min : lag_max + 1].max(axis=1) / zero_lag
    periodic = band_peak >= cfg.mpt_autocorr_min

    voiced = loud & periodic
    if not voiced.any():
        return 0.0

    bridge = int(round(cfg.mpt_bridge_gap_s / cfg.mpt_hop_s))
    voiced = _bridge_gaps(voiced, bridge)
    longest = _longest_run(voiced)
    return (longest - 1) * cfg.mpt_hop_s + cfg.mpt_frame_s


def _bridge_gaps(voiced: np.ndarray, max_gap: int) -> np.ndarray:
    out = voiced.copy()
    idx = np.flatnonzero(voiced)
    for a, b in zip(idx[:-1], idx[1:]):
        if 1 < b - a <= max_gap + 1:
            out[a:b] = True
    return out


def _longest_run(mask: np.ndarray) -> int:
    best = run = 0
    for v in mask:
        run = run + 1 if v else 0
        best = max(best, run)
    return best


def measure_sample(
    signal: np.ndarray,
    rate: int,
    prompt_id: PromptId,
    part: int,
    cfg: MetricsConfig = DEFAULT_CONFIG,
) -> AcousticMetrics:
    """Compose the per-prompt metrics record; measurements that do not apply
    to the prompt (or fail their duration precondition) stay None."""
    level = rms_dbfs(signal)
    clip = clipping_fraction(signal)
    rr_bpm: Optional[float] = None
    rr_conf = 0.0
    breaths: Optional[int] = None
    mpt: Optional[float] = None
    try:
        if prompt_id is PromptId.P5_BREATHING and part == 1:
            rr_bpm, rr_conf = respiratory_rate(signal, rate, cfg=cfg)
        elif prompt_id is PromptId.P5_BREATHING and part == 2:
            breaths = deep_breath_count(signal, rate, cfg)
        elif prompt_id is PromptId.P4_PHONATION and part == 1:
            mpt = max_phonation_time(signal, rate, cfg)
    except TooShort:
        pass
    return AcousticMetrics(
        rms_dbfs=level,
        clipping_fraction=clip,
        respiratory_rate_bpm=rr_bpm,
        rr_confidence=rr_conf,
        deep_breath_count=breaths,
        max_phonation_time_s=mpt,
    )
