"""Audio container handling and canonicalization.

Canonical form everywhere in the pipeline: mono, 16 kHz, 16-bit signed PCM.
WAV/PCM is decoded natively; Opus-in-WebM/Ogg and MP4/AAC (the other
browser recorder outputs) are handed to an ffmpeg binary when one is on
PATH, since there is no reliable pure-Python decoder for them.
"""

from __future__ import annotations

import io
import shutil
import subprocess
from fractions import Fraction

import numpy as np
from scipy.io import wavfile
from scipy.signal import resample_poly

from .errors import DecodeFailure, UnsupportedFormat

CANONICAL_RATE = 16_000
FULL_SCALE = 32767

# content-type -> container tag accepted at upload time
ACCEPTED_CONTENT_TYPES = {
    "audio/wav": "wav",
    "audio/x-wav": "wav",
    "audio/wave": "wav",
    "audio/webm": "webm",
    "video/webm": "webm",
    "audio/ogg": "ogg",
    "application/ogg": "ogg",
    "audio/mp4": "mp4",
    "video/mp4": "mp4",
    "audio/aac": "mp4",
}

_FFMPEG_CONTAINERS = {"webm", "ogg", "mp4"}


def container_for(content_type: str) -> str:
    tag = ACCEPTED_CONTENT_TYPES.get(content_type.split(";")[0].strip().lower())
    if tag is None:
        raise UnsupportedFormat(f"unsupported content type: {content_type}")
    if tag in _FFMPEG_CONTAINERS and shutil.which("ffmpeg") is None:
        raise UnsupportedFormat(
            f"{content_type} uploads need an ffmpeg binary on PATH for decoding"
        )
    return tag


def decode_wav(data: bytes) -> tuple[np.ndarray, int]:
    """Decode a WAV container to float64 samples in [-1, 1] (channels kept)."""
    try:
        rate, samples = wavfile.read(io.BytesIO(data))
    except Exception as exc:
        raise DecodeFailure(f"not a decodable WAV file: {exc}") from exc
    if samples.size == 0:
        raise DecodeFailure("WAV file contains no samples")
    if samples.dtype == np.int16:
        out = samples.astype(np.float64) / 32768.0
    elif samples.dtype == np.int32:
        out = samples.astype(np.float64) / 2147483648.0
    elif samples.dtype == np.uint8:
        out = (samples.astype(np.float64) - 128.0) / 128.0
    else:
        out = samples.astype(np.float64)
    return out, int(rate)


def _decode_with_ffmpeg(data: bytes) -> tuple[np.ndarray, int]:
    cmd = [
        "ffmpeg", "-hide_banner", "-loglevel", "error",
        "-i", "pipe:0",
        "-f", "wav", "-acodec", "pcm_s16le", "pipe:1",
    ]
    try:
        proc = subprocess.run(cmd, input=data, capture_output=True, timeout=120)
    except (OSError, subprocess.TimeoutExpired) as exc:
        raise DecodeFailure(f"ffmpeg decode failed: {exc}") from exc
    if proc.returncode != 0:
        raise DecodeFailure(f"ffmpeg decode failed: {proc.stderr.decode(errors='replace')}")
    return decode_wav(proc.stdout)


def decode_container(data: bytes, container: str) -> tuple[np.ndarray, int]:
    if container == "wav":
        return decode_wav(data)
    if container in _FFMPEG_CONTAINERS:
        return _decode_with_ffmpeg(data)
    raise UnsupportedFormat(f"unsupported container: {container}")


def to_mono(samples: np.ndarray) -> np.ndarray:
    if samples.ndim == 1:
        return samples
    return samples.mean(axis=1)


def resample(samples: np.ndarray, src_rate: int, dst_rate: int) -> np.ndarray:
    if src_rate == dst_rate:
        return samples
    ratio = Fraction(dst_rate, src_rate)
    return resample_poly(samples, ratio.numerator, ratio.denominator)


def float_to_pcm16(samples: np.ndarray) -> np.ndarray:
    clipped = np.clip(samples, -1.0, 1.0)
    return np.round(clipped * FULL_SCALE).astype(np.int16)


def pcm16_to_float(samples: np.ndarray) -> np.ndarray:
    return samples.astype(np.float64) / 32768.0


def canonicalize(data: bytes, container: str) -> np.ndarray:
    """Decode + downmix + resample to canonical mono 16 kHz int16 samples."""
    samples, rate = decode_container(data, container)
    mono = to_mono(samples)
    return float_to_pcm16(resample(mono, rate, CANONICAL_RATE))


def canonical_pcm_bytes(pcm: np.ndarray) -> bytes:
    """Raw little-endian int16 bytes; this is what checksums are taken over."""
    return pcm.astype("<i2").tobytes()


def pcm_from_bytes(raw: bytes) -> np.ndarray:
    return np.frombuffer(raw, dtype="<i2")


def encode_wav_pcm16(samples: np.ndarray, rate: int = CANONICAL_RATE) -> bytes:
    """Wrap samples (float in [-1,1] or int16) in a PCM16 WAV container."""
    if samples.dtype != np.int16:
        samples = float_to_pcm16(np.asarray(samples, dtype=np.float64))
    buf = io.BytesIO()
    wavfile.write(buf, rate, samples)
    return buf.getvalue()
