"""Resumable chunked uploads, canonicalization, quality gating, curation.

Upload staging is crash-safe: chunk bytes land in a sparse .bin file and the
token's received-range set is rewritten atomically after every append, so a
restarted process resumes exactly where the disk state left off.
"""

from __future__ import annotations

import json
import os
import uuid
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from pathlib import Path
from typing import Optional

import numpy as np

from . import metrics as sig
from .audio import CANONICAL_RATE, canonical_pcm_bytes, canonicalize, container_for
from .blobs import BlobStore, sha256_hex
from .domain import (
    AudioSample,
    CohortLabel,
    ExclusionRule,
    InclusionDecision,
    PromptId,
    PromptSpec,
    QualityReport,
    SessionRecord,
    TranscribePolicy,
    catalog_by_id,
    parse_rfc3339,
    rfc3339,
    utc_now,
)
from .errors import (
    ChecksumMismatch,
    CohortViolation,
    IncompleteUpload,
    PayloadTooLarge,
    RangeConflict,
    SessionNotFrozen,
    TokenExpired,
)
from .protocol import required_pages

MAX_UPLOAD_BYTES = 64 * 1024 * 1024
TOKEN_TTL = timedelta(hours=24)

# quality gate thresholds
NEAR_SILENCE_DBFS = -45.0
MAX_CLIPPING_FRACTION = 0.05
DURATION_GRACE_S = 10.0
SPEECH_FLOOR_S = 3.0
NASAL_BREATHING_FLOOR_S = 20.0


def duration_floor_s(prompt_id: PromptId, part: int) -> float:
    if prompt_id is PromptId.P5_BREATHING and part == 1:
        return NASAL_BREATHING_FLOOR_S
    return SPEECH_FLOOR_S


def quality_gate(
    signal: np.ndarray, rate: int, prompt: PromptSpec, part: int
) -> QualityReport:
    """Operational definition of a usable recording for one prompt part."""
    duration = signal.size / rate
    level = sig.rms_dbfs(signal)
    clip = sig.clipping_fraction(signal)
    edges = sig.leading_trailing_silence_s(signal, rate)
    reasons: list[str] = []
    if duration < duration_floor_s(prompt.prompt_id, part):
        reasons.append("TooShort")
    if duration > prompt.max_duration_s + DURATION_GRACE_S:
        reasons.append("TooLong")
    if level < NEAR_SILENCE_DBFS:
        reasons.append("NearSilence")
    if clip > MAX_CLIPPING_FRACTION:
        reasons.append("Clipping")
    return QualityReport(
        duration_s=duration,
        rms_dbfs=level,
        clipping_fraction=clip,
        leading_trailing_silence_s=edges,
        reasons=tuple(reasons),
    )


# --- upload staging ------------------------------------------------------------------

@dataclass
class UploadToken:
    token_id: str
    session_id: str
    prompt_id: PromptId
    part: int
    declared_size: int
    container: str
    content_type: str
    expires_at: datetime
    ranges: list[tuple[int, int]] = field(default_factory=list)  # half-open, normalized
    finalized_sample: Optional[dict] = None

    @property
    def received_bytes(self) -> int:
        return sum(e - s for s, e in self.ranges)

    def covers_all(self) -> bool:
        return self.ranges == [(0, self.declared_size)] or (
            self.declared_size == 0 and not self.ranges
        )

    def to_dict(self) -> dict:
        return {
            "token_id": self.token_id,
            "session_id": self.session_id,
            "prompt_id": self.prompt_id.value,
            "part": self.part,
            "declared_size": self.declared_size,
            "container": self.container,
            "content_type": self.content_type,
            "expires_at": rfc3339(self.expires_at),
            "ranges": [list(r) for r in self.ranges],
            "finalized_sample": self.finalized_sample,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "UploadToken":
        return cls(
            token_id=d["token_id"],
            session_id=d["session_id"],
            prompt_id=PromptId(d["prompt_id"]),
            part=d["part"],
            declared_size=d["declared_size"],
            container=d["container"],
            content_type=d["content_type"],
            expires_at=parse_rfc3339(d["expires_at"]),
            ranges=[tuple(r) for r in d.get("ranges", [])],
            finalized_sample=d.get("finalized_sample"),
        )


def _merge_ranges(ranges: list[tuple[int, int]]) -> list[tuple[int, int]]:
    merged: list[tuple[int, int]] = []
    for start, end in sorted(ranges):
        if merged and start <= merged[-1][1]:
            merged[-1] = (merged[-1][0], max(merged[-1][1], end))
        else:
            merged.append((start, end))
    return merged


class UploadManager:
    """Disk-backed staging area for resumable uploads.

    All public methods reload nothing: state is whatever `_tokens` holds,
    which is hydrated from the staging directory at construction so a fresh
    process sees exactly the data a crashed one persisted.
    """

    def __init__(self, staging_dir: Path | str, blobs: BlobStore, max_bytes: int = MAX_UPLOAD_BYTES):
        self.staging = Path(staging_dir)
        self.staging.mkdir(parents=True, exist_ok=True)
        self.blobs = blobs
        self.max_bytes = max_bytes
        self._tokens: dict[str, UploadToken] = {}
        for meta in sorted(self.staging.glob("*.json")):
            token = UploadToken.from_dict(json.loads(meta.read_text()))
            self._tokens[token.token_id] = token

    # -- paths / persistence --

    def _meta_path(self, token_id: str) -> Path:
        return self.staging / f"{token_id}.json"

    def _bin_path(self, token_id: str) -> Path:
        return self.staging / f"{token_id}.bin"

    def _save(self, token: UploadToken) -> None:
        path = self._meta_path(token.token_id)
        tmp = path.with_suffix(".json.tmp")
        tmp.write_text(json.dumps(token.to_dict(), sort_keys=True))
        with open(tmp, "rb") as fh:
            os.fsync(fh.fileno())
        os.replace(tmp, path)

    # -- operations --

    def begin(
        self,
        session_id: str,
        cohort: CohortLabel,
        prompt_id: PromptId,
        part: int,
        declared_size: int,
        content_type: str,
        now: Optional[datetime] = None,
    ) -> UploadToken:
        now = now or utc_now()
        prompt = catalog_by_id()[prompt_id]
        if not prompt.applicable_to(cohort):
            raise CohortViolation(
                f"{prompt_id.value} is not collected from {cohort.value} sessions"
            )
        if declared_size > self.max_bytes:
            raise PayloadTooLarge(f"declared size {declared_size} exceeds {self.max_bytes}")
        container = container_for(content_type)
        for token in self._tokens.values():
            if (
                token.session_id == session_id
                and token.prompt_id is prompt_id
                and token.part == part
                and token.expires_at > now
            ):
                if token.declared_size != declared_size:
                    raise RangeConflict(
                        "an active upload for this prompt declares a different size"
                    )
                return token
        token = UploadToken(
            token_id=uuid.uuid4().hex,
            session_id=session_id,
            prompt_id=prompt_id,
            part=part,
            declared_size=declared_size,
            container=container,
            content_type=content_type,
            expires_at=now + TOKEN_TTL,
        )
        self._tokens[token.token_id] = token
        self._save(token)
        return token

    def _get(self, token_id: str, now: Optional[datetime] = None) -> UploadToken:
        now = now or utc_now()
        token = self._tokens.get(token_id)
        if token is None:
            raise TokenExpired(f"unknown upload token: {token_id}")
        if token.expires_at <= now and token.finalized_sample is None:
            raise TokenExpired(f"upload token expired: {token_id}")
        return token

    def received_ranges(self, token_id: str) -> list[tuple[int, int]]:
        return list(self._get(token_id).ranges)

    def find_token(
        self, session_id: str, prompt_id: PromptId, part: int,
        now: Optional[datetime] = None,
    ) -> Optional[UploadToken]:
        """Most recent usable token for one (session, prompt, part): either
        still unexpired or already finalized (for idempotent retries)."""
        now = now or utc_now()
        for token in self._tokens.values():
            if (
                token.session_id == session_id
                and token.prompt_id is prompt_id
                and token.part == part
                and (token.expires_at > now or token.finalized_sample is not None)
            ):
                return token
        return None

    def append(self, token_id: str, offset: int, data: bytes) -> int:
        """Write one chunk; idempotent for identical resends. Returns total
        bytes received so far."""
        token = self._get(token_id)
        end = offset + len(data)
        if offset < 0 or end > token.declared_size:
            raise PayloadTooLarge(
                f"range [{offset}, {end}) outside declared size {token.declared_size}"
            )
        if not data:
            return token.received_bytes

        bin_path = self._bin_path(token_id)
        if not bin_path.exists():
            with open(bin_path, "wb") as fh:
                fh.truncate(token.declared_size)

        # Compare any previously received overlap before accepting the write.
        with open(bin_path, "r+b") as fh:
            for r_start, r_end in token.ranges:
                lo, hi = max(offset, r_start), min(end, r_end)
                if lo >= hi:
                    continue
                fh.seek(lo)
                existing = fh.read(hi - lo)
                if existing != data[lo - offset : hi - offset]:
                    raise RangeConflict(
                        f"range [{lo}, {hi}) was already received with different bytes"
                    )
            fh.seek(offset)
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())

        token.ranges = _merge_ranges(token.ranges + [(offset, end)])
        self._save(token)
        return token.received_bytes

    def finalize(
        self,
        token_id: str,
        sha256: str,
        received_at: Optional[datetime] = None,
    ) -> AudioSample:
        """Verify, transcode to canonical PCM, store content-addressed, gate.

        Idempotent: a retry after success returns the identical sample.
        """
        token = self._get(token_id)
        if token.finalized_sample is not None:
            return AudioSample.from_dict(token.finalized_sample)
        if not token.covers_all():
            raise IncompleteUpload(
                f"received {token.received_bytes} of {token.declared_size} bytes"
            )
        data = self._bin_path(token_id).read_bytes()
        actual = sha256_hex(data)
        if actual != sha256.lower():
            raise ChecksumMismatch(f"upload hash {actual} != declared {sha256}")

        pcm = canonicalize(data, token.container)
        pcm_bytes = canonical_pcm_bytes(pcm)
        canonical_sha = sha256_hex(pcm_bytes)
        self.blobs.put(canonical_sha, data, pcm_bytes)

        prompt = catalog_by_id()[token.prompt_id]
        report = quality_gate(pcm, CANONICAL_RATE, prompt, token.part)
        sample = AudioSample(
            sample_id=canonical_sha,
            prompt_id=token.prompt_id,
            part=token.part,
            sample_rate=CANONICAL_RATE,
            n_samples=int(pcm.size),
            duration_s=pcm.size / CANONICAL_RATE,
            checksum=canonical_sha,
            original_sha256=actual,
            source_format=token.container,
            received_at=received_at or utc_now(),
            quality=report,
        )
        token.finalized_sample = sample.to_dict()
        self._save(token)
        self._bin_path(token_id).unlink(missing_ok=True)
        return sample


# --- curation --------------------------------------------------------------------------

def _semantic_keys(record: SessionRecord) -> list[str]:
    """Audio keys whose prompt part carries semantic content (policy != Never)."""
    catalog = catalog_by_id()
    keys = []
    for key, sample in record.audio.items():
        policy = catalog[sample.prompt_id].parts[sample.part - 1].transcribe
        if policy is not TranscribePolicy.NEVER:
            keys.append(key)
    return keys


def curate(record: SessionRecord, decided_at: Optional[datetime] = None) -> InclusionDecision:
    """Apply the three exclusion rules to a frozen session.

    A session stays in the dataset unless it recorded fewer than two
    samples, none of its semantic audio could be transcribed, or its
    cohort-required survey pages 1-5 are incomplete.
    """
    if not record.frozen:
        raise SessionNotFrozen(record.session_id)
    rules: set[ExclusionRule] = set()

    if len(record.audio) < 2:
        rules.add(ExclusionRule.FEWER_THAN_TWO_RECORDINGS)

    semantic = _semantic_keys(record)
    def transcribable(key: str) -> bool:
        sample = record.audio[key]
        if sample.quality is not None and not sample.quality.passes:
            return False
        transcript = record.transcripts.get(key)
        return transcript is not None and bool(transcript.text.strip())

    if not any(transcribable(k) for k in semantic):
        rules.add(ExclusionRule.UNTRANSCRIBABLE_AUDIO)

    survey_pages = [p for p in required_pages(record.cohort) if p <= 5]
    if any(p not in record.answers_by_page for p in survey_pages):
        rules.add(ExclusionRule.MISSING_PAGES_1_TO_5)

    return InclusionDecision(
        rules_fired=frozenset(rules),
        decided_at=decided_at or utc_now(),
    )
