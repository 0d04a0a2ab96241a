"""Transcription policy, pluggable ASR clients, and word-error-rate.

The ASR engine is an external service reached over HTTP; a deterministic
mock keyed on sample checksums ships for offline runs and tests. The fixed
reading passage doubles as a WER probe for audio/ASR quality.
"""

from __future__ import annotations

import re
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional, Protocol

import requests

from .audio import encode_wav_pcm16
from .blobs import BlobStore
from .domain import (
    RAINBOW_PASSAGE,
    PromptId,
    SessionRecord,
    TranscribePolicy,
    Transcript,
    catalog_by_id,
    parse_prompt_key,
    prompt_key,
    utc_now,
)
from .errors import (
    AsrUnavailable,
    EmptyReference,
    MissingRecording,
    UnknownPrompt,
)

ASR_RETRIES = 3
ASR_BACKOFF_START_S = 1.0
ASR_TIMEOUT_S = 120.0
DEFAULT_CONCURRENCY = 4


def should_transcribe(prompt_id: PromptId, part: int = 1) -> TranscribePolicy:
    """Transcription policy for one recorded part.

    Free-speech prompts are always transcribed; the scripted reading is
    transcribed only as a quality probe; vowels and breathing carry no
    semantic content and are never sent to the ASR engine.
    """
    prompt = catalog_by_id().get(prompt_id)
    if prompt is None:
        raise UnknownPrompt(str(prompt_id))
    for p in prompt.parts:
        if p.part == part:
            return p.transcribe
    raise UnknownPrompt(f"{prompt_id.value} has no part {part}")


class AsrClient(Protocol):
    engine_tag: str

    def transcribe(self, wav_bytes: bytes, checksum: str) -> str: ...


class MockAsrClient:
    """Deterministic stand-in: a fixed map from canonical checksum to text.

    Unknown checksums fall back to a stable synthetic phrase so batch runs
    stay reproducible; checksums listed in `failures` raise, to exercise
    the partial-failure path.
    """

    engine_tag = "mock-asr/1"

    def __init__(
        self,
        transcript_map: Optional[dict[str, str]] = None,
        failures: Optional[set[str]] = None,
        default: Optional[Callable[[str], str]] = None,
    ):
        self.transcript_map = dict(transcript_map or {})
        self.failures = set(failures or ())
        self.default = default or (lambda sha: f"synthetic transcript {sha[:8]}")
        self.calls = 0

    def transcribe(self, wav_bytes: bytes, checksum: str) -> str:
        self.calls += 1
        if checksum in self.failures:
            raise AsrUnavailable(f"mock failure for {checksum[:8]}")
        if checksum in self.transcript_map:
            return self.transcript_map[checksum]
        return self.default(checksum)


class HttpAsrClient:
    """POSTs canonical PCM in a WAV container; expects UTF-8 text back."""

    def __init__(self, endpoint: str, bearer_token: Optional[str] = None,
                 engine_tag: str = "http-asr"):
        self.endpoint = endpoint
        self.bearer_token = bearer_token
        self.engine_tag = engine_tag

    def transcribe(self, wav_bytes: bytes, checksum: str) -> str:
        headers = {"Content-Type": "audio/wav", "X-Sample-Checksum": checksum}
        if self.bearer_token:
            headers["Authorization"] = f"Bearer {self.bearer_token}"
        try:
            resp = requests.post(self.endpoint, data=wav_bytes, headers=headers,
                                 timeout=ASR_TIMEOUT_S)
        except requests.RequestException as exc:
            raise AsrUnavailable(str(exc)) from exc
        if resp.status_code != 200:
            raise AsrUnavailable(f"ASR endpoint returned {resp.status_code}")
        tag = resp.headers.get("X-Engine-Tag")
        if tag:
            self.engine_tag = tag
        return resp.text


def _transcribe_with_retry(
    client: AsrClient,
    wav_bytes: bytes,
    checksum: str,
    sleep: Callable[[float], None] = time.sleep,
) -> str:
    delay = ASR_BACKOFF_START_S
    last: Exception = AsrUnavailable("no attempts made")
    for attempt in range(ASR_RETRIES):
        try:
            return client.transcribe(wav_bytes, checksum)
        except AsrUnavailable as exc:
            last = exc
            if attempt < ASR_RETRIES - 1:
                sleep(delay)
                delay *= 2
    raise AsrUnavailable(str(last))


def transcribe_session(
    record: SessionRecord,
    client: AsrClient,
    blobs: BlobStore,
    force: bool = False,
    concurrency: int = DEFAULT_CONCURRENCY,
    sleep: Callable[[float], None] = time.sleep,
) -> tuple[dict[str, Transcript], dict[str, str]]:
    """Transcribe every sample whose policy is not Never.

    Returns (new transcripts, failures by key). Existing transcripts are
    skipped unless force is set; a failing sample never aborts the batch.
    The session record itself is not mutated - results are returned for the
    caller to persist.
    """
    jobs: list[tuple[str, str]] = []  # (key, checksum)
    for key, sample in sorted(record.audio.items()):
        if should_transcribe(sample.prompt_id, sample.part) is TranscribePolicy.NEVER:
            continue
        if not force and key in record.transcripts:
            continue
        jobs.append((key, sample.checksum))

    transcripts: dict[str, Transcript] = {}
    failures: dict[str, str] = {}

    def run(job: tuple[str, str]) -> None:
        key, checksum = job
        prompt_id, part = parse_prompt_key(key)
        try:
            wav = encode_wav_pcm16(blobs.load_pcm(checksum))
            text = _transcribe_with_retry(client, wav, checksum, sleep=sleep)
            transcripts[key] = Transcript(
                prompt_id=prompt_id,
                part=part,
                text=text,
                asr_engine_tag=client.engine_tag,
                created_at=utc_now(),
            )
        except Exception as exc:
            failures[key] = str(exc)

    if jobs:
        with ThreadPoolExecutor(max_workers=max(1, concurrency)) as pool:
            list(pool.map(run, jobs))
    return transcripts, failures


# --- word error rate -------------------------------------------------------------------

@dataclass(frozen=True)
class WerBreakdown:
    substitutions: int
    insertions: int
    deletions: int
    reference_words: int

    @property
    def wer(self) -> float:
        return (self.substitutions + self.insertions + self.deletions) / self.reference_words

    def to_dict(self) -> dict:
        return {
            "substitutions": self.substitutions,
            "insertions": self.insertions,
            "deletions": self.deletions,
            "reference_words": self.reference_words,
            "wer": self.wer,
        }


_PUNCT = re.compile(r"[^\w\s']", re.UNICODE)


def normalize_text(text: str) -> list[str]:
    """Lowercase, strip punctuation, collapse whitespace; returns tokens."""
    return _PUNCT.sub(" ", text.lower()).split()


def word_error_rate(reference: str, hypothesis: str) -> WerBreakdown:
    """Word-level Levenshtein alignment with an S/I/D breakdown.

    Cost ties prefer a substitution over an insert+delete pair.
    """
    ref = normalize_text(reference)
    hyp = normalize_text(hypothesis)
    if not ref:
        raise EmptyReference("reference is empty after normalization")

    n, m = len(ref), len(hyp)
    # dp[i][j] = (total_cost, subs, ins, dels) for ref[:i] vs hyp[:j];
    # minimized lexicographically by (cost, -subs), which is well-defined in
    # additive DP and makes the breakdown unique (max substitutions pins
    # insertions and deletions once the cost is fixed).
    key = lambda t: (t[0], -t[1])
    dp = [[(0, 0, 0, 0)] * (m + 1) for _ in range(n + 1)]
    for i in range(1, n + 1):
        dp[i][0] = (i, 0, 0, i)
    for j in range(1, m + 1):
        dp[0][j] = (j, 0, j, 0)
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            cost_d, s_d, i_d, d_d = dp[i - 1][j - 1]
            if ref[i - 1] == hyp[j - 1]:
                diag = (cost_d, s_d, i_d, d_d)
            else:
                diag = (cost_d + 1, s_d + 1, i_d, d_d)
            cost_del, s_del, i_del, d_del = dp[i - 1][j]
            cost_ins, s_ins, i_ins, d_ins = dp[i][j - 1]
            dp[i][j] = min(
                diag,
                (cost_del + 1, s_del, i_del, d_del + 1),
                (cost_ins + 1, s_ins, i_ins + 1, d_ins),
                key=key,
            )
    _, subs, ins, dels = dp[n][m]
    return WerBreakdown(subs, ins, dels, n)


def rainbow_quality(record: SessionRecord) -> WerBreakdown:
    """WER of the scripted-reading transcript against the canonical passage."""
    key = prompt_key(PromptId.P4_PHONATION, 2)
    transcript = record.transcripts.get(key)
    if transcript is None:
        raise MissingRecording("no transcript for the reading passage (P4 part 2)")
    return word_error_rate(RAINBOW_PASSAGE, transcript.text)
