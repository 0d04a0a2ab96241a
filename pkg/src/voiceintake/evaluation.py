"""Rubric-based informativeness comparison between survey answers and
free-speech transcripts, plus aggregate statistics and a brute-force
consistency oracle for reported aggregates.

The LLM sits behind the same kind of pluggable boundary as the ASR engine:
an HTTP client for real runs, a deterministic mock for tests and offline
use. Temperature is pinned to 0 and raw responses are kept for audit.
"""

from __future__ import annotations

import math
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from datetime import datetime
from itertools import product
from typing import Any, Callable, Iterable, Optional, Protocol, Sequence

import requests

from .domain import (
    CohortLabel,
    PromptId,
    SessionRecord,
    parse_rfc3339,
    prompt_key,
    rfc3339,
    utc_now,
)
from .errors import (
    EmptyInput,
    LlmUnavailable,
    MissingManualField,
    MissingTranscript,
    UnparseableRating,
)

TEMPLATE_VERSION = "v1"

RUBRIC_TEMPLATE = """\
You are comparing two descriptions of the same person's health to judge
which would be more useful to a clinician performing an assessment.

Source A (structured survey fields):
{manual_block}

Source B (transcribed speech):
{transcript_block}

Rate the comparison on this scale:
1 = Source A is significantly more informative
2 = Source A is somewhat more informative
3 = the sources are equally informative
4 = Source B is somewhat more informative
5 = Source B is significantly more informative

Reply with a single line in the form RATING: <number>.
"""

RETRY_REMINDER = "\n\nYour previous reply could not be parsed. Reply with exactly one line in the form RATING: <number between 1 and 5>."

_RATING_RE = re.compile(r"RATING:\s*(-?\d+)", re.IGNORECASE)


@dataclass(frozen=True)
class ComparisonDoc:
    session_id: str
    manual_block: str
    transcript_block: str
    template_version: str = TEMPLATE_VERSION

    def prompt(self) -> str:
        return RUBRIC_TEMPLATE.format(
            manual_block=self.manual_block, transcript_block=self.transcript_block
        )


@dataclass(frozen=True)
class RubricRating:
    session_id: str
    rating: int
    raw_response: str
    model_tag: str
    rated_at: datetime

    def to_dict(self) -> dict[str, Any]:
        return {
            "session_id": self.session_id,
            "rating": self.rating,
            "raw_response": self.raw_response,
            "model_tag": self.model_tag,
            "rated_at": rfc3339(self.rated_at),
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "RubricRating":
        return cls(
            session_id=d["session_id"],
            rating=d["rating"],
            raw_response=d["raw_response"],
            model_tag=d["model_tag"],
            rated_at=parse_rfc3339(d["rated_at"]),
        )


@dataclass(frozen=True)
class RatingAggregate:
    n: int
    mean: float
    median: int
    std_dev: float  # population flavor
    pct_gt2: float
    pct_eq5: float
    histogram: tuple[int, int, int, int, int]  # counts for ratings 1..5

    def to_dict(self) -> dict[str, Any]:
        return {
            "n": self.n,
            "mean": self.mean,
            "median": self.median,
            "std_dev": self.std_dev,
            "pct_gt2": self.pct_gt2,
            "pct_eq5": self.pct_eq5,
            "histogram": {str(i + 1): c for i, c in enumerate(self.histogram)},
        }


# --- selection and document building ---------------------------------------------------

def eligible_sessions(records: Iterable[SessionRecord]) -> list[str]:
    """Included patient sessions holding transcripts for both free-speech
    prompts (health baseline and illness trajectory)."""
    p1 = prompt_key(PromptId.P1_HEALTH_BASELINE, 1)
    p2 = prompt_key(PromptId.P2_ILLNESS_TRAJECTORY, 1)
    out = []
    for record in records:
        if record.cohort is not CohortLabel.PATIENT:
            continue
        if record.inclusion is None or not record.inclusion.included:
            continue
        if p1 in record.transcripts and p2 in record.transcripts:
            out.append(record.session_id)
    return sorted(out)


def _render_tags(tags: Optional[frozenset[str]]) -> str:
    if not tags:
        return "None"
    return " ".join(sorted(tags))


def build_comparison_doc(record: SessionRecord) -> ComparisonDoc:
    """Deterministic pairing of the four survey variables with the P1+P2
    transcripts; identical sessions always render byte-identical docs."""
    profile = record.profile
    if profile is None:
        raise MissingManualField("profile")
    if profile.symptoms is None:
        raise MissingManualField("symptoms")
    if profile.symptom_progression is None:
        raise MissingManualField("symptom_progression")
    if profile.symptom_duration_days is None:
        raise MissingManualField("symptom_duration_days")
    manual_block = (
        f"Co-morbidities / health challenges: {_render_tags(profile.health_history)}\n"
        f"Current symptoms: {_render_tags(profile.symptoms)}\n"
        f"Progression of symptoms: {profile.symptom_progression.value}\n"
        f"Duration of symptoms (days): {profile.symptom_duration_days}"
    )
    blocks = []
    for pid in (PromptId.P1_HEALTH_BASELINE, PromptId.P2_ILLNESS_TRAJECTORY):
        transcript = record.transcripts.get(prompt_key(pid, 1))
        if transcript is None:
            raise MissingTranscript(prompt_key(pid, 1))
        blocks.append(transcript.text)
    return ComparisonDoc(
        session_id=record.session_id,
        manual_block=manual_block,
        transcript_block="\n\n".join(blocks),
    )


# --- LLM clients ------------------------------------------------------------------------

class LlmClient(Protocol):
    model_tag: str

    def complete(self, prompt: str) -> str: ...


class MockLlmClient:
    """Deterministic responder: a function of the prompt, or a canned list."""

    model_tag = "mock-llm/1"

    def __init__(self, responder: Callable[[str], str] | Sequence[str] | str = "RATING: 5"):
        self._responder = responder
        self._cursor = 0
        self.calls: list[str] = []

    def complete(self, prompt: str) -> str:
        self.calls.append(prompt)
        if callable(self._responder):
            return self._responder(prompt)
        if isinstance(self._responder, str):
            return self._responder
        reply = self._responder[min(self._cursor, len(self._responder) - 1)]
        self._cursor += 1
        return reply


class HttpLlmClient:
    """POST {"prompt": ..., "temperature": 0} -> {"text": ...}."""

    def __init__(self, endpoint: str, bearer_token: Optional[str] = None,
                 model_tag: str = "http-llm"):
        self.endpoint = endpoint
        self.bearer_token = bearer_token
        self.model_tag = model_tag

    def complete(self, prompt: str) -> str:
        headers = {}
        if self.bearer_token:
            headers["Authorization"] = f"Bearer {self.bearer_token}"
        try:
            resp = requests.post(
                self.endpoint,
                json={"prompt": prompt, "temperature": 0},
                headers=headers,
                timeout=120,
            )
        except requests.RequestException as exc:
            raise LlmUnavailable(str(exc)) from exc
        if resp.status_code != 200:
            raise LlmUnavailable(f"LLM endpoint returned {resp.status_code}")
        body = resp.json()
        tag = body.get("model_tag")
        if tag:
            self.model_tag = tag
        return body["text"]


def _parse_rating(text: str) -> Optional[int]:
    match = _RATING_RE.search(text)
    if not match:
        return None
    value = int(match.group(1))
    return value if 1 <= value <= 5 else None


def rate_pair(doc: ComparisonDoc, llm: LlmClient) -> RubricRating:
    """One rubric comparison; malformed replies get a single retry with a
    reminder before the call fails as unparseable."""
    prompt = doc.prompt()
    raw = llm.complete(prompt)
    rating = _parse_rating(raw)
    if rating is None:
        raw = llm.complete(prompt + RETRY_REMINDER)
        rating = _parse_rating(raw)
    if rating is None:
        raise UnparseableRating(f"no usable rating in: {raw[:200]!r}")
    return RubricRating(
        session_id=doc.session_id,
        rating=rating,
        raw_response=raw,
        model_tag=llm.model_tag,
        rated_at=utc_now(),
    )


def rate_sessions(
    records: Iterable[SessionRecord],
    llm: LlmClient,
    concurrency: int = 2,
) -> list[RubricRating]:
    by_id = {r.session_id: r for r in records}
    ids = eligible_sessions(by_id.values())
    docs = [build_comparison_doc(by_id[sid]) for sid in ids]
    with ThreadPoolExecutor(max_workers=max(1, concurrency)) as pool:
        return list(pool.map(lambda d: rate_pair(d, llm), docs))


# --- aggregation -----------------------------------------------------------------------

def std_from_histogram(histogram: Sequence[int], flavor: str = "population") -> float:
    n = sum(histogram)
    if n == 0 or (flavor == "sample" and n < 2):
        return 0.0
    mean = sum((i + 1) * c for i, c in enumerate(histogram)) / n
    ss = sum(c * ((i + 1) - mean) ** 2 for i, c in enumerate(histogram))
    denom = n if flavor == "population" else n - 1
    return math.sqrt(ss / denom)


def aggregate(ratings: Sequence[RubricRating | int]) -> RatingAggregate:
    """Order-independent summary; the median is the lower middle for even n
    and std_dev is the population flavor."""
    values = sorted(r.rating if isinstance(r, RubricRating) else int(r) for r in ratings)
    if not values:
        raise EmptyInput("no ratings to aggregate")
    if any(v < 1 or v > 5 for v in values):
        raise ValueError("ratings must lie in 1..5")
    n = len(values)
    histogram = tuple(values.count(k) for k in range(1, 6))
    mean = sum(values) / n
    median = values[(n - 1) // 2]
    return RatingAggregate(
        n=n,
        mean=mean,
        median=median,
        std_dev=std_from_histogram(histogram, "population"),
        pct_gt2=100.0 * sum(1 for v in values if v > 2) / n,
        pct_eq5=100.0 * sum(1 for v in values if v == 5) / n,
        histogram=histogram,  # type: ignore[arg-type]
    )


# --- consistency oracle ------------------------------------------------------------------

@dataclass(frozen=True)
class RatingTargets:
    """Published aggregate values to test for arithmetic consistency.

    mean and std are compared after rounding to 2 decimals; percentages
    after reduction to integers. None skips the check."""

    n: int
    mean: Optional[float] = None
    median: Optional[int] = None
    std: Optional[float] = None
    pct_gt2: Optional[int] = None
    pct_eq5: Optional[int] = None


@dataclass(frozen=True)
class OracleResult:
    histogram: tuple[int, int, int, int, int]
    std_flavor: str  # population | sample
    pct_mode: str  # round | trunc

    def to_dict(self) -> dict[str, Any]:
        return {
            "histogram": {str(i + 1): c for i, c in enumerate(self.histogram)},
            "std_flavor": self.std_flavor,
            "pct_mode": self.pct_mode,
        }


def _pct(value: float, mode: str) -> int:
    return int(value) if mode == "trunc" else round(value)


def matches_targets(
    histogram: Sequence[int],
    targets: RatingTargets,
    std_flavor: str,
    pct_mode: str,
) -> bool:
    n = sum(histogram)
    if n != targets.n or n == 0:
        return False
    agg_sum = sum((i + 1) * c for i, c in enumerate(histogram))
    if targets.mean is not None and abs(round(agg_sum / n, 2) - round(targets.mean, 2)) > 1e-9:
        return False
    if targets.median is not None:
        cumulative = 0
        median = 5
        mid = (n - 1) // 2
        for i, c in enumerate(histogram):
            cumulative += c
            if cumulative > mid:
                median = i + 1
                break
        if median != targets.median:
            return False
    if targets.std is not None:
        if abs(round(std_from_histogram(histogram, std_flavor), 2) - round(targets.std, 2)) > 1e-9:
            return False
    if targets.pct_gt2 is not None:
        gt2 = 100.0 * sum(histogram[2:]) / n
        if _pct(gt2, pct_mode) != targets.pct_gt2:
            return False
    if targets.pct_eq5 is not None:
        eq5 = 100.0 * histogram[4] / n
        if _pct(eq5, pct_mode) != targets.pct_eq5:
            return False
    return True


def find_consistent_histogram(
    targets: RatingTargets,
    std_flavors: Sequence[str] = ("population", "sample"),
    pct_modes: Sequence[str] = ("round", "trunc"),
) -> Optional[OracleResult]:
    """Exhaustive search for a rating histogram reproducing the targets.

    Tries each (std flavor, percentage convention) pair in order and
    returns the first match together with the convention that worked, or
    None when no count vector is arithmetically consistent.
    """
    n = targets.n
    if n <= 0:
        return None
    for std_flavor, pct_mode in product(std_flavors, pct_modes):
        c5_candidates = range(n + 1)
        if targets.pct_eq5 is not None:
            c5_candidates = [
                c5 for c5 in range(n + 1)
                if _pct(100.0 * c5 / n, pct_mode) == targets.pct_eq5
            ]
        for c5 in c5_candidates:
            for c4 in range(n - c5 + 1):
                for c3 in range(n - c5 - c4 + 1):
                    if targets.pct_gt2 is not None:
                        gt2 = 100.0 * (c3 + c4 + c5) / n
                        if _pct(gt2, pct_mode) != targets.pct_gt2:
                            continue
                    for c2 in range(n - c5 - c4 - c3 + 1):
                        c1 = n - c5 - c4 - c3 - c2
                        hist = (c1, c2, c3, c4, c5)
                        if matches_targets(hist, targets, std_flavor, pct_mode):
                            return OracleResult(hist, std_flavor, pct_mode)
    return None
