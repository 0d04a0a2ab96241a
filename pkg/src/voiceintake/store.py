"""Session persistence: append-only event logs plus rebuildable in-memory
indexes.

Every state change is one JSON line in sessions/<id>/events.jsonl. A fresh
process replays the logs and arrives at exactly the state the previous
process held; nothing else is authoritative.
"""

from __future__ import annotations

import json
import os
import secrets
import threading
from dataclasses import dataclass
from datetime import datetime, timedelta
from pathlib import Path
from typing import Any, Iterator, Optional

from .blobs import BlobStore
from .domain import (
    AcousticMetrics,
    AudioSample,
    CohortLabel,
    Education,
    InclusionDecision,
    Insurance,
    ParticipantProfile,
    PromptId,
    RecordingLocation,
    SessionRecord,
    Sex,
    SymptomProgression,
    Transcript,
    parse_rfc3339,
    prompt_key,
    rfc3339,
    utc_now,
    validate_profile,
)
from .errors import MissingField, UnknownSession, VoiceIntakeError
from .protocol import (
    PROTOCOL_EVENT_TYPES,
    Event,
    EventType,
    SessionState,
    SessionStatus,
    apply as apply_protocol,
    make_init_event,
)

IDLE_ABANDON_AFTER = timedelta(hours=24)


class AnswerValidationError(VoiceIntakeError):
    """A survey answer failed type or vocabulary checks."""


def _require(answers: dict[str, Any], name: str) -> Any:
    if name not in answers or answers[name] in (None, ""):
        raise MissingField(name)
    return answers[name]


def validate_page_answers(cohort: CohortLabel, page: int, answers: dict[str, Any]) -> None:
    """Type/vocabulary checks for one survey page, independent of the rest.

    Runs before an answers event is accepted so a bad value can never end
    up behind a frozen page.
    """
    from .domain import HEALTH_CONDITION_TAGS, SYMPTOM_TAGS, _tag_ok

    try:
        if page == 1:
            if int(answers["age"]) < 0:
                raise AnswerValidationError("age must be >= 0")
            Sex(answers["sex"])
            if answers.get("weight_lb") is not None and float(answers["weight_lb"]) <= 0:
                raise AnswerValidationError("weight_lb must be positive")
        elif page == 2:
            Education(answers["education"])
            Insurance(answers["insurance"])
        elif page == 3:
            RecordingLocation(answers["recording_location"])
            zip_code = answers.get("zip_code")
            if zip_code is not None and len(str(zip_code)) != 5:
                raise AnswerValidationError("zip_code must be 5 characters")
        elif page == 4:
            for tag in answers["symptoms"]:
                if not _tag_ok(tag, SYMPTOM_TAGS):
                    raise AnswerValidationError(f"unknown symptom tag: {tag}")
            if int(answers["symptom_duration_days"]) < 0:
                raise AnswerValidationError("symptom_duration_days must be >= 0")
            SymptomProgression(answers["symptom_progression"])
        elif page == 5:
            for tag in answers["health_history"]:
                if not _tag_ok(tag, HEALTH_CONDITION_TAGS):
                    raise AnswerValidationError(f"unknown health_history tag: {tag}")
    except AnswerValidationError:
        raise
    except (ValueError, KeyError, TypeError) as exc:
        raise AnswerValidationError(f"invalid answers for page {page}: {exc}") from exc


def build_profile(
    cohort: CohortLabel, answers_by_page: dict[int, dict[str, Any]]
) -> Optional[ParticipantProfile]:
    """Assemble the profile once every cohort-required survey page is in.

    Raises AnswerValidationError when present answers carry invalid values;
    returns None while pages are still missing.
    """
    needed = [1, 2, 3, 5] if cohort is CohortLabel.CONTROL else [1, 2, 3, 4, 5]
    if any(p not in answers_by_page for p in needed):
        return None
    p1, p2, p3 = answers_by_page[1], answers_by_page[2], answers_by_page[3]
    p5 = answers_by_page[5]
    try:
        profile = ParticipantProfile(
            age=int(_require(p1, "age")),
            sex=Sex(_require(p1, "sex")),
            weight_lb=float(p1["weight_lb"]) if p1.get("weight_lb") is not None else None,
            gender_identity=p1.get("gender_identity"),
            race=str(_require(p2, "race")),
            occupation=str(_require(p2, "occupation")),
            education=Education(_require(p2, "education")),
            insurance=Insurance(_require(p2, "insurance")),
            recording_location=RecordingLocation(_require(p3, "recording_location")),
            zip_code=p3.get("zip_code"),
            health_history=frozenset(p5.get("health_history", [])),
            symptoms=(
                frozenset(answers_by_page[4]["symptoms"])
                if cohort is CohortLabel.PATIENT
                else None
            ),
            symptom_duration_days=(
                int(answers_by_page[4]["symptom_duration_days"])
                if cohort is CohortLabel.PATIENT
                else None
            ),
            symptom_progression=(
                SymptomProgression(answers_by_page[4]["symptom_progression"])
                if cohort is CohortLabel.PATIENT
                else None
            ),
        )
    except (ValueError, KeyError, TypeError) as exc:
        raise AnswerValidationError(f"invalid survey answers: {exc}") from exc
    errors = validate_profile(profile, cohort)
    if errors:
        raise AnswerValidationError("; ".join(errors))
    return profile


def update_record(record: Optional[SessionRecord], event: Event) -> SessionRecord:
    """Fold one event into the session record (artifact side of the log)."""
    if event.type is EventType.INIT:
        return SessionRecord(
            session_id=event.payload["session_id"],
            cohort=CohortLabel(event.payload["cohort"]),
            created_at=event.at,
            screening_answer=event.payload.get("screening_answer", ""),
        )
    assert record is not None
    if event.type is EventType.CONSENT:
        return record.with_changes(
            consent_given=bool(event.payload["granted"]),
            consent_at=event.at,
        )
    if event.type is EventType.ANSWERS:
        assert event.page is not None
        answers = dict(record.answers_by_page)
        answers[event.page] = event.payload["answers"]
        profile = record.profile
        if event.page in (1, 2, 3, 4, 5):
            validate_page_answers(record.cohort, event.page, event.payload["answers"])
            profile = build_profile(record.cohort, answers) or profile
        return record.with_changes(answers_by_page=answers, profile=profile)
    if event.type is EventType.NOTHING_ELSE:
        answers = dict(record.answers_by_page)
        answers[12] = {"nothing_else_checked": True}
        return record.with_changes(answers_by_page=answers)
    if event.type is EventType.AUDIO_ATTACHED:
        sample = AudioSample.from_dict(event.payload["sample"])
        audio = dict(record.audio)
        audio[prompt_key(sample.prompt_id, sample.part)] = sample
        return record.with_changes(audio=audio)
    if event.type is EventType.FREEZE:
        return record.with_changes(frozen=True)
    if event.type is EventType.TRANSCRIPT:
        key = event.payload["key"]
        if "error" in event.payload:
            failures = dict(record.asr_failures)
            failures[key] = event.payload["error"]
            return record.with_changes(asr_failures=failures)
        transcripts = dict(record.transcripts)
        transcripts[key] = Transcript.from_dict(event.payload["transcript"])
        failures = {k: v for k, v in record.asr_failures.items() if k != key}
        return record.with_changes(transcripts=transcripts, asr_failures=failures)
    if event.type is EventType.METRICS:
        metrics = dict(record.metrics)
        metrics[event.payload["key"]] = AcousticMetrics.from_dict(event.payload["metrics"])
        return record.with_changes(metrics=metrics)
    if event.type is EventType.INCLUSION:
        return record.with_changes(
            inclusion=InclusionDecision.from_dict(event.payload["decision"])
        )
    return record  # ACK_INSTRUCTION, ABANDON leave the record untouched


def make_transcript_event(key: str, transcript: Transcript) -> Event:
    return Event(EventType.TRANSCRIPT, None, {"key": key, "transcript": transcript.to_dict()},
                 transcript.created_at)


def make_transcript_failure_event(key: str, error: str, at: Optional[datetime] = None) -> Event:
    return Event(EventType.TRANSCRIPT, None, {"key": key, "error": error}, at or utc_now())


def make_metrics_event(key: str, metrics: AcousticMetrics, at: Optional[datetime] = None) -> Event:
    return Event(EventType.METRICS, None, {"key": key, "metrics": metrics.to_dict()},
                 at or utc_now())


def make_inclusion_event(decision: InclusionDecision) -> Event:
    return Event(EventType.INCLUSION, None, {"decision": decision.to_dict()},
                 decision.decided_at)


@dataclass
class SessionEntry:
    state: SessionState
    record: SessionRecord
    last_event_at: datetime
    api_token: str
    provider_token: Optional[str] = None


class SessionStore:
    """All sessions, hydrated from disk on construction."""

    def __init__(self, data_dir: Path | str):
        self.data_dir = Path(data_dir)
        self.sessions_dir = self.data_dir / "sessions"
        self.sessions_dir.mkdir(parents=True, exist_ok=True)
        self.blobs = BlobStore(self.data_dir / "blobs")
        self._entries: dict[str, SessionEntry] = {}
        self._locks: dict[str, threading.Lock] = {}
        self._global_lock = threading.Lock()
        for session_dir in sorted(self.sessions_dir.iterdir()):
            if session_dir.is_dir():
                self._hydrate(session_dir)

    # -- hydration --

    def _hydrate(self, session_dir: Path) -> None:
        log = session_dir / "events.jsonl"
        if not log.exists():
            return
        state: Optional[SessionState] = None
        record: Optional[SessionRecord] = None
        last_at: Optional[datetime] = None
        with open(log) as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                event = Event.from_dict(json.loads(line))
                if event.type in PROTOCOL_EVENT_TYPES:
                    state = apply_protocol(state, event)
                record = update_record(record, event)
                last_at = event.at
        if state is None or record is None:
            return
        meta = json.loads((session_dir / "meta.json").read_text())
        self._entries[state.session_id] = SessionEntry(
            state=state,
            record=record,
            last_event_at=last_at or record.created_at,
            api_token=meta["api_token"],
            provider_token=meta.get("provider_token"),
        )

    # -- internals --

    def _lock_for(self, session_id: str) -> threading.Lock:
        with self._global_lock:
            return self._locks.setdefault(session_id, threading.Lock())

    def _session_dir(self, session_id: str) -> Path:
        return self.sessions_dir / session_id

    def _append_line(self, session_id: str, event: Event) -> None:
        log = self._session_dir(session_id) / "events.jsonl"
        with open(log, "a") as fh:
            fh.write(json.dumps(event.to_dict(), sort_keys=True) + "\n")
            fh.flush()
            os.fsync(fh.fileno())

    def _write_meta(self, session_id: str, meta: dict[str, Any]) -> None:
        path = self._session_dir(session_id) / "meta.json"
        tmp = path.with_suffix(".json.tmp")
        tmp.write_text(json.dumps(meta, sort_keys=True))
        os.replace(tmp, path)

    # -- public API --

    def create_session(self, cohort: CohortLabel, screening_answer: str = "") -> SessionEntry:
        event = make_init_event(cohort, screening_answer=screening_answer)
        session_id = event.payload["session_id"]
        state = apply_protocol(None, event)
        record = update_record(None, event)
        self._session_dir(session_id).mkdir(parents=True, exist_ok=True)
        entry = SessionEntry(
            state=state,
            record=record,
            last_event_at=event.at,
            api_token=secrets.token_urlsafe(24),
        )
        self._write_meta(session_id, {"api_token": entry.api_token})
        self._append_line(session_id, event)
        with self._global_lock:
            self._entries[session_id] = entry
        return entry

    def get(self, session_id: str) -> SessionEntry:
        entry = self._entries.get(session_id)
        if entry is None:
            raise UnknownSession(session_id)
        return entry

    def session_ids(self) -> list[str]:
        return sorted(self._entries)

    def records(self) -> list[SessionRecord]:
        return [self._entries[sid].record for sid in self.session_ids()]

    def apply_event(self, session_id: str, event: Event) -> SessionEntry:
        """Validate, persist, and index one event for a session."""
        with self._lock_for(session_id):
            entry = self.get(session_id)
            if event.type in PROTOCOL_EVENT_TYPES:
                new_state = apply_protocol(entry.state, event)
            else:
                new_state = entry.state
            new_record = update_record(entry.record, event)  # may raise; nothing persisted yet
            self._append_line(session_id, event)
            entry.state = new_state
            entry.record = new_record
            entry.last_event_at = event.at
            return entry

    def issue_provider_token(self, session_id: str) -> str:
        entry = self.get(session_id)
        if entry.provider_token is None:
            entry.provider_token = secrets.token_urlsafe(24)
            self._write_meta(
                session_id,
                {"api_token": entry.api_token, "provider_token": entry.provider_token},
            )
        return entry.provider_token

    def find_by_token(self, token: str) -> Optional[tuple[SessionEntry, str]]:
        """Resolve a bearer token to (entry, scope)."""
        for entry in self._entries.values():
            if token == entry.api_token:
                return entry, "Participant"
            if entry.provider_token and token == entry.provider_token:
                return entry, "Provider"
        return None

    def sweep_abandoned(self, now: Optional[datetime] = None) -> list[str]:
        """Mark sessions idle past the cutoff as abandoned.

        Sessions already in the provider section stay open: provider notes
        legitimately arrive late, and only curation freezes them out.
        """
        from .protocol import make_abandon_event

        now = now or utc_now()
        swept = []
        for sid in self.session_ids():
            entry = self.get(sid)
            if entry.state.status in (SessionStatus.COMPLETE, SessionStatus.ABANDONED):
                continue
            if entry.state.status is SessionStatus.PROVIDER_SECTION:
                continue
            if now - entry.last_event_at >= IDLE_ABANDON_AFTER:
                self.apply_event(sid, make_abandon_event("idle", at=now))
                swept.append(sid)
        return swept
