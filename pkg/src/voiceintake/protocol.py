"""Deterministic session state machine.

A session walks consent (page 0), survey pages 1-5, audio pages 7-12, and
provider pages 14-17, with instruction interstitials at 6 and 13. Controls
never visit pages 4, 8, or 14-17. All transitions are pure functions over
immutable state driven by Event values, so replaying a persisted event log
reproduces the exact final state.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace
from datetime import datetime
from enum import Enum
from typing import Any, Iterable, Optional

from .domain import (
    CONTROL_SKIPPED_PAGES,
    CohortLabel,
    PromptId,
    catalog_by_id,
    catalog_by_page,
    new_session_id,
    parse_rfc3339,
    prompt_key,
    rfc3339,
    utc_now,
)
from .errors import (
    CohortViolation,
    ConsentAlreadyRecorded,
    DuplicatePart,
    MissingField,
    PageIncomplete,
    UnknownPrompt,
    WrongPage,
)


class PageKind(Enum):
    CONSENT = "Consent"
    SURVEY = "Survey"
    INSTRUCTION = "Instruction"
    AUDIO_PROMPT = "AudioPrompt"
    PROVIDER = "Provider"


class SessionStatus(Enum):
    CONSENTING = "Consenting"
    SURVEY = "Survey"
    AUDIO_PROMPTS = "AudioPrompts"
    PROVIDER_SECTION = "ProviderSection"
    COMPLETE = "Complete"
    ABANDONED = "Abandoned"


@dataclass(frozen=True)
class PageSpec:
    page: int
    kind: PageKind
    prompt_id: Optional[PromptId] = None
    required_fields: tuple[str, ...] = ()
    optional_fields: tuple[str, ...] = ()

    def to_dict(self) -> dict[str, Any]:
        return {
            "page": self.page,
            "kind": self.kind.value,
            "prompt_id": self.prompt_id.value if self.prompt_id else None,
            "required_fields": list(self.required_fields),
            "optional_fields": list(self.optional_fields),
        }


def _build_page_table() -> dict[int, PageSpec]:
    prompts = catalog_by_page()
    table: dict[int, PageSpec] = {0: PageSpec(0, PageKind.CONSENT)}
    table[1] = PageSpec(
        1, PageKind.SURVEY,
        required_fields=("illness_screening", "age", "sex"),
        optional_fields=("weight_lb", "gender_identity"),
    )
    table[2] = PageSpec(
        2, PageKind.SURVEY,
        required_fields=("race", "occupation", "education", "insurance"),
    )
    table[3] = PageSpec(
        3, PageKind.SURVEY,
        required_fields=("recording_location",),
        optional_fields=("zip_code",),
    )
    table[4] = PageSpec(
        4, PageKind.SURVEY,
        required_fields=("symptoms", "symptom_duration_days", "symptom_progression"),
    )
    table[5] = PageSpec(5, PageKind.SURVEY, required_fields=("health_history",))
    table[6] = PageSpec(6, PageKind.INSTRUCTION)
    for page in range(7, 13):
        table[page] = PageSpec(page, PageKind.AUDIO_PROMPT, prompt_id=prompts[page].prompt_id)
    table[13] = PageSpec(13, PageKind.INSTRUCTION)
    table[14] = PageSpec(14, PageKind.PROVIDER, prompt_id=PromptId.P7_PROVIDER_NOTE)
    table[15] = PageSpec(15, PageKind.PROVIDER, required_fields=("physical_exam_summary",))
    table[16] = PageSpec(16, PageKind.PROVIDER, required_fields=("test_results_summary",))
    table[17] = PageSpec(17, PageKind.PROVIDER, required_fields=("diagnosis_and_plan",))
    return table


PAGE_TABLE: dict[int, PageSpec] = _build_page_table()
ALL_CONTENT_PAGES: tuple[int, ...] = tuple(range(1, 18))


def page_spec(page: int) -> PageSpec:
    try:
        return PAGE_TABLE[page]
    except KeyError:
        raise WrongPage(f"no such page: {page}") from None


def required_pages(cohort: CohortLabel) -> tuple[int, ...]:
    if cohort is CohortLabel.PATIENT:
        return ALL_CONTENT_PAGES
    return tuple(p for p in ALL_CONTENT_PAGES if p not in CONTROL_SKIPPED_PAGES)


def next_required_page(cohort: CohortLabel, after_page: int) -> Optional[int]:
    """Smallest page index greater than after_page the cohort must complete."""
    for page in required_pages(cohort):
        if page > after_page:
            return page
    return None


def expected_parts(page: int) -> tuple[str, ...]:
    spec = PAGE_TABLE[page]
    if spec.prompt_id is None:
        return ()
    prompt = catalog_by_id()[spec.prompt_id]
    return tuple(prompt_key(prompt.prompt_id, p.part) for p in prompt.parts)


# --- state -------------------------------------------------------------------------

@dataclass(frozen=True)
class SessionState:
    """Pure protocol position of one session; artifacts live in SessionRecord."""

    session_id: str
    cohort: CohortLabel
    current_page: Optional[int]
    completed_pages: tuple[int, ...]
    attached_parts: frozenset[str]
    status: SessionStatus
    nothing_else_checked: bool = False

    @property
    def pending_uploads(self) -> tuple[str, ...]:
        if self.current_page is None:
            return ()
        return tuple(
            k for k in expected_parts(self.current_page) if k not in self.attached_parts
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "session_id": self.session_id,
            "cohort": self.cohort.value,
            "current_page": self.current_page,
            "completed_pages": list(self.completed_pages),
            "attached_parts": sorted(self.attached_parts),
            "status": self.status.value,
            "nothing_else_checked": self.nothing_else_checked,
            "pending_uploads": list(self.pending_uploads),
        }


def _status_for(page: Optional[int]) -> SessionStatus:
    if page is None:
        return SessionStatus.COMPLETE
    if page == 0:
        return SessionStatus.CONSENTING
    if page <= 5:
        return SessionStatus.SURVEY
    if page <= 13:
        return SessionStatus.AUDIO_PROMPTS
    return SessionStatus.PROVIDER_SECTION


# --- events ------------------------------------------------------------------------

class EventType(Enum):
    INIT = "init"
    CONSENT = "consent"
    ANSWERS = "answers"
    ACK_INSTRUCTION = "ack_instruction"
    NOTHING_ELSE = "nothing_else"
    AUDIO_ATTACHED = "audio_attached"
    ABANDON = "abandon"
    FREEZE = "freeze"
    # record-level pipeline results; appended to the same log but invisible
    # to the page state machine
    TRANSCRIPT = "transcript"
    METRICS = "metrics"
    INCLUSION = "inclusion"


PROTOCOL_EVENT_TYPES = frozenset({
    EventType.INIT,
    EventType.CONSENT,
    EventType.ANSWERS,
    EventType.ACK_INSTRUCTION,
    EventType.NOTHING_ELSE,
    EventType.AUDIO_ATTACHED,
    EventType.ABANDON,
    EventType.FREEZE,
})


@dataclass(frozen=True)
class Event:
    type: EventType
    page: Optional[int]
    payload: dict[str, Any]
    at: datetime

    def payload_sha256(self) -> str:
        blob = json.dumps(self.payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()

    def to_dict(self) -> dict[str, Any]:
        return {
            "type": self.type.value,
            "page": self.page,
            "payload": self.payload,
            "payload_sha256": self.payload_sha256(),
            "at": rfc3339(self.at),
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "Event":
        return cls(
            type=EventType(d["type"]),
            page=d.get("page"),
            payload=d.get("payload", {}),
            at=parse_rfc3339(d["at"]),
        )


def make_init_event(
    cohort: CohortLabel,
    session_id: Optional[str] = None,
    screening_answer: str = "",
    at: Optional[datetime] = None,
) -> Event:
    return Event(
        type=EventType.INIT,
        page=0,
        payload={
            "session_id": session_id or new_session_id(),
            "cohort": cohort.value,
            "screening_answer": screening_answer,
        },
        at=at or utc_now(),
    )


def make_consent_event(granted: bool, at: Optional[datetime] = None) -> Event:
    return Event(EventType.CONSENT, 0, {"granted": granted}, at or utc_now())


def make_answers_event(page: int, answers: dict[str, Any], at: Optional[datetime] = None) -> Event:
    return Event(EventType.ANSWERS, page, {"answers": answers}, at or utc_now())


def make_ack_event(page: int, at: Optional[datetime] = None) -> Event:
    return Event(EventType.ACK_INSTRUCTION, page, {}, at or utc_now())


def make_nothing_else_event(at: Optional[datetime] = None) -> Event:
    return Event(EventType.NOTHING_ELSE, 12, {}, at or utc_now())


def make_audio_event(
    prompt_id: PromptId, part: int, sample_id: str, at: Optional[datetime] = None
) -> Event:
    page = catalog_by_id()[prompt_id].app_page
    return Event(
        EventType.AUDIO_ATTACHED,
        page,
        {"prompt_id": prompt_id.value, "part": part, "sample_id": sample_id},
        at or utc_now(),
    )


def make_abandon_event(reason: str, at: Optional[datetime] = None) -> Event:
    return Event(EventType.ABANDON, None, {"reason": reason}, at or utc_now())


def make_freeze_event(at: Optional[datetime] = None) -> Event:
    return Event(EventType.FREEZE, None, {}, at or utc_now())


# --- transitions -------------------------------------------------------------------

def init_session(
    cohort: CohortLabel,
    session_id: Optional[str] = None,
    screening_answer: str = "",
) -> SessionState:
    return apply(None, make_init_event(cohort, session_id, screening_answer))


def _advance_from(state: SessionState, completed_page: int) -> SessionState:
    completed = state.completed_pages + (completed_page,)
    nxt = next_required_page(state.cohort, completed_page)
    return replace(
        state,
        completed_pages=completed,
        current_page=nxt,
        status=_status_for(nxt),
    )


def apply(state: Optional[SessionState], event: Event) -> SessionState:
    """Apply one event, validating every protocol rule. Pure."""
    if event.type is EventType.INIT:
        if state is not None:
            raise WrongPage("session already initialized")
        return SessionState(
            session_id=event.payload["session_id"],
            cohort=CohortLabel(event.payload["cohort"]),
            current_page=0,
            completed_pages=(),
            attached_parts=frozenset(),
            status=SessionStatus.CONSENTING,
        )

    if state is None:
        raise WrongPage("session not initialized")

    if event.type is EventType.FREEZE:
        return state  # freezing is a record-level flag; the position is unchanged

    if event.type is EventType.ABANDON:
        return replace(state, status=SessionStatus.ABANDONED)

    if event.type is EventType.CONSENT:
        if state.status is not SessionStatus.CONSENTING:
            raise ConsentAlreadyRecorded("consent already recorded")
        if not event.payload["granted"]:
            return replace(state, status=SessionStatus.ABANDONED)
        return replace(
            state,
            current_page=1,
            completed_pages=(0,),
            status=SessionStatus.SURVEY,
        )

    if state.status is SessionStatus.ABANDONED:
        raise WrongPage("session is abandoned")
    if state.status is SessionStatus.CONSENTING:
        raise WrongPage("consent has not been recorded")
    if state.status is SessionStatus.COMPLETE:
        raise WrongPage("session is complete")

    if event.type is EventType.ANSWERS:
        page = event.page
        assert page is not None
        spec = page_spec(page)
        if state.cohort is CohortLabel.CONTROL and page in CONTROL_SKIPPED_PAGES:
            raise CohortViolation(f"controls do not complete page {page}")
        if page != state.current_page:
            raise WrongPage(f"current page is {state.current_page}, not {page}")
        if spec.kind not in (PageKind.SURVEY, PageKind.PROVIDER):
            raise WrongPage(f"page {page} does not take answers")
        answers = event.payload["answers"]
        for name in spec.required_fields:
            if name not in answers or answers[name] in (None, ""):
                raise MissingField(name)
        return _advance_from(state, page)

    if event.type is EventType.ACK_INSTRUCTION:
        page = event.page
        assert page is not None
        if page != state.current_page:
            raise WrongPage(f"current page is {state.current_page}, not {page}")
        if page_spec(page).kind is not PageKind.INSTRUCTION:
            raise WrongPage(f"page {page} is not an instruction page")
        return _advance_from(state, page)

    if event.type is EventType.NOTHING_ELSE:
        if state.current_page != 12:
            raise WrongPage(f"current page is {state.current_page}, not 12")
        return _advance_from(replace(state, nothing_else_checked=True), 12)

    if event.type is EventType.AUDIO_ATTACHED:
        prompt_id = PromptId(event.payload["prompt_id"])
        part = event.payload["part"]
        prompt = catalog_by_id().get(prompt_id)
        if prompt is None:
            raise UnknownPrompt(prompt_id.value)
        if not prompt.applicable_to(state.cohort):
            raise CohortViolation(
                f"{prompt_id.value} is not collected from {state.cohort.value} sessions"
            )
        if part not in {p.part for p in prompt.parts}:
            raise UnknownPrompt(f"{prompt_id.value} has no part {part}")
        if prompt.app_page != state.current_page:
            raise WrongPage(
                f"current page is {state.current_page}, not {prompt.app_page}"
            )
        key = prompt_key(prompt_id, part)
        if key in state.attached_parts:
            raise DuplicatePart(key)
        attached = state.attached_parts | {key}
        state = replace(state, attached_parts=attached)
        missing = [
            k for k in expected_parts(prompt.app_page) if k not in attached
        ]
        if missing:
            return state
        return _advance_from(state, prompt.app_page)

    raise WrongPage(f"unhandled event type {event.type}")


def replay(events: Iterable[Event]) -> SessionState:
    state: Optional[SessionState] = None
    for event in events:
        state = apply(state, event)
    if state is None:
        raise WrongPage("empty event log")
    return state


# --- spec-level operations ----------------------------------------------------------

def record_consent(state: SessionState, granted: bool) -> SessionState:
    return apply(state, make_consent_event(granted))


def submit_answers(state: SessionState, page: int, answers: dict[str, Any]) -> SessionState:
    return apply(state, make_answers_event(page, answers))


def attach_audio(
    state: SessionState, prompt_id: PromptId, part: int, sample_id: str
) -> SessionState:
    return apply(state, make_audio_event(prompt_id, part, sample_id))


def acknowledge_instruction(state: SessionState, page: int) -> SessionState:
    return apply(state, make_ack_event(page))


def check_nothing_else(state: SessionState) -> SessionState:
    return apply(state, make_nothing_else_event())


def next_page(state: SessionState) -> Optional[int]:
    """Next page the cohort must complete after the current one; None when
    the protocol is finished. The current page must itself be satisfied."""
    if state.current_page is None:
        return None
    if state.current_page not in state.completed_pages:
        raise PageIncomplete(f"page {state.current_page} is not complete")
    return next_required_page(state.cohort, state.current_page)


def is_complete(state: SessionState) -> tuple[bool, list[str]]:
    """Whether every cohort-required page is done, with a list of what is
    missing (page numbers, plus pending prompt parts for audio pages)."""
    missing: list[str] = []
    done = set(state.completed_pages)
    for page in required_pages(state.cohort):
        if page in done:
            continue
        parts = [k for k in expected_parts(page) if k not in state.attached_parts]
        if parts and page == state.current_page:
            missing.extend(f"page {page} ({k})" for k in parts)
        else:
            missing.append(f"page {page}")
    return (not missing, missing)
