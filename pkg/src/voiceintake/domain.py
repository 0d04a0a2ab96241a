"""Core immutable types: participant profiles, the seven-prompt protocol,
audio/transcript records, and their canonical JSON encoding.

All types are frozen dataclasses or enums; JSON field names are stable and
documented in docs/schema.md. Timestamps serialize as RFC 3339 UTC.
"""

from __future__ import annotations

import uuid
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from enum import Enum
from typing import Any, Optional


# --- timestamps ----------------------------------------------------------------

def utc_now() -> datetime:
    return datetime.now(timezone.utc)


def rfc3339(dt: datetime) -> str:
    """RFC 3339 UTC with trailing Z, microseconds kept when nonzero."""
    dt = dt.astimezone(timezone.utc)
    return dt.isoformat().replace("+00:00", "Z")


def parse_rfc3339(s: str) -> datetime:
    return datetime.fromisoformat(s.replace("Z", "+00:00")).astimezone(timezone.utc)


def new_session_id() -> str:
    return uuid.uuid4().hex


# --- enums -----------------------------------------------------------------------

class CohortLabel(Enum):
    PATIENT = "Patient"
    CONTROL = "Control"


class Sex(Enum):
    MALE = "Male"
    FEMALE = "Female"
    OTHER = "Other"
    NO_RESPONSE = "NoResponse"


class Insurance(Enum):
    PRIVATE = "Private"
    PUBLIC = "Public"
    NONE = "None"
    NO_RESPONSE = "NoResponse"


class Education(Enum):
    LESS_THAN_HIGH_SCHOOL = "LessThanHighSchool"
    HIGH_SCHOOL = "HighSchool"
    COLLEGE = "College"
    GRADUATE = "Graduate"
    NO_RESPONSE = "NoResponse"


class RecordingLocation(Enum):
    HOSPITAL_CLINIC = "HospitalClinic"
    HOME = "Home"
    OTHER = "Other"


class SymptomProgression(Enum):
    WORSE = "Worse"
    NO_CHANGE = "NoChange"
    IMPROVING = "Improving"


class PromptId(Enum):
    P1_HEALTH_BASELINE = "P1"
    P2_ILLNESS_TRAJECTORY = "P2"
    P3_VOICE_BASELINE = "P3"
    P4_PHONATION = "P4"
    P5_BREATHING = "P5"
    P6_ADDITIONAL_INFO = "P6"
    P7_PROVIDER_NOTE = "P7"


class TranscribePolicy(Enum):
    ALWAYS = "Always"
    RAINBOW_CHECK_ONLY = "RainbowCheckOnly"
    NEVER = "Never"


NO_RESPONSE = "No Response"

# Closed condition vocabulary; entries outside it must use the "other:" escape.
HEALTH_CONDITION_TAGS = frozenset({
    "Hypertension",
    "Cardiovascular disease",
    "Thyroid disorders",
    "Sleep disorders",
    "Depression/anxiety",
    "Chronic pain",
    "Autoimmune disease",
    "Cancer",
    "Multiple sclerosis",
    "Diabetes",
    "Asthma",
    "COPD",
    "Acid reflux",
    "Seasonal allergies",
    "Kidney disease",
    "Liver disease",
    "Obesity",
    "None",
})

SYMPTOM_TAGS = frozenset({
    "Cough",
    "Productive cough",
    "Sore throat",
    "Headache",
    "Runny nose",
    "Nasal congestion",
    "Muscle aches",
    "Fever",
    "Fatigue",
    "Shortness of breath",
    "Hoarseness",
    "Loss of voice",
    "Wheezing",
})


def _tag_ok(tag: str, vocabulary: frozenset[str]) -> bool:
    return tag in vocabulary or tag.startswith("other:")


# --- participant profile ----------------------------------------------------------

@dataclass(frozen=True)
class ParticipantProfile:
    """Demographics and clinical context captured on survey pages 1-5.

    Symptom fields are patient-only; controls carry None for all three
    (their N/A state). Weight is stored in pounds.
    """

    age: int
    sex: Sex
    race: str
    occupation: str
    insurance: Insurance
    education: Education
    recording_location: RecordingLocation
    health_history: frozenset[str] = frozenset()
    weight_lb: Optional[float] = None
    gender_identity: Optional[str] = None
    zip_code: Optional[str] = None
    symptoms: Optional[frozenset[str]] = None
    symptom_duration_days: Optional[int] = None
    symptom_progression: Optional[SymptomProgression] = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "age": self.age,
            "sex": self.sex.value,
            "race": self.race,
            "occupation": self.occupation,
            "insurance": self.insurance.value,
            "education": self.education.value,
            "recording_location": self.recording_location.value,
            "health_history": sorted(self.health_history),
            "weight_lb": self.weight_lb,
            "gender_identity": self.gender_identity,
            "zip_code": self.zip_code,
            "symptoms": sorted(self.symptoms) if self.symptoms is not None else None,
            "symptom_duration_days": self.symptom_duration_days,
            "symptom_progression": (
                self.symptom_progression.value if self.symptom_progression else None
            ),
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "ParticipantProfile":
        return cls(
            age=d["age"],
            sex=Sex(d["sex"]),
            race=d["race"],
            occupation=d["occupation"],
            insurance=Insurance(d["insurance"]),
            education=Education(d["education"]),
            recording_location=RecordingLocation(d["recording_location"]),
            health_history=frozenset(d.get("health_history", [])),
            weight_lb=d.get("weight_lb"),
            gender_identity=d.get("gender_identity"),
            zip_code=d.get("zip_code"),
            symptoms=(
                frozenset(d["symptoms"]) if d.get("symptoms") is not None else None
            ),
            symptom_duration_days=d.get("symptom_duration_days"),
            symptom_progression=(
                SymptomProgression(d["symptom_progression"])
                if d.get("symptom_progression")
                else None
            ),
        )


def validate_profile(profile: ParticipantProfile, cohort: CohortLabel) -> list[str]:
    """Check every profile invariant for the given cohort.

    Returns a list of field errors; an empty list means the profile is valid.
    """
    errors: list[str] = []
    if profile.age < 0:
        errors.append("age must be >= 0")
    if profile.weight_lb is not None and profile.weight_lb <= 0:
        errors.append("weight_lb must be positive")
    if profile.zip_code is not None and len(profile.zip_code) != 5:
        errors.append("zip_code must be 5 characters")
    for tag in profile.health_history:
        if not _tag_ok(tag, HEALTH_CONDITION_TAGS):
            errors.append(f"unknown health_history tag: {tag}")
    if cohort is CohortLabel.PATIENT:
        if profile.symptoms is None:
            errors.append("symptoms required")
        else:
            for tag in profile.symptoms:
                if not _tag_ok(tag, SYMPTOM_TAGS):
                    errors.append(f"unknown symptom tag: {tag}")
        if profile.symptom_duration_days is None:
            errors.append("symptom_duration_days required")
        elif profile.symptom_duration_days < 0:
            errors.append("symptom_duration_days must be >= 0")
        if profile.symptom_progression is None:
            errors.append("symptom_progression required")
    else:
        if profile.symptoms is not None:
            errors.append("symptoms must be absent for controls")
        if profile.symptom_duration_days is not None:
            errors.append("symptom_duration_days must be absent for controls")
        if profile.symptom_progression is not None:
            errors.append("symptom_progression must be absent for controls")
    return errors


# --- prompt catalog ----------------------------------------------------------------

@dataclass(frozen=True)
class PromptPart:
    part: int
    text: str
    transcribe: TranscribePolicy

    def to_dict(self) -> dict[str, Any]:
        return {"part": self.part, "text": self.text, "transcribe": self.transcribe.value}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "PromptPart":
        return cls(part=d["part"], text=d["text"], transcribe=TranscribePolicy(d["transcribe"]))


@dataclass(frozen=True)
class PromptSpec:
    """One audio prompt: applicability, duration cap (per recorded part),
    transcription policy per part, and the app page it lives on."""

    prompt_id: PromptId
    display_text: str
    parts: tuple[PromptPart, ...]
    max_duration_s: float
    completed_by: frozenset[CohortLabel]
    app_page: int

    @property
    def transcribe(self) -> TranscribePolicy:
        policies = {p.transcribe for p in self.parts}
        if TranscribePolicy.ALWAYS in policies:
            return TranscribePolicy.ALWAYS
        if TranscribePolicy.RAINBOW_CHECK_ONLY in policies:
            return TranscribePolicy.RAINBOW_CHECK_ONLY
        return TranscribePolicy.NEVER

    def applicable_to(self, cohort: CohortLabel) -> bool:
        return cohort in self.completed_by

    def to_dict(self) -> dict[str, Any]:
        return {
            "prompt_id": self.prompt_id.value,
            "display_text": self.display_text,
            "parts": [p.to_dict() for p in self.parts],
            "max_duration_s": self.max_duration_s,
            "completed_by": sorted(c.value for c in self.completed_by),
            "app_page": self.app_page,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "PromptSpec":
        return cls(
            prompt_id=PromptId(d["prompt_id"]),
            display_text=d["display_text"],
            parts=tuple(PromptPart.from_dict(p) for p in d["parts"]),
            max_duration_s=d["max_duration_s"],
            completed_by=frozenset(CohortLabel(c) for c in d["completed_by"]),
            app_page=d["app_page"],
        )


BOTH_COHORTS = frozenset({CohortLabel.PATIENT, CohortLabel.CONTROL})
PATIENTS_ONLY = frozenset({CohortLabel.PATIENT})

RAINBOW_PASSAGE = (
    "When the sunlight strikes raindrops in the air, they act as a prism and "
    "form a rainbow. The rainbow is a division of white light into many "
    "beautiful colors. These take the shape of a long round arch, with its "
    "path high above, and its two ends apparently beyond the horizon."
)

_P1_TEXT = (
    "Please tell us background information about your health before your "
    "current illness, including: Chronic conditions (such as high blood "
    "pressure or diabetes), Recent illnesses (for example, COVID-19), Other "
    "physical health problems, Mental health problems, such as anxiety, "
    "Medications you currently take, Any recent changes to your medication "
    "which made you feel differently."
)

_P2_TEXT = (
    "In as much detail as possible, please tell us how your illness has "
    "developed from the time when you first noticed symptoms until now. "
    "Include any medications you took (like Tylenol) or steps you use to "
    "reduce your symptoms. Please use words/phrases like \"on the first "
    "day\", \"in the morning\", \"then\", \"after that\" and use descriptive "
    "words like \"mild\", \"severe\". No detail is too small. (3 min.)"
)

_P3_TEXT = (
    "Please tell us if you or anyone else has noticed any recent changes in "
    "your voice (like hoarse, raspy, or lost voice) speech (like difficulty "
    "getting words out or slurring words), or breathing. If so, describe "
    "these changes. These should be changes that started around the same "
    "time as this illness episode, not any chronic long-term changes. (1 min.)"
)

_P4_PART1_TEXT = (
    "Say each of these vowels for as long as you can. aaaaa (as in made); "
    "eeeee (beet); ooooo (cool)"
)

_P4_PART2_TEXT = f"Read these sentences: “{RAINBOW_PASSAGE}”"

_P5_PART1_TEXT = (
    "Hold the device near your nose and record yourself breathing normally "
    "for 30 seconds with your mouth closed."
)

_P5_PART2_TEXT = (
    "Hold the device near your mouth and record yourself taking 3 deep "
    "breaths through your mouth."
)

_P6_TEXT = (
    "Is there anything else you would like us to know about your health or "
    "circumstances that you feel we have missed? For example, you can tell "
    "us about: your employment, your lifestyle habits, and/or any challenges "
    "you have had with the healthcare system, including delays with "
    "receiving care or problems with quality of care that may have impacted "
    "your health."
)

_P7_TEXT = (
    "Your physician or other provider should briefly describe the physical "
    "exam (given to you by the physician), any available lab results, "
    "imaging studies, the diagnosis, and other next steps related to "
    "testing, treatment, or monitoring the illness. If the healthcare "
    "provider is not available or you are at home, you can record this "
    "information yourself."
)


def default_prompt_catalog() -> list[PromptSpec]:
    """The seven collection prompts with their cohort applicability,
    per-recording duration caps, and transcription policies."""
    always = TranscribePolicy.ALWAYS
    never = TranscribePolicy.NEVER
    return [
        PromptSpec(
            prompt_id=PromptId.P1_HEALTH_BASELINE,
            display_text=_P1_TEXT,
            parts=(PromptPart(1, _P1_TEXT, always),),
            max_duration_s=180.0,
            completed_by=BOTH_COHORTS,
            app_page=7,
        ),
        PromptSpec(
            prompt_id=PromptId.P2_ILLNESS_TRAJECTORY,
            display_text=_P2_TEXT,
            parts=(PromptPart(1, _P2_TEXT, always),),
            max_duration_s=180.0,
            completed_by=PATIENTS_ONLY,
            app_page=8,
        ),
        PromptSpec(
            prompt_id=PromptId.P3_VOICE_BASELINE,
            display_text=_P3_TEXT,
            parts=(PromptPart(1, _P3_TEXT, always),),
            max_duration_s=60.0,
            completed_by=BOTH_COHORTS,
            app_page=9,
        ),
        PromptSpec(
            prompt_id=PromptId.P4_PHONATION,
            display_text=f"Part 1: {_P4_PART1_TEXT} Part 2: {_P4_PART2_TEXT}",
            parts=(
                PromptPart(1, _P4_PART1_TEXT, never),
                PromptPart(2, _P4_PART2_TEXT, TranscribePolicy.RAINBOW_CHECK_ONLY),
            ),
            max_duration_s=90.0,
            completed_by=BOTH_COHORTS,
            app_page=10,
        ),
        PromptSpec(
            prompt_id=PromptId.P5_BREATHING,
            display_text=f"Part 1: {_P5_PART1_TEXT} Part 2: {_P5_PART2_TEXT}",
            parts=(
                PromptPart(1, _P5_PART1_TEXT, never),
                PromptPart(2, _P5_PART2_TEXT, never),
            ),
            max_duration_s=30.0,
            completed_by=BOTH_COHORTS,
            app_page=11,
        ),
        PromptSpec(
            prompt_id=PromptId.P6_ADDITIONAL_INFO,
            display_text=_P6_TEXT,
            parts=(PromptPart(1, _P6_TEXT, always),),
            max_duration_s=180.0,
            completed_by=BOTH_COHORTS,
            app_page=12,
        ),
        PromptSpec(
            prompt_id=PromptId.P7_PROVIDER_NOTE,
            display_text=_P7_TEXT,
            parts=(PromptPart(1, _P7_TEXT, always),),
            max_duration_s=120.0,
            completed_by=PATIENTS_ONLY,
            app_page=14,
        ),
    ]


def catalog_by_id() -> dict[PromptId, PromptSpec]:
    return {p.prompt_id: p for p in default_prompt_catalog()}


def catalog_by_page() -> dict[int, PromptSpec]:
    return {p.app_page: p for p in default_prompt_catalog()}


def prompt_key(prompt_id: PromptId, part: int) -> str:
    """Stable map key for one recorded part, e.g. "P4/2"."""
    return f"{prompt_id.value}/{part}"


def parse_prompt_key(key: str) -> tuple[PromptId, int]:
    pid, _, part = key.partition("/")
    return PromptId(pid), int(part)


# --- audio / transcript / metrics records -------------------------------------------

@dataclass(frozen=True)
class QualityReport:
    """Operational quality gate result for one recording."""

    duration_s: float
    rms_dbfs: float
    clipping_fraction: float
    leading_trailing_silence_s: float
    reasons: tuple[str, ...] = ()

    @property
    def passes(self) -> bool:
        return not self.reasons

    def to_dict(self) -> dict[str, Any]:
        return {
            "duration_s": self.duration_s,
            "rms_dbfs": self.rms_dbfs,
            "clipping_fraction": self.clipping_fraction,
            "leading_trailing_silence_s": self.leading_trailing_silence_s,
            "passes": self.passes,
            "reasons": list(self.reasons),
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "QualityReport":
        return cls(
            duration_s=d["duration_s"],
            rms_dbfs=d["rms_dbfs"],
            clipping_fraction=d["clipping_fraction"],
            leading_trailing_silence_s=d["leading_trailing_silence_s"],
            reasons=tuple(d.get("reasons", [])),
        )


@dataclass(frozen=True)
class AudioSample:
    """Immutable finalized recording; content bytes live in the blob store.

    sample_id equals the SHA-256 of the canonical mono 16 kHz PCM bytes, so
    byte-identical uploads always converge on the same identifier.
    """

    sample_id: str
    prompt_id: PromptId
    part: int
    sample_rate: int
    n_samples: int
    duration_s: float
    checksum: str
    original_sha256: str
    source_format: str
    received_at: datetime
    quality: Optional[QualityReport] = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "sample_id": self.sample_id,
            "prompt_id": self.prompt_id.value,
            "part": self.part,
            "sample_rate": self.sample_rate,
            "n_samples": self.n_samples,
            "duration_s": self.duration_s,
            "checksum": self.checksum,
            "original_sha256": self.original_sha256,
            "source_format": self.source_format,
            "received_at": rfc3339(self.received_at),
            "quality": self.quality.to_dict() if self.quality else None,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "AudioSample":
        return cls(
            sample_id=d["sample_id"],
            prompt_id=PromptId(d["prompt_id"]),
            part=d["part"],
            sample_rate=d["sample_rate"],
            n_samples=d["n_samples"],
            duration_s=d["duration_s"],
            checksum=d["checksum"],
            original_sha256=d["original_sha256"],
            source_format=d["source_format"],
            received_at=parse_rfc3339(d["received_at"]),
            quality=QualityReport.from_dict(d["quality"]) if d.get("quality") else None,
        )


@dataclass(frozen=True)
class Transcript:
    prompt_id: PromptId
    part: int
    text: str
    asr_engine_tag: str
    created_at: datetime

    def to_dict(self) -> dict[str, Any]:
        return {
            "prompt_id": self.prompt_id.value,
            "part": self.part,
            "text": self.text,
            "asr_engine_tag": self.asr_engine_tag,
            "created_at": rfc3339(self.created_at),
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "Transcript":
        return cls(
            prompt_id=PromptId(d["prompt_id"]),
            part=d["part"],
            text=d["text"],
            asr_engine_tag=d["asr_engine_tag"],
            created_at=parse_rfc3339(d["created_at"]),
        )


@dataclass(frozen=True)
class AcousticMetrics:
    """Signal measurements for one recording; fields are None when the
    measurement does not apply to the prompt."""

    rms_dbfs: float
    clipping_fraction: float
    respiratory_rate_bpm: Optional[float] = None
    rr_confidence: float = 0.0
    deep_breath_count: Optional[int] = None
    max_phonation_time_s: Optional[float] = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "rms_dbfs": self.rms_dbfs,
            "clipping_fraction": self.clipping_fraction,
            "respiratory_rate_bpm": self.respiratory_rate_bpm,
            "rr_confidence": self.rr_confidence,
            "deep_breath_count": self.deep_breath_count,
            "max_phonation_time_s": self.max_phonation_time_s,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "AcousticMetrics":
        return cls(
            rms_dbfs=d["rms_dbfs"],
            clipping_fraction=d["clipping_fraction"],
            respiratory_rate_bpm=d.get("respiratory_rate_bpm"),
            rr_confidence=d.get("rr_confidence", 0.0),
            deep_breath_count=d.get("deep_breath_count"),
            max_phonation_time_s=d.get("max_phonation_time_s"),
        )


class ExclusionRule(Enum):
    FEWER_THAN_TWO_RECORDINGS = "FewerThanTwoRecordings"
    UNTRANSCRIBABLE_AUDIO = "UntranscribableAudio"
    MISSING_PAGES_1_TO_5 = "MissingPages1to5"


@dataclass(frozen=True)
class InclusionDecision:
    rules_fired: frozenset[ExclusionRule]
    decided_at: datetime

    @property
    def included(self) -> bool:
        return not self.rules_fired

    def to_dict(self) -> dict[str, Any]:
        return {
            "included": self.included,
            "rules_fired": sorted(r.value for r in self.rules_fired),
            "decided_at": rfc3339(self.decided_at),
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "InclusionDecision":
        return cls(
            rules_fired=frozenset(ExclusionRule(r) for r in d.get("rules_fired", [])),
            decided_at=parse_rfc3339(d["decided_at"]),
        )


@dataclass(frozen=True)
class SessionRecord:
    """One participant's full pass through the protocol."""

    session_id: str
    cohort: CohortLabel
    created_at: datetime
    consent_given: bool = False
    consent_at: Optional[datetime] = None
    screening_answer: str = ""
    profile: Optional[ParticipantProfile] = None
    answers_by_page: dict[int, dict[str, Any]] = field(default_factory=dict)
    audio: dict[str, AudioSample] = field(default_factory=dict)
    transcripts: dict[str, Transcript] = field(default_factory=dict)
    metrics: dict[str, AcousticMetrics] = field(default_factory=dict)
    asr_failures: dict[str, str] = field(default_factory=dict)
    inclusion: Optional[InclusionDecision] = None
    frozen: bool = False

    @property
    def provider_note_present(self) -> bool:
        return prompt_key(PromptId.P7_PROVIDER_NOTE, 1) in self.audio

    def with_changes(self, **kw: Any) -> "SessionRecord":
        return replace(self, **kw)

    def to_dict(self) -> dict[str, Any]:
        return {
            "session_id": self.session_id,
            "cohort": self.cohort.value,
            "created_at": rfc3339(self.created_at),
            "consent_given": self.consent_given,
            "consent_at": rfc3339(self.consent_at) if self.consent_at else None,
            "screening_answer": self.screening_answer,
            "profile": self.profile.to_dict() if self.profile else None,
            "answers_by_page": {str(p): a for p, a in sorted(self.answers_by_page.items())},
            "audio": {k: s.to_dict() for k, s in sorted(self.audio.items())},
            "transcripts": {k: t.to_dict() for k, t in sorted(self.transcripts.items())},
            "metrics": {k: m.to_dict() for k, m in sorted(self.metrics.items())},
            "asr_failures": dict(sorted(self.asr_failures.items())),
            "provider_note_present": self.provider_note_present,
            "inclusion": self.inclusion.to_dict() if self.inclusion else None,
            "frozen": self.frozen,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "SessionRecord":
        return cls(
            session_id=d["session_id"],
            cohort=CohortLabel(d["cohort"]),
            created_at=parse_rfc3339(d["created_at"]),
            consent_given=d["consent_given"],
            consent_at=parse_rfc3339(d["consent_at"]) if d.get("consent_at") else None,
            screening_answer=d.get("screening_answer", ""),
            profile=ParticipantProfile.from_dict(d["profile"]) if d.get("profile") else None,
            answers_by_page={int(p): a for p, a in d.get("answers_by_page", {}).items()},
            audio={k: AudioSample.from_dict(s) for k, s in d.get("audio", {}).items()},
            transcripts={k: Transcript.from_dict(t) for k, t in d.get("transcripts", {}).items()},
            metrics={k: AcousticMetrics.from_dict(m) for k, m in d.get("metrics", {}).items()},
            asr_failures=d.get("asr_failures", {}),
            inclusion=InclusionDecision.from_dict(d["inclusion"]) if d.get("inclusion") else None,
            frozen=d.get("frozen", False),
        )


# Pages a control session must never touch.
CONTROL_SKIPPED_PAGES = frozenset({4, 8, 14, 15, 16, 17})


def validate_session(record: SessionRecord) -> list[str]:
    """Single-pass structural validator over a session record.

    Covers consent-before-data, cohort branching, prompt applicability and
    duration consistency; returns human-readable violations.
    """
    errors: list[str] = []
    if not record.consent_given and (record.answers_by_page or record.audio):
        errors.append("answers or audio present without recorded consent")
    catalog = catalog_by_id()
    for key, sample in record.audio.items():
        spec = catalog[sample.prompt_id]
        if not spec.applicable_to(record.cohort):
            errors.append(f"audio {key} not applicable to {record.cohort.value}")
        if abs(sample.duration_s - sample.n_samples / sample.sample_rate) > 1.0 / sample.sample_rate:
            errors.append(f"audio {key} duration inconsistent with sample count")
        if sample.sample_id != sample.checksum:
            errors.append(f"audio {key} sample_id does not match checksum")
    for key, transcript in record.transcripts.items():
        spec = catalog[transcript.prompt_id]
        part_policy = spec.parts[transcript.part - 1].transcribe
        if part_policy is TranscribePolicy.NEVER:
            errors.append(f"transcript {key} exists for a never-transcribed prompt")
    if record.cohort is CohortLabel.CONTROL:
        bad_pages = CONTROL_SKIPPED_PAGES & set(record.answers_by_page)
        if bad_pages:
            errors.append(f"control session has answers for pages {sorted(bad_pages)}")
        for key, sample in record.audio.items():
            if sample.prompt_id in (PromptId.P2_ILLNESS_TRAJECTORY, PromptId.P7_PROVIDER_NOTE):
                errors.append(f"control session has audio for {key}")
    if record.profile is not None:
        errors.extend(validate_profile(record.profile, record.cohort))
    return errors
