"""Guided voice + survey health-record intake platform."""

__version__ = "0.1.0"

from .domain import (
    AcousticMetrics,
    AudioSample,
    CohortLabel,
    InclusionDecision,
    ParticipantProfile,
    PromptId,
    PromptSpec,
    QualityReport,
    SessionRecord,
    Transcript,
    default_prompt_catalog,
    validate_profile,
)

__all__ = [
    "AcousticMetrics",
    "AudioSample",
    "CohortLabel",
    "InclusionDecision",
    "ParticipantProfile",
    "PromptId",
    "PromptSpec",
    "QualityReport",
    "SessionRecord",
    "Transcript",
    "default_prompt_catalog",
    "validate_profile",
]
