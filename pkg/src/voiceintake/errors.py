"""Exception hierarchy shared across the package.

Every error the HTTP layer maps to a status code lives here so the
service module can translate by type instead of string matching.
"""

from __future__ import annotations


class VoiceIntakeError(Exception):
    """Base class for all domain errors."""


# --- protocol engine ---------------------------------------------------------

class ConsentAlreadyRecorded(VoiceIntakeError):
    pass


class WrongPage(VoiceIntakeError):
    pass


class PageIncomplete(VoiceIntakeError):
    pass


class MissingField(VoiceIntakeError):
    def __init__(self, field: str):
        super().__init__(f"missing required field: {field}")
        self.field = field


class CohortViolation(VoiceIntakeError):
    pass


class DuplicatePart(VoiceIntakeError):
    pass


class UnknownPrompt(VoiceIntakeError):
    pass


class UnknownSession(VoiceIntakeError):
    pass


class SessionNotFrozen(VoiceIntakeError):
    pass


# --- ingest ------------------------------------------------------------------

class PayloadTooLarge(VoiceIntakeError):
    pass


class UnsupportedFormat(VoiceIntakeError):
    pass


class TokenExpired(VoiceIntakeError):
    pass


class RangeConflict(VoiceIntakeError):
    pass


class ChecksumMismatch(VoiceIntakeError):
    pass


class DecodeFailure(VoiceIntakeError):
    pass


class IncompleteUpload(VoiceIntakeError):
    pass


# --- signal metrics ----------------------------------------------------------

class TooShort(VoiceIntakeError):
    pass


class EmptySignal(VoiceIntakeError):
    pass


# --- transcription / evaluation ----------------------------------------------

class AsrUnavailable(VoiceIntakeError):
    pass


class EmptyReference(VoiceIntakeError):
    pass


class MissingRecording(VoiceIntakeError):
    pass


class MissingTranscript(VoiceIntakeError):
    pass


class MissingManualField(VoiceIntakeError):
    def __init__(self, field: str):
        super().__init__(f"missing manual field: {field}")
        self.field = field


class LlmUnavailable(VoiceIntakeError):
    pass


class UnparseableRating(VoiceIntakeError):
    pass


class EmptyInput(VoiceIntakeError):
    pass


# --- export ------------------------------------------------------------------

class IoFailure(VoiceIntakeError):
    pass


class DanglingBlobRef(VoiceIntakeError):
    def __init__(self, checksum: str):
        super().__init__(f"audio blob missing or corrupt: {checksum}")
        self.checksum = checksum


# --- service -----------------------------------------------------------------

class NotAuthorized(VoiceIntakeError):
    pass
