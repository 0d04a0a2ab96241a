"""Upload staging, canonicalization, quality gate, curation rules."""

import hashlib
import random

import numpy as np
import pytest

from voiceintake.audio import CANONICAL_RATE, encode_wav_pcm16, pcm_from_bytes
from voiceintake.blobs import BlobStore, sha256_hex
from voiceintake.domain import (
    AudioSample,
    CohortLabel,
    ExclusionRule,
    PromptId,
    QualityReport,
    SessionRecord,
    Transcript,
    catalog_by_id,
    prompt_key,
    utc_now,
)
from voiceintake.errors import (
    ChecksumMismatch,
    CohortViolation,
    IncompleteUpload,
    PayloadTooLarge,
    RangeConflict,
    SessionNotFrozen,
    TokenExpired,
    UnsupportedFormat,
)
from voiceintake.ingest import UploadManager, curate, quality_gate

from synth import RATE, breathing, silence, sine, square_wave


@pytest.fixture
def blobs(tmp_path):
    return BlobStore(tmp_path / "blobs")


@pytest.fixture
def uploads(tmp_path, blobs):
    return UploadManager(tmp_path / "staging", blobs)


def wav_bytes(signal) -> bytes:
    return encode_wav_pcm16(np.asarray(signal), CANONICAL_RATE)


def upload_whole(uploads, data: bytes, session="s1", prompt=PromptId.P5_BREATHING,
                 part=1, cohort=CohortLabel.PATIENT, chunk=4096):
    token = uploads.begin(session, cohort, prompt, part, len(data), "audio/wav")
    for off in range(0, len(data), chunk):
        uploads.append(token.token_id, off, data[off : off + chunk])
    return uploads.finalize(token.token_id, sha256_hex(data))


class TestBeginUpload:
    def test_issues_token(self, uploads):
        token = uploads.begin("s1", CohortLabel.PATIENT, PromptId.P5_BREATHING, 1,
                              1 << 20, "audio/wav")
        assert token.declared_size == 1 << 20

    def test_too_large(self, uploads):
        with pytest.raises(PayloadTooLarge):
            uploads.begin("s1", CohortLabel.PATIENT, PromptId.P1_HEALTH_BASELINE, 1,
                          100 << 20, "audio/wav")

    def test_control_p7_rejected(self, uploads):
        with pytest.raises(CohortViolation):
            uploads.begin("s1", CohortLabel.CONTROL, PromptId.P7_PROVIDER_NOTE, 1,
                          1024, "audio/wav")

    def test_unknown_content_type(self, uploads):
        with pytest.raises(UnsupportedFormat):
            uploads.begin("s1", CohortLabel.PATIENT, PromptId.P1_HEALTH_BASELINE, 1,
                          1024, "audio/flac")

    def test_rebegin_returns_same_token(self, uploads):
        a = uploads.begin("s1", CohortLabel.PATIENT, PromptId.P1_HEALTH_BASELINE, 1,
                          1024, "audio/wav")
        b = uploads.begin("s1", CohortLabel.PATIENT, PromptId.P1_HEALTH_BASELINE, 1,
                          1024, "audio/wav")
        assert a.token_id == b.token_id


class TestAppendChunk:
    def test_identical_resend_is_noop(self, uploads):
        token = uploads.begin("s1", CohortLabel.PATIENT, PromptId.P1_HEALTH_BASELINE, 1,
                              2048, "audio/wav")
        data = bytes(range(256)) * 4
        first = uploads.append(token.token_id, 0, data)
        second = uploads.append(token.token_id, 0, data)
        assert first == second == 1024

    def test_conflicting_resend(self, uploads):
        token = uploads.begin("s1", CohortLabel.PATIENT, PromptId.P1_HEALTH_BASELINE, 1,
                              2048, "audio/wav")
        uploads.append(token.token_id, 0, b"a" * 1024)
        with pytest.raises(RangeConflict):
            uploads.append(token.token_id, 0, b"b" * 1024)

    def test_offset_beyond_size(self, uploads):
        token = uploads.begin("s1", CohortLabel.PATIENT, PromptId.P1_HEALTH_BASELINE, 1,
                              1024, "audio/wav")
        with pytest.raises(PayloadTooLarge):
            uploads.append(token.token_id, 1000, b"x" * 100)

    def test_unknown_token(self, uploads):
        with pytest.raises(TokenExpired):
            uploads.append("nope", 0, b"x")

    def test_out_of_order_chunks(self, uploads):
        data = bytes(random.Random(5).randrange(256) for _ in range(5000))
        token = uploads.begin("s1", CohortLabel.PATIENT, PromptId.P1_HEALTH_BASELINE, 1,
                              len(data), "audio/wav")
        uploads.append(token.token_id, 2500, data[2500:])
        uploads.append(token.token_id, 0, data[:2500])
        assert uploads.received_ranges(token.token_id) == [(0, len(data))]


class TestFinalize:
    def test_wav_roundtrip(self, uploads, blobs):
        signal = sine(220.0, 2.0)
        data = wav_bytes(signal)
        sample = upload_whole(uploads, data, prompt=PromptId.P3_VOICE_BASELINE)
        assert sample.sample_rate == CANONICAL_RATE
        assert abs(sample.duration_s - 2.0) <= 1.0 / CANONICAL_RATE
        assert blobs.verify(sample.checksum)
        pcm = blobs.load_pcm(sample.checksum)
        assert pcm.size == sample.n_samples

    def test_checksum_mismatch(self, uploads):
        data = wav_bytes(sine(220.0, 1.0))
        token = uploads.begin("s1", CohortLabel.PATIENT, PromptId.P3_VOICE_BASELINE, 1,
                              len(data), "audio/wav")
        uploads.append(token.token_id, 0, data)
        with pytest.raises(ChecksumMismatch):
            uploads.finalize(token.token_id, "00" * 32)

    def test_incomplete(self, uploads):
        data = wav_bytes(sine(220.0, 1.0))
        token = uploads.begin("s1", CohortLabel.PATIENT, PromptId.P3_VOICE_BASELINE, 1,
                              len(data), "audio/wav")
        uploads.append(token.token_id, 0, data[:100])
        with pytest.raises(IncompleteUpload):
            uploads.finalize(token.token_id, sha256_hex(data))

    def test_finalize_idempotent(self, uploads):
        data = wav_bytes(sine(220.0, 1.0))
        token = uploads.begin("s1", CohortLabel.PATIENT, PromptId.P3_VOICE_BASELINE, 1,
                              len(data), "audio/wav")
        uploads.append(token.token_id, 0, data)
        a = uploads.finalize(token.token_id, sha256_hex(data))
        b = uploads.finalize(token.token_id, sha256_hex(data))
        assert a.sample_id == b.sample_id

    def test_byte_identical_uploads_same_sample_id(self, uploads):
        data = wav_bytes(sine(220.0, 1.0))
        a = upload_whole(uploads, data, session="s1", prompt=PromptId.P3_VOICE_BASELINE)
        b = upload_whole(uploads, data, session="s2", prompt=PromptId.P3_VOICE_BASELINE)
        assert a.sample_id == b.sample_id
        assert a.checksum == b.checksum

    def test_resampled_to_canonical(self, uploads):
        data = encode_wav_pcm16(np.asarray(sine(220.0, 1.0, rate=44100)), 44100)
        sample = upload_whole(uploads, data, prompt=PromptId.P3_VOICE_BASELINE)
        assert sample.sample_rate == CANONICAL_RATE
        assert sample.duration_s == pytest.approx(1.0, abs=0.01)


class TestCrashRecovery:
    """A process death between any two chunk writes must lose nothing that
    was acknowledged, and the resumed upload must finalize cleanly."""

    def test_kill_and_restart_at_random_points(self, tmp_path):
        rng = random.Random(99)
        signal = breathing(15.0, 30.0)
        data = wav_bytes(signal)
        digest = sha256_hex(data)
        chunk = 8192
        offsets = list(range(0, len(data), chunk))

        for trial in range(10):
            staging = tmp_path / f"t{trial}" / "staging"
            blob_dir = tmp_path / f"t{trial}" / "blobs"
            uploads = UploadManager(staging, BlobStore(blob_dir))
            token = uploads.begin("s1", CohortLabel.PATIENT, PromptId.P5_BREATHING, 1,
                                  len(data), "audio/wav")
            kill_after = rng.randrange(1, len(offsets))
            for off in offsets[:kill_after]:
                uploads.append(token.token_id, off, data[off : off + chunk])
            # simulate crash: throw away the process state, rehydrate from disk
            del uploads
            resumed = UploadManager(staging, BlobStore(blob_dir))
            ranges = resumed.received_ranges(token.token_id)
            got = sum(e - s for s, e in ranges)
            acked = min(kill_after * chunk, len(data))
            assert got >= acked  # nothing acknowledged before the crash was lost
            # resend the whole file; identical ranges are no-op acks
            for off in offsets:
                resumed.append(token.token_id, off, data[off : off + chunk])
            sample = resumed.finalize(token.token_id, digest)
            assert sample.original_sha256 == digest
            assert BlobStore(blob_dir).verify(sample.checksum)


class TestQualityGate:
    def spec(self, pid):
        return catalog_by_id()[pid]

    def test_good_breathing_clip_passes(self):
        x = breathing(15.0, 30.0, amplitude=0.4)
        report = quality_gate(x, RATE, self.spec(PromptId.P5_BREATHING), 1)
        assert report.passes, report.reasons

    def test_digital_silence_fails_near_silence(self):
        report = quality_gate(silence(30.0), RATE, self.spec(PromptId.P5_BREATHING), 1)
        assert "NearSilence" in report.reasons

    def test_square_wave_fails_clipping(self):
        report = quality_gate(square_wave(100.0, 10.0), RATE,
                              self.spec(PromptId.P3_VOICE_BASELINE), 1)
        assert "Clipping" in report.reasons
        assert report.clipping_fraction == pytest.approx(1.0)

    def test_too_short_speech(self):
        report = quality_gate(sine(220.0, 1.0), RATE, self.spec(PromptId.P1_HEALTH_BASELINE), 1)
        assert "TooShort" in report.reasons

    def test_breathing_floor_allows_20s(self):
        x = breathing(15.0, 21.0)
        report = quality_gate(x, RATE, self.spec(PromptId.P5_BREATHING), 1)
        assert "TooShort" not in report.reasons

    def test_over_duration_cap(self):
        x = sine(220.0, 75.0, amplitude=0.3)
        report = quality_gate(x, RATE, self.spec(PromptId.P3_VOICE_BASELINE), 1)
        assert "TooLong" in report.reasons  # cap 60 + 10 grace

    def test_attenuation_never_rescues_near_silence(self):
        x = sine(220.0, 5.0, amplitude=0.004)  # ~ -51 dBFS, fails
        spec = self.spec(PromptId.P3_VOICE_BASELINE)
        base = quality_gate(x, RATE, spec, 1)
        assert "NearSilence" in base.reasons
        for gain in (0.8, 0.5, 0.1):
            assert "NearSilence" in quality_gate(gain * x, RATE, spec, 1).reasons


def make_sample(pid, part, duration=30.0, quality_ok=True):
    n = int(duration * CANONICAL_RATE)
    report = QualityReport(duration, -25.0 if quality_ok else -60.0, 0.0, 0.0,
                           () if quality_ok else ("NearSilence",))
    sha = hashlib.sha256(f"{pid}{part}{duration}{quality_ok}".encode()).hexdigest()
    return AudioSample(
        sample_id=sha, prompt_id=pid, part=part, sample_rate=CANONICAL_RATE,
        n_samples=n, duration_s=duration, checksum=sha, original_sha256=sha,
        source_format="wav", received_at=utc_now(), quality=report,
    )


def make_record(cohort=CohortLabel.PATIENT, n_audio=3, transcribed=True,
                pages=None, frozen=True):
    pages = pages if pages is not None else ([1, 2, 3, 4, 5] if cohort is CohortLabel.PATIENT
                                             else [1, 2, 3, 5])
    prompts = [(PromptId.P1_HEALTH_BASELINE, 1), (PromptId.P2_ILLNESS_TRAJECTORY, 1),
               (PromptId.P3_VOICE_BASELINE, 1), (PromptId.P6_ADDITIONAL_INFO, 1)]
    audio, transcripts = {}, {}
    for pid, part in prompts[:n_audio]:
        key = prompt_key(pid, part)
        audio[key] = make_sample(pid, part)
        if transcribed:
            transcripts[key] = Transcript(pid, part, "some words", "mock", utc_now())
    return SessionRecord(
        session_id="sx", cohort=cohort, created_at=utc_now(), consent_given=True,
        consent_at=utc_now(), answers_by_page={p: {"filled": True} for p in pages},
        audio=audio, transcripts=transcripts, frozen=frozen,
    )


class TestCurate:
    def test_happy_path_included(self):
        decision = curate(make_record())
        assert decision.included
        assert decision.rules_fired == frozenset()

    def test_single_recording_excluded(self):
        decision = curate(make_record(n_audio=1))
        assert ExclusionRule.FEWER_THAN_TWO_RECORDINGS in decision.rules_fired
        assert not decision.included

    def test_missing_page_excluded(self):
        decision = curate(make_record(pages=[1, 2, 4, 5]))
        assert decision.rules_fired == {ExclusionRule.MISSING_PAGES_1_TO_5}

    def test_untranscribable_excluded(self):
        decision = curate(make_record(transcribed=False))
        assert decision.rules_fired == {ExclusionRule.UNTRANSCRIBABLE_AUDIO}

    def test_not_frozen_rejected(self):
        with pytest.raises(SessionNotFrozen):
            curate(make_record(frozen=False))

    def test_rerun_identical(self):
        record = make_record()
        at = utc_now()
        assert curate(record, decided_at=at) == curate(record, decided_at=at)

    def test_control_pages_rule_uses_control_set(self):
        # controls never answer page 4, so its absence must not fire the rule
        decision = curate(make_record(cohort=CohortLabel.CONTROL, pages=[1, 2, 3, 5]))
        assert ExclusionRule.MISSING_PAGES_1_TO_5 not in decision.rules_fired
