"""Admin batch pipeline: metrics, transcription, freeze + curation.

Every step is idempotent; a re-run only touches sessions with work left.
Results are appended to the per-session event logs so a restarted service
rebuilds them like any other state.
"""

from __future__ import annotations

from typing import Any

from .domain import prompt_key
from .ingest import curate
from .metrics import measure_sample
from .protocol import SessionStatus, make_freeze_event
from .store import (
    SessionStore,
    make_inclusion_event,
    make_metrics_event,
    make_transcript_event,
    make_transcript_failure_event,
)
from .transcription import AsrClient, transcribe_session


def run_metrics(store: SessionStore) -> int:
    computed = 0
    for sid in store.session_ids():
        record = store.get(sid).record
        for key, sample in sorted(record.audio.items()):
            if key in record.metrics:
                continue
            pcm = store.blobs.load_pcm(sample.checksum)
            m = measure_sample(pcm, sample.sample_rate, sample.prompt_id, sample.part)
            store.apply_event(sid, make_metrics_event(key, m))
            computed += 1
    return computed


def run_transcription(store: SessionStore, client: AsrClient, concurrency: int = 4) -> int:
    added = 0
    for sid in store.session_ids():
        record = store.get(sid).record
        transcripts, failures = transcribe_session(
            record, client, store.blobs, concurrency=concurrency
        )
        for key, transcript in sorted(transcripts.items()):
            store.apply_event(sid, make_transcript_event(key, transcript))
            added += 1
        for key, error in sorted(failures.items()):
            if key not in record.asr_failures:
                store.apply_event(sid, make_transcript_failure_event(key, error))
    return added


def run_curation(store: SessionStore) -> dict[str, bool]:
    """Freeze finished/abandoned sessions and decide inclusion once."""
    decisions: dict[str, bool] = {}
    for sid in store.session_ids():
        entry = store.get(sid)
        if entry.state.status not in (SessionStatus.COMPLETE, SessionStatus.ABANDONED):
            continue
        if not entry.record.frozen:
            store.apply_event(sid, make_freeze_event())
        record = store.get(sid).record
        if record.inclusion is None:
            decision = curate(record)
            store.apply_event(sid, make_inclusion_event(decision))
            decisions[sid] = decision.included
    return decisions


def run_pipeline(
    store: SessionStore,
    asr: AsrClient,
    transcribe: bool = True,
    metrics: bool = True,
    do_curate: bool = True,
    sweep: bool = False,
    concurrency: int = 4,
) -> dict[str, Any]:
    report: dict[str, Any] = {}
    if sweep:
        report["abandoned"] = store.sweep_abandoned()
    if metrics:
        report["metrics_computed"] = run_metrics(store)
    if transcribe:
        report["transcripts_added"] = run_transcription(store, asr, concurrency)
    if do_curate:
        decisions = run_curation(store)
        report["curated"] = len(decisions)
        report["included"] = sum(1 for v in decisions.values() if v)
    return report
