"""HTTP facade over the protocol engine, ingest, pipeline, and reports.

All participant-facing responses stay small (well under 4 KiB) and every
mutating endpoint is idempotent or conflict-checked, so flaky clients can
retry anything. State lives in per-session event logs; restarting the
process on the same data directory resumes exactly where it stopped.
"""

from __future__ import annotations

import re
from typing import Any, Optional

from fastapi import Depends, FastAPI, Header, Query, Request
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from . import errors as err
from .blobs import sha256_hex
from .config import ServiceConfig, make_asr_client, make_llm_client
from .domain import CohortLabel, PromptId, catalog_by_id
from .evaluation import aggregate, rate_sessions
from .ingest import UploadManager
from .pipeline import run_pipeline
from .protocol import (
    PageKind,
    is_complete,
    make_ack_event,
    make_answers_event,
    make_audio_event,
    make_consent_event,
    make_nothing_else_event,
    page_spec,
)
from .reports import build_manifest, condition_prevalence, demographic_report
from .store import AnswerValidationError, SessionStore

ERROR_STATUS: list[tuple[type[Exception], int]] = [
    (err.PayloadTooLarge, 413),
    (err.CohortViolation, 422),
    (err.UnsupportedFormat, 415),
    (err.UnknownSession, 404),
    (err.UnknownPrompt, 404),
    (err.TokenExpired, 404),
    (err.NotAuthorized, 403),
    (err.WrongPage, 409),
    (err.PageIncomplete, 409),
    (err.ConsentAlreadyRecorded, 409),
    (err.DuplicatePart, 409),
    (err.RangeConflict, 409),
    (err.IncompleteUpload, 409),
    (err.SessionNotFrozen, 409),
    (err.AsrUnavailable, 503),
    (err.LlmUnavailable, 503),
    (err.MissingField, 400),
    (AnswerValidationError, 400),
    (err.ChecksumMismatch, 400),
    (err.DecodeFailure, 400),
    (err.VoiceIntakeError, 400),
]

_CONTENT_RANGE = re.compile(r"bytes\s+(\d+)-(\d+)/(\d+|\*)")


class CreateSessionBody(BaseModel):
    cohort_screening_answer: str = Field(description="verbatim answer to the screening question")


class ConsentBody(BaseModel):
    granted: bool


class AnswersBody(BaseModel):
    answers: dict[str, Any]


class BeginUploadBody(BaseModel):
    declared_size: int
    content_type: str = "audio/wav"


class FinalizeBody(BaseModel):
    sha256: str


class PipelineBody(BaseModel):
    transcribe: bool = True
    metrics: bool = True
    curate: bool = True
    sweep: bool = False


def screening_to_cohort(answer: str) -> CohortLabel:
    generic = answer.strip().lower()
    if generic in ("yes", "y", "true", "1"):
        return CohortLabel.PATIENT
    return CohortLabel.CONTROL


def _state_body(store: SessionStore, session_id: str) -> dict[str, Any]:
    entry = store.get(session_id)
    done, missing = is_complete(entry.state)
    body = entry.state.to_dict()
    body["is_complete"] = done
    body["missing"] = missing
    return body


def _page_body(store: SessionStore, session_id: str) -> dict[str, Any]:
    entry = store.get(session_id)
    page = entry.state.current_page
    if page is None or entry.state.status.value in ("Complete", "Abandoned"):
        return {"complete": entry.state.status.value == "Complete",
                "status": entry.state.status.value}
    spec = page_spec(page)
    body = {"complete": False, "status": entry.state.status.value, "page": spec.to_dict()}
    if spec.prompt_id is not None:
        prompt = catalog_by_id()[spec.prompt_id]
        body["prompt"] = prompt.to_dict()
        body["pending_parts"] = list(entry.state.pending_uploads)
    return body


def create_app(
    config: Optional[ServiceConfig] = None,
    asr_client=None,
    llm_client=None,
) -> FastAPI:
    config = config or ServiceConfig()
    store = SessionStore(config.data_dir)
    uploads = UploadManager(
        f"{config.data_dir}/staging", store.blobs, max_bytes=config.max_upload_bytes
    )
    asr = asr_client if asr_client is not None else make_asr_client(config)
    llm = llm_client if llm_client is not None else make_llm_client(config)

    app = FastAPI(title="voiceintake", version="0.1.0")
    app.state.store = store
    app.state.uploads = uploads
    app.state.config = config

    @app.exception_handler(err.VoiceIntakeError)
    async def domain_error_handler(request: Request, exc: Exception):
        for etype, status in ERROR_STATUS:
            if isinstance(exc, etype):
                return JSONResponse(
                    status_code=status,
                    content={"error": type(exc).__name__, "detail": str(exc)},
                )
        return JSONResponse(status_code=400, content={"error": type(exc).__name__,
                                                      "detail": str(exc)})

    # -- auth helpers --

    def bearer(authorization: Optional[str] = Header(default=None)) -> str:
        if not authorization or not authorization.startswith("Bearer "):
            raise err.NotAuthorized("missing bearer token")
        return authorization.removeprefix("Bearer ").strip()

    def admin_guard(token: str = Depends(bearer)) -> str:
        if not config.admin_token or token != config.admin_token:
            raise err.NotAuthorized("admin token required")
        return token

    def session_scope(session_id: str, token: str) -> str:
        """Scope of this token for this session: Participant/Provider/Admin."""
        if config.admin_token and token == config.admin_token:
            return "Admin"
        entry = store.get(session_id)
        if token == entry.api_token:
            return "Participant"
        if entry.provider_token and token == entry.provider_token:
            return "Provider"
        raise err.NotAuthorized("token does not grant access to this session")

    # -- participant surface --

    @app.get("/healthz")
    def healthz():
        return {"ok": True}

    @app.post("/v1/sessions", status_code=201)
    def create_session(body: CreateSessionBody):
        cohort = screening_to_cohort(body.cohort_screening_answer)
        entry = store.create_session(cohort, screening_answer=body.cohort_screening_answer)
        return {
            "session_id": entry.state.session_id,
            "token": entry.api_token,
            "cohort": cohort.value,
            "state": entry.state.to_dict(),
        }

    @app.post("/v1/sessions/{session_id}/consent")
    def record_consent(session_id: str, body: ConsentBody, token: str = Depends(bearer)):
        session_scope(session_id, token)
        store.apply_event(session_id, make_consent_event(body.granted))
        return _state_body(store, session_id)

    @app.get("/v1/sessions/{session_id}/page")
    def current_page(session_id: str, token: str = Depends(bearer)):
        session_scope(session_id, token)
        return _page_body(store, session_id)

    @app.get("/v1/sessions/{session_id}/state")
    def session_state(session_id: str, token: str = Depends(bearer)):
        session_scope(session_id, token)
        return _state_body(store, session_id)

    def _writable_page(scope: str, page: int) -> None:
        if scope == "Provider" and page not in (14, 15, 16, 17):
            raise err.NotAuthorized("provider tokens may only write the provider section")

    @app.post("/v1/sessions/{session_id}/pages/{page}/answers")
    def submit_answers(session_id: str, page: int, body: AnswersBody,
                       token: str = Depends(bearer)):
        scope = session_scope(session_id, token)
        _writable_page(scope, page)
        if page == 12 and body.answers.get("nothing_else_checked"):
            store.apply_event(session_id, make_nothing_else_event())
        else:
            store.apply_event(session_id, make_answers_event(page, body.answers))
        return _state_body(store, session_id)

    @app.post("/v1/sessions/{session_id}/pages/{page}/ack")
    def acknowledge_page(session_id: str, page: int, token: str = Depends(bearer)):
        scope = session_scope(session_id, token)
        _writable_page(scope, page)
        store.apply_event(session_id, make_ack_event(page))
        return _state_body(store, session_id)

    # -- audio upload surface --

    def _prompt(prompt: str) -> PromptId:
        try:
            return PromptId(prompt.upper())
        except ValueError:
            raise err.UnknownPrompt(prompt) from None

    @app.post("/v1/sessions/{session_id}/audio/{prompt}/{part}:begin")
    def begin_upload(session_id: str, prompt: str, part: int, body: BeginUploadBody,
                     token: str = Depends(bearer)):
        scope = session_scope(session_id, token)
        prompt_id = _prompt(prompt)
        if scope == "Provider" and prompt_id is not PromptId.P7_PROVIDER_NOTE:
            raise err.NotAuthorized("provider tokens may only upload the provider note")
        entry = store.get(session_id)
        upload = uploads.begin(
            session_id, entry.state.cohort, prompt_id, part,
            body.declared_size, body.content_type,
        )
        return {
            "upload_token": upload.token_id,
            "received_ranges": [list(r) for r in upload.ranges],
            "received_bytes": upload.received_bytes,
            "expires_at": upload.to_dict()["expires_at"],
        }

    @app.put("/v1/sessions/{session_id}/audio/{prompt}/{part}:chunk")
    async def upload_chunk(session_id: str, prompt: str, part: int, request: Request,
                           upload_token: str = Query(alias="token"),
                           content_range: Optional[str] = Header(default=None),
                           token: str = Depends(bearer)):
        session_scope(session_id, token)
        if not content_range:
            raise err.RangeConflict("Content-Range header required")
        match = _CONTENT_RANGE.match(content_range)
        if not match:
            raise err.RangeConflict(f"unparseable Content-Range: {content_range}")
        start, end_incl = int(match.group(1)), int(match.group(2))
        data = await request.body()
        if len(data) != end_incl - start + 1:
            raise err.RangeConflict(
                f"body length {len(data)} does not match Content-Range {content_range}"
            )
        received = uploads.append(upload_token, start, data)
        return {"received_bytes": received,
                "received_ranges": [list(r) for r in uploads.received_ranges(upload_token)]}

    @app.post("/v1/sessions/{session_id}/audio/{prompt}/{part}:finalize")
    def finalize_upload(session_id: str, prompt: str, part: int, body: FinalizeBody,
                        token: str = Depends(bearer)):
        session_scope(session_id, token)
        prompt_id = _prompt(prompt)
        entry = store.get(session_id)
        key_attached = f"{prompt_id.value}/{part}"
        token_obj = uploads.find_token(session_id, prompt_id, part)
        if token_obj is None:
            raise err.TokenExpired("no upload in progress for this prompt part")
        sample = uploads.finalize(token_obj.token_id, body.sha256)
        if key_attached not in entry.state.attached_parts:
            event = make_audio_event(prompt_id, part, sample.sample_id)
            event.payload["sample"] = sample.to_dict()
            store.apply_event(session_id, event)
        return {"sample": sample.to_dict(), "state": _state_body(store, session_id)}

    # -- admin surface --

    @app.post("/v1/admin/sessions/{session_id}/provider-token")
    def provider_token(session_id: str, _: str = Depends(admin_guard)):
        return {"token": store.issue_provider_token(session_id), "scope": "Provider"}

    @app.post("/v1/admin/pipeline/run")
    def pipeline_run(body: PipelineBody, _: str = Depends(admin_guard)):
        return run_pipeline(
            store, asr,
            transcribe=body.transcribe,
            metrics=body.metrics,
            do_curate=body.curate,
            sweep=body.sweep,
            concurrency=config.transcribe_concurrency,
        )

    @app.get("/v1/admin/stats")
    def stats(_: str = Depends(admin_guard)):
        records = store.records()
        manifest = build_manifest(records)
        return {
            "demographics": demographic_report(records).to_dict(),
            "condition_prevalence": [list(kv) for kv in condition_prevalence(records)],
            "totals": manifest.totals.to_dict(),
        }

    @app.get("/v1/admin/export")
    def export(_: str = Depends(admin_guard)):
        records = store.records()
        manifest = build_manifest(records)
        rows = []
        for record in manifest.sessions:
            row = record.to_dict()
            row["asr_quality_wer"] = manifest.asr_quality_wer[record.session_id]
            rows.append(row)
        return {
            "schema_version": manifest.schema_version,
            "totals": manifest.totals.to_dict(),
            "sessions": rows,
        }

    @app.post("/v1/admin/eval/run")
    def eval_run(_: str = Depends(admin_guard)):
        records = store.records()
        ratings = rate_sessions(records, llm, concurrency=config.eval_concurrency)
        if not ratings:
            return {"n": 0, "ratings": [], "aggregate": None}
        agg = aggregate(ratings)
        return {
            "n": agg.n,
            "ratings": [r.to_dict() for r in ratings],
            "aggregate": agg.to_dict(),
        }

    return app
