"""HTTP review service: upload, convert, configure, generate, review, export.

Sessions are file-backed JSON documents and the golden dataset is an
append-only JSONL file written atomically (full rewrite to a temp file,
fsync, rename), so a crash mid-export leaves either the complete new line
or no new line. Session mutations are serialized per session; dataset
appends are serialized globally.
"""

from __future__ import annotations

import datetime as _dt
import json
import logging
import os
import threading
import uuid
from pathlib import Path
from typing import Callable

from fastapi import Depends, FastAPI, Header, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel, Field

from .attribution import attribute_lexical, attribution_to_obj, build_attribution_map
from .errors import LcdsError
from .gateway import Gateway, mock_gateway
from .ingest import RawDocument, convert_batch
from .logic import bundled_departments, load_department
from .records import DocType, UnifiedRecord, record_from_obj, record_to_obj
from .source_map import read_table
from .summarize import (
    STATUS_GOLDEN,
    DischargeSummary,
    summary_from_obj,
    summary_to_obj,
    validate_summary,
)

log = logging.getLogger(__name__)

STATES = ("created", "uploaded", "converted", "configured", "generated", "exported")


class DocumentIn(BaseModel):
    doc_id: str
    payload: str
    doc_type: str | None = None
    encoding: str = "utf-8"


class DocumentsBody(BaseModel):
    documents: list[DocumentIn] = Field(min_length=1)


class ConvertBody(BaseModel):
    patient_id: str = "unknown-patient"
    admission_id: str = "unknown-admission"


class ConfigBody(BaseModel):
    department: str | None = None
    provider: str | None = None
    rule_edits: dict[str, str] | None = None


class EditBody(BaseModel):
    text: str = Field(min_length=1)


class CommentBody(BaseModel):
    gen_sid: str
    text: str = Field(min_length=1)


class Session:
    def __init__(self, session_id: str):
        self.session_id = session_id
        self.state = "created"
        self.raw_docs: list[dict] = []
        self.record: UnifiedRecord | None = None
        self.department: str | None = None
        self.provider: str = "default"
        self.rule_edits: dict[str, str] = {}
        self.summary: DischargeSummary | None = None
        self.silver_obj: dict | None = None
        self.attribution: dict | None = None
        self.candidates: dict[str, list[list[str]]] = {}
        self.comments: list[dict] = []
        self.edits: list[dict] = []
        self.golden: dict | None = None
        self.lock = threading.Lock()

    def to_obj(self) -> dict:
        return {
            "session_id": self.session_id,
            "state": self.state,
            "raw_docs": self.raw_docs,
            "record": record_to_obj(self.record) if self.record else None,
            "department": self.department,
            "provider": self.provider,
            "rule_edits": self.rule_edits,
            "summary": summary_to_obj(self.summary) if self.summary else None,
            "silver_summary": self.silver_obj,
            "attribution": self.attribution,
            "candidates": self.candidates,
            "comments": self.comments,
            "edits": self.edits,
            "golden": self.golden,
        }

    @classmethod
    def from_obj(cls, obj: dict) -> "Session":
        session = cls(obj["session_id"])
        session.state = obj["state"]
        session.raw_docs = obj["raw_docs"]
        session.record = record_from_obj(obj["record"]) if obj.get("record") else None
        session.department = obj.get("department")
        session.provider = obj.get("provider", "default")
        session.rule_edits = obj.get("rule_edits", {})
        session.summary = summary_from_obj(obj["summary"]) if obj.get("summary") else None
        session.silver_obj = obj.get("silver_summary")
        session.attribution = obj.get("attribution")
        session.candidates = obj.get("candidates", {})
        session.comments = obj.get("comments", [])
        session.edits = obj.get("edits", [])
        session.golden = obj.get("golden")
        return session


def _atomic_write(path: Path, data: str) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    with tmp.open("w", encoding="utf-8") as fh:
        fh.write(data)
        fh.flush()
        os.fsync(fh.fileno())
    os.replace(tmp, path)


class Store:
    """Sessions in memory, mirrored to disk; dataset appends globally serialized."""

    def __init__(self, data_dir: Path):
        self.data_dir = data_dir
        self.sessions_dir = data_dir / "sessions"
        self.sessions_dir.mkdir(parents=True, exist_ok=True)
        self.dataset_path = data_dir / "golden_dataset.jsonl"
        self.sessions: dict[str, Session] = {}
        self.registry_lock = threading.Lock()
        self.dataset_lock = threading.Lock()
        for path in sorted(self.sessions_dir.glob("*.json")):
            try:
                session = Session.from_obj(json.loads(path.read_text(encoding="utf-8")))
                self.sessions[session.session_id] = session
            except (ValueError, KeyError) as exc:
                log.warning("skipping unreadable session file %s: %s", path.name, exc)

    def get(self, session_id: str) -> Session:
        with self.registry_lock:
            session = self.sessions.get(session_id)
        if session is None:
            raise HTTPException(status_code=404, detail=f"unknown session {session_id!r}")
        return session

    def add(self, session: Session) -> None:
        with self.registry_lock:
            self.sessions[session.session_id] = session
        self.persist(session)

    def persist(self, session: Session) -> None:
        _atomic_write(self.sessions_dir / f"{session.session_id}.json",
                      json.dumps(session.to_obj(), ensure_ascii=False) + "\n")

    def append_dataset(self, line_obj: dict) -> None:
        with self.dataset_lock:
            existing = self.dataset_path.read_text(encoding="utf-8") if self.dataset_path.exists() else ""
            new_line = json.dumps(line_obj, ensure_ascii=False) + "\n"
            _atomic_write(self.dataset_path, existing + new_line)

    def dataset_records(self) -> list[dict]:
        if not self.dataset_path.exists():
            return []
        return [
            json.loads(line)
            for line in self.dataset_path.read_text(encoding="utf-8").splitlines()
            if line.strip()
        ]


def _require_state(session: Session, *allowed: str) -> None:
    if session.state not in allowed:
        raise HTTPException(
            status_code=400,
            detail=f"session is {session.state!r}; this call needs one of {list(allowed)}",
        )


def create_app(
    data_dir: str | Path,
    gateway: Gateway | None = None,
    clock: Callable[[], str] | None = None,
    id_factory: Callable[[], str] | None = None,
) -> FastAPI:
    """Build the service app.

    clock and id_factory exist so tests can make exports byte-reproducible;
    production uses UTC timestamps and random session ids.
    """
    data_dir = Path(data_dir)
    store = Store(data_dir)
    default_gateway = gateway or mock_gateway()
    now = clock or (lambda: _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"))
    new_id = id_factory or (lambda: uuid.uuid4().hex[:12])

    app = FastAPI(title="discharge summary review service")
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )
    app.state.store = store

    def locked_session(session_id: str):
        session = store.get(session_id)
        return session

    @app.post("/api/sessions", status_code=201)
    def create_session():
        session = Session(new_id())
        store.add(session)
        return {"session_id": session.session_id, "state": session.state}

    @app.get("/api/departments")
    def departments():
        return {"departments": bundled_departments()}

    @app.get("/api/departments/{department}/rules")
    def department_rules(department: str):
        override_dir = data_dir / "departments"
        rules_dir = override_dir if (override_dir / f"{department}.rules.json").exists() else None
        if rules_dir is None and department not in bundled_departments():
            raise HTTPException(status_code=404, detail=f"unknown department {department!r}")
        rulebook, _ = load_department(department, rules_dir)
        return {
            "department": rulebook.department,
            "rules": [
                {
                    "rule_id": r.rule_id,
                    "ds_field": r.ds_field.value,
                    "logic_type": r.logic_type.value,
                    "text": r.text,
                    "editable": r.editable,
                }
                for r in rulebook.rules
            ],
        }

    @app.get("/api/sessions/{session_id}")
    def session_info(session_id: str):
        session = store.get(session_id)
        return {
            "session_id": session.session_id,
            "state": session.state,
            "department": session.department,
            "provider": session.provider,
            "documents": len(session.raw_docs),
            "comments": len(session.comments),
            "edits": len(session.edits),
        }

    @app.post("/api/sessions/{session_id}/documents")
    def upload_documents(session_id: str, body: DocumentsBody):
        session = locked_session(session_id)
        with session.lock:
            _require_state(session, "created", "uploaded")
            known = {d["doc_id"] for d in session.raw_docs}
            for doc in body.documents:
                if doc.doc_id in known:
                    raise HTTPException(status_code=400, detail=f"doc_id {doc.doc_id!r} already uploaded")
                if doc.doc_type is not None and doc.doc_type not in [t.value for t in DocType]:
                    raise HTTPException(status_code=422, detail=f"unknown doc_type {doc.doc_type!r}")
                known.add(doc.doc_id)
                session.raw_docs.append(doc.model_dump())
            session.state = "uploaded"
            store.persist(session)
            return {"state": session.state, "documents": len(session.raw_docs)}

    @app.post("/api/sessions/{session_id}/convert")
    def convert(session_id: str, body: ConvertBody):
        session = locked_session(session_id)
        with session.lock:
            _require_state(session, "uploaded")
            raws = [
                RawDocument(
                    doc_id=d["doc_id"],
                    payload=d["payload"].encode(d.get("encoding") or "utf-8"),
                    doc_type=DocType(d["doc_type"]) if d.get("doc_type") else None,
                    encoding=d.get("encoding") or "utf-8",
                )
                for d in session.raw_docs
            ]
            try:
                session.record = convert_batch(raws, body.patient_id, body.admission_id)
            except LcdsError as exc:
                raise HTTPException(status_code=400, detail=str(exc))
            session.state = "converted"
            store.persist(session)
            return {"state": session.state, "record": record_to_obj(session.record)}

    @app.get("/api/sessions/{session_id}/record")
    def get_record(session_id: str):
        session = store.get(session_id)
        if session.record is None:
            raise HTTPException(status_code=400, detail="session has no converted record yet")
        return record_to_obj(session.record)

    @app.get("/api/sessions/{session_id}/config")
    def get_config(session_id: str):
        session = store.get(session_id)
        return {
            "department": session.department,
            "provider": session.provider,
            "rule_edits": session.rule_edits,
        }

    @app.put("/api/sessions/{session_id}/config")
    def put_config(session_id: str, body: ConfigBody):
        session = locked_session(session_id)
        with session.lock:
            _require_state(session, "converted", "configured")
            if body.department is not None:
                if body.department not in bundled_departments() and not (
                    data_dir / "departments" / f"{body.department}.rules.json"
                ).exists():
                    raise HTTPException(status_code=400, detail=f"unknown department {body.department!r}")
                session.department = body.department
            if body.provider is not None:
                session.provider = body.provider
            if body.rule_edits is not None:
                session.rule_edits.update(body.rule_edits)
            if session.department:
                session.state = "configured"
            store.persist(session)
            return {"state": session.state, "department": session.department}

    def _department_assets(session: Session):
        override_dir = data_dir / "departments"
        rules_dir = override_dir if (override_dir / f"{session.department}.rules.json").exists() else None
        rulebook, kb = load_department(session.department, rules_dir)
        table_path = data_dir / "maps" / f"{session.department}.json"
        table = read_table(table_path) if table_path.exists() else None
        return rulebook, kb, table

    @app.post("/api/sessions/{session_id}/generate")
    def generate(session_id: str):
        from .summarize import generate_summary

        session = locked_session(session_id)
        with session.lock:
            _require_state(session, "configured")
            rulebook, kb, table = _department_assets(session)
            try:
                summary = generate_summary(
                    session.record, table, rulebook, kb, default_gateway, edits=session.rule_edits
                )
                scope = "resolved" if table else "full"
                amap = build_attribution_map(summary, session.record, default_gateway, table=table, scope=scope)
            except LcdsError as exc:
                raise HTTPException(status_code=400, detail=str(exc))
            from .attribution import _candidates_for_field

            session.summary = summary
            session.silver_obj = summary_to_obj(summary)
            session.attribution = attribution_to_obj(amap)
            session.candidates = {
                f.ds_field.value: [[sid, text] for sid, text in _candidates_for_field(session.record, f.ds_field, table, scope)]
                for f in summary.fields
            }
            session.state = "generated"
            store.persist(session)
            return {"state": session.state, "summary": summary_to_obj(summary)}

    @app.get("/api/sessions/{session_id}/summary")
    def get_summary(session_id: str):
        session = store.get(session_id)
        _require_state(session, "generated", "exported")
        return summary_to_obj(session.summary)

    @app.get("/api/sessions/{session_id}/attribution")
    def get_attribution(session_id: str):
        session = store.get(session_id)
        _require_state(session, "generated", "exported")
        return session.attribution

    @app.put("/api/sessions/{session_id}/sentences/{sid}")
    def edit_sentence(session_id: str, sid: str, body: EditBody):
        session = locked_session(session_id)
        with session.lock:
            _require_state(session, "generated")
            try:
                target_field, target = next(
                    (f, s) for f, s in session.summary.iter_sentences() if s.sid == sid
                )
            except StopIteration:
                raise HTTPException(status_code=400, detail=f"unknown generated sentence {sid!r}")
            old_text = target.text
            target.text = body.text
            target_field.text = " ".join(s.text for s in target_field.sentences)
            candidates = [(c[0], c[1]) for c in session.candidates.get(target_field.ds_field.value, [])]
            scored = attribute_lexical(body.text, candidates)
            target.sources = [s for s, _ in scored]
            for entry in session.attribution["entries"]:
                if entry["gen_sid"] == sid:
                    entry["sources"] = list(target.sources)
                    entry["method"] = "lexical"
                    entry["confidence"] = scored[0][1] if scored else 0.0
            session.edits.append({"gen_sid": sid, "old_text": old_text, "new_text": body.text, "at": now()})
            store.persist(session)
            return {
                "sid": sid,
                "text": target.text,
                "sources": target.sources,
                "ungrounded": not target.sources,
            }

    @app.post("/api/sessions/{session_id}/comments")
    def add_comment(session_id: str, body: CommentBody, x_reviewer_id: str = Header(default="anonymous")):
        session = locked_session(session_id)
        with session.lock:
            _require_state(session, "generated")
            if all(s.sid != body.gen_sid for _, s in session.summary.iter_sentences()):
                raise HTTPException(status_code=400, detail=f"unknown generated sentence {body.gen_sid!r}")
            comment = {"gen_sid": body.gen_sid, "author": x_reviewer_id, "text": body.text, "at": now()}
            session.comments.append(comment)
            store.persist(session)
            return {"comments": len(session.comments)}

    @app.post("/api/sessions/{session_id}/export")
    def export_golden(session_id: str, x_reviewer_id: str = Header(default="anonymous")):
        session = locked_session(session_id)
        with session.lock:
            if session.state == "exported":
                return session.golden  # idempotent: one dataset line per session
            _require_state(session, "generated")
            golden_summary = summary_from_obj(summary_to_obj(session.summary))
            golden_summary.status = STATUS_GOLDEN
            problems = validate_summary(golden_summary)
            if problems:
                raise HTTPException(status_code=400, detail=f"golden summary invalid: {problems}")
            golden = {
                "session_id": session.session_id,
                "record_ref": {
                    "patient_id": session.record.patient_id,
                    "admission_id": session.record.admission_id,
                },
                "silver_summary": session.silver_obj,
                "golden_summary": summary_to_obj(golden_summary),
                "comments": session.comments,
                "edits": session.edits,
                "reviewer_id": x_reviewer_id,
                "exported_at": now(),
            }
            store.append_dataset(golden)
            session.golden = golden
            session.state = "exported"
            store.persist(session)
            return golden

    @app.get("/api/dataset")
    def dataset():
        return {"records": store.dataset_records()}

    return app
