"""Unified record model: documents, fields, sentence ids, and the record file format.

A unified record is one patient admission's documents normalized into typed
fields, each field carrying its sentence segmentation. Sentence ids are the
stable currency of the whole pipeline (source mapping, attribution, review),
so their format and the record file format are both versioned contracts.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

SCHEMA_VERSION = 1
SID_SEP = "#"

_WS = re.compile(r"\s+")


def collapse_ws(text: str) -> str:
    """Collapse runs of whitespace to single spaces and trim."""
    return _WS.sub(" ", text).strip()


def squash_ws(text: str) -> str:
    """Remove all whitespace; CJK content carries no spaces between sentences,
    so 'equal modulo whitespace' comparisons must ignore whitespace entirely."""
    return _WS.sub("", text)


class DocType(str, Enum):
    """The eight raw EMR document types a record can contain."""

    MEDICAL_RECORDS = "medical_records"
    NURSING_RECORDS = "nursing_records"
    EXAMINATION = "examination"
    LABORATORY_TEST = "laboratory_test"
    MEDICAL_ORDERS = "medical_orders"
    PATHOLOGY_REPORT = "pathology_report"
    DIAGNOSIS = "diagnosis"
    VITAL_SIGNS = "vital_signs"


def make_sid(doc_id: str, field_name: str, n: int) -> str:
    return f"{doc_id}{SID_SEP}{field_name}{SID_SEP}{n}"


def parse_sid(sid: str) -> tuple[str, str, int]:
    """Split a sentence id back into (doc_id, field_name, n).

    doc_ids may not contain '#', so the first separator ends the doc_id and
    the last one starts the index; anything between is the field name.
    """
    parts = sid.split(SID_SEP)
    if len(parts) < 3:
        raise ValueError(f"not a sentence id: {sid!r}")
    doc_id, field_name, n_str = parts[0], SID_SEP.join(parts[1:-1]), parts[-1]
    if not doc_id or not field_name or not n_str.isdigit():
        raise ValueError(f"not a sentence id: {sid!r}")
    return doc_id, field_name, int(n_str)


@dataclass
class Sentence:
    sid: str
    text: str


@dataclass
class RecordField:
    field_name: str
    content: str
    sentences: list[Sentence] = field(default_factory=list)


@dataclass
class UnifiedDocument:
    doc_id: str
    doc_type: DocType
    title: str
    timestamp: str | None = None  # ISO-8601 or absent
    fields: list[RecordField] = field(default_factory=list)


@dataclass
class UnifiedRecord:
    patient_id: str
    admission_id: str
    documents: list[UnifiedDocument] = field(default_factory=list)

    def iter_fields(self):
        """Yield (document, field) pairs in stored order."""
        for doc in self.documents:
            for fld in doc.fields:
                yield doc, fld

    def sentence_index(self) -> dict[str, str]:
        """Map every sentence id in the record to its text."""
        return {s.sid: s.text for _, fld in self.iter_fields() for s in fld.sentences}


@dataclass
class Violation:
    """One invariant violation found by validate_record. Violations are data."""

    code: str
    message: str
    where: str = ""


def validate_record(record: UnifiedRecord) -> list[Violation]:
    """Check every record invariant; an empty list means the record is valid."""
    violations: list[Violation] = []

    seen_docs: set[str] = set()
    for doc in record.documents:
        if doc.doc_id in seen_docs:
            violations.append(Violation("DuplicateDocId", f"doc_id {doc.doc_id!r} repeats", doc.doc_id))
        seen_docs.add(doc.doc_id)
        if SID_SEP in doc.doc_id:
            violations.append(Violation("BadDocId", f"doc_id {doc.doc_id!r} contains {SID_SEP!r}", doc.doc_id))

    seen_sids: set[str] = set()
    for doc in record.documents:
        for fld in doc.fields:
            where = f"{doc.doc_id}/{fld.field_name}"
            if not fld.field_name:
                violations.append(Violation("EmptyFieldName", f"document {doc.doc_id!r} has an unnamed field", doc.doc_id))
            joined = squash_ws(" ".join(s.text for s in fld.sentences))
            if joined != squash_ws(fld.content):
                violations.append(Violation("ContentMismatch", "sentence texts do not reassemble the field content", where))
            for i, sent in enumerate(fld.sentences):
                if sent.sid in seen_sids:
                    violations.append(Violation("DuplicateSentenceId", f"sentence id {sent.sid!r} repeats", sent.sid))
                seen_sids.add(sent.sid)
                try:
                    parsed = parse_sid(sent.sid)
                except ValueError:
                    violations.append(Violation("BadSentenceId", f"unparseable sentence id {sent.sid!r}", where))
                    continue
                if parsed != (doc.doc_id, fld.field_name, i):
                    violations.append(
                        Violation("BadSentenceId", f"sentence id {sent.sid!r} does not match {where}[{i}]", where)
                    )

    return violations


# --- record file format (schema_version 1, UTF-8) ---------------------------

def record_to_obj(record: UnifiedRecord) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "patient_id": record.patient_id,
        "admission_id": record.admission_id,
        "documents": [
            {
                "doc_id": doc.doc_id,
                "doc_type": doc.doc_type.value,
                "title": doc.title,
                "timestamp": doc.timestamp,
                "fields": [
                    {
                        "field_name": fld.field_name,
                        "content": fld.content,
                        "sentences": [{"sid": s.sid, "text": s.text} for s in fld.sentences],
                    }
                    for fld in doc.fields
                ],
            }
            for doc in record.documents
        ],
    }


def record_from_obj(obj: dict) -> UnifiedRecord:
    if obj.get("schema_version") != SCHEMA_VERSION:
        raise ValueError(f"unsupported record schema_version: {obj.get('schema_version')!r}")
    return UnifiedRecord(
        patient_id=obj["patient_id"],
        admission_id=obj["admission_id"],
        documents=[
            UnifiedDocument(
                doc_id=d["doc_id"],
                doc_type=DocType(d["doc_type"]),
                title=d["title"],
                timestamp=d.get("timestamp"),
                fields=[
                    RecordField(
                        field_name=f["field_name"],
                        content=f["content"],
                        sentences=[Sentence(s["sid"], s["text"]) for s in f["sentences"]],
                    )
                    for f in d["fields"]
                ],
            )
            for d in obj["documents"]
        ],
    )


def dump_json(obj: dict) -> str:
    """Canonical serialization used by every file format: compact, UTF-8, newline-terminated."""
    return json.dumps(obj, ensure_ascii=False, separators=(",", ":")) + "\n"


def write_record(record: UnifiedRecord, path: str | Path) -> None:
    Path(path).write_text(dump_json(record_to_obj(record)), encoding="utf-8")


def read_record(path: str | Path) -> UnifiedRecord:
    return record_from_obj(json.loads(Path(path).read_text(encoding="utf-8")))
