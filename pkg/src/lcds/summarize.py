"""Field-by-field generation of the silver discharge summary.

Each field independently resolves its sources from the mapping table, runs
the three-stage logic pipeline, calls the gateway, and sentence-splits the
result. A field with no resolvable sources and no knowledge structure stays
empty and carries an explicit unavailability flag — content is never
fabricated. One field failing never takes the others down.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

from .errors import GenerationFailed, LcdsError, NoEntry, NoRuleForType
from .gateway import CompletionRequest
from .logic import KnowledgeBase, LogicType, Rulebook, apply_knowledge, match_rules, orchestrate, plan_structures
from .records import RecordField, UnifiedRecord, dump_json, squash_ws
from .segmentation import SegmentLexicon, split_sentences
from .source_map import DsField, SourceMappingTable, resolve_sources

log = logging.getLogger(__name__)

SUMMARY_SCHEMA_VERSION = 1

STATUS_SILVER = "silver"
STATUS_GOLDEN = "golden"


@dataclass
class SummarySentence:
    sid: str
    text: str
    sources: list[str] = field(default_factory=list)  # supporting record sentence ids


@dataclass
class SummaryField:
    ds_field: DsField
    text: str = ""
    plan_id: str = ""
    source_unavailable: bool = False
    sentences: list[SummarySentence] = field(default_factory=list)
    error: str | None = None  # in-memory diagnostic, not serialized


@dataclass
class DischargeSummary:
    summary_id: str
    department: str
    status: str = STATUS_SILVER
    fields: list[SummaryField] = field(default_factory=list)

    def field_for(self, ds_field: DsField) -> SummaryField:
        for f in self.fields:
            if f.ds_field == ds_field:
                return f
        raise KeyError(ds_field)

    def sentence_for(self, sid: str) -> SummarySentence:
        for f in self.fields:
            for s in f.sentences:
                if s.sid == sid:
                    return s
        raise KeyError(sid)

    def iter_sentences(self):
        for f in self.fields:
            for s in f.sentences:
                yield f, s


def _sentence_split_field(fld: SummaryField, summary_id: str, raw_text: str) -> None:
    sentences = split_sentences(raw_text)
    fld.text = " ".join(sentences)
    fld.sentences = [
        SummarySentence(sid=f"{summary_id}#{fld.ds_field.value}#{i}", text=s) for i, s in enumerate(sentences)
    ]


def _resolved_fields(
    table: SourceMappingTable | None,
    record: UnifiedRecord,
    ds_field: DsField,
) -> tuple[list[RecordField], bool]:
    """Union of resolved source fields over the field's table entries.

    With no table the whole record is in scope (mapping disabled). The flag
    reports that entries existed but none could be satisfied by the record.
    """
    if table is None:
        return [fld for _, fld in record.iter_fields() if fld.content.strip()], False
    entries = table.entries_for(ds_field)
    if not entries:
        raise NoEntry(f"mapping table has no entries for {ds_field.value}")
    fields: list[RecordField] = []
    seen: set[int] = set()
    any_found = False
    any_sources = False
    for entry in entries:
        if entry.sources:
            any_sources = True
        resolved = resolve_sources(table, record, ds_field, entry.segment_label)
        if not resolved.unavailable:
            any_found = True
        for _, fld in resolved.sources:
            if id(fld) not in seen:
                seen.add(id(fld))
                fields.append(fld)
    return fields, any_sources and not any_found


def generate_field(
    record: UnifiedRecord,
    table: SourceMappingTable | None,
    rulebook: Rulebook,
    kb: KnowledgeBase | None,
    ds_field: DsField,
    gateway,
    summary_id: str,
    edits: dict[str, str] | None = None,
    knowledge_append: bool = True,
) -> SummaryField:
    """Generate one summary field: resolve, orchestrate, complete, split."""
    out = SummaryField(ds_field=ds_field)
    structures = plan_structures(rulebook, ds_field, gateway)
    if not structures:
        raise NoRuleForType(f"{rulebook.department} has no rules for {ds_field.value}")
    plan = match_rules(structures, rulebook, ds_field, edits=edits)
    out.plan_id = plan.plan_id

    sources, unavailable = _resolved_fields(table, record, ds_field)
    knowledge_hits = apply_knowledge(record, kb) if plan.has_type(LogicType.KNOWLEDGE) else []

    if not sources and not plan.has_type(LogicType.KNOWLEDGE):
        out.source_unavailable = True
        return out
    out.source_unavailable = unavailable

    # With knowledge_append the recommendations are attached verbatim after
    # the model text (and kept out of the prompt, so they cannot be echoed
    # twice); otherwise they are handed to the model as prompt context.
    text = ""
    prompt_hits = [] if knowledge_append else knowledge_hits
    if sources or prompt_hits:
        prompt = orchestrate(plan, sources, prompt_hits)
        text = gateway.complete(CompletionRequest(prompt=prompt)).text.strip()
    if knowledge_append and knowledge_hits:
        parts = [text] if text else []
        parts.extend(knowledge_hits)
        text = " ".join(parts)
    _sentence_split_field(out, summary_id, text)
    return out


def generate_summary(
    record: UnifiedRecord,
    table: SourceMappingTable | None,
    rulebook: Rulebook,
    kb: KnowledgeBase | None,
    gateway,
    edits: dict[str, str] | None = None,
    knowledge_append: bool = True,
) -> DischargeSummary:
    """Attempt all six fields; failures are isolated per field."""
    summary_id = f"ds-{record.admission_id}"
    summary = DischargeSummary(summary_id=summary_id, department=rulebook.department)
    errors: dict[str, str] = {}
    for ds_field in DsField:
        try:
            fld = generate_field(
                record, table, rulebook, kb, ds_field, gateway,
                summary_id=summary_id, edits=edits, knowledge_append=knowledge_append,
            )
        except LcdsError as exc:
            log.warning("field %s failed: %s", ds_field.value, exc)
            fld = SummaryField(ds_field=ds_field, source_unavailable=True, error=str(exc))
            errors[ds_field.value] = str(exc)
        summary.fields.append(fld)
    if len(errors) == len(list(DsField)):
        raise GenerationFailed(errors)
    return summary


# --- summary file format (schema_version 1, UTF-8) ---------------------------

def summary_to_obj(summary: DischargeSummary) -> dict:
    return {
        "schema_version": SUMMARY_SCHEMA_VERSION,
        "summary_id": summary.summary_id,
        "department": summary.department,
        "status": summary.status,
        "fields": [
            {
                "ds_field": f.ds_field.value,
                "text": f.text,
                "plan_id": f.plan_id,
                "source_unavailable": f.source_unavailable,
                "sentences": [
                    {"sid": s.sid, "text": s.text, "sources": list(s.sources)} for s in f.sentences
                ],
            }
            for f in summary.fields
        ],
    }


def summary_from_obj(obj: dict) -> DischargeSummary:
    if obj.get("schema_version") != SUMMARY_SCHEMA_VERSION:
        raise ValueError(f"unsupported summary schema_version: {obj.get('schema_version')!r}")
    return DischargeSummary(
        summary_id=obj["summary_id"],
        department=obj["department"],
        status=obj["status"],
        fields=[
            SummaryField(
                ds_field=DsField(f["ds_field"]),
                text=f["text"],
                plan_id=f["plan_id"],
                source_unavailable=f["source_unavailable"],
                sentences=[
                    SummarySentence(sid=s["sid"], text=s["text"], sources=list(s["sources"]))
                    for s in f["sentences"]
                ],
            )
            for f in obj["fields"]
        ],
    )


def validate_summary(summary: DischargeSummary) -> list[str]:
    """Invariant check mirroring record validation; returns problem strings."""
    problems: list[str] = []
    present = [f.ds_field for f in summary.fields]
    if present != list(DsField):
        problems.append(f"fields must cover all of {[d.value for d in DsField]} in order, got {[d.value for d in present]}")
    if summary.status not in (STATUS_SILVER, STATUS_GOLDEN):
        problems.append(f"unknown status {summary.status!r}")
    seen: set[str] = set()
    for f in summary.fields:
        joined = " ".join(s.text for s in f.sentences)
        if squash_ws(joined) != squash_ws(f.text):
            problems.append(f"{f.ds_field.value}: sentence texts do not reassemble the field text")
        for s in f.sentences:
            if s.sid in seen:
                problems.append(f"duplicate generated sentence id {s.sid}")
            seen.add(s.sid)
    return problems


def write_summary(summary: DischargeSummary, path: str | Path) -> None:
    Path(path).write_text(dump_json(summary_to_obj(summary)), encoding="utf-8")


def read_summary(path: str | Path) -> DischargeSummary:
    return summary_from_obj(json.loads(Path(path).read_text(encoding="utf-8")))
