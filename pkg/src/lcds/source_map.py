"""Statistical mapping from summary fields to their EMR sources.

The table is built from reference corpora: for each summary field we find
where its content lives in the records (keyword containment for short
fields, semantic segments + BM25 for long ones) and turn the observations
into priority fractions — the share of reference records a source covered,
kept as exact rationals so 2/3 never loses to a rounding artifact. At
generation time sources are resolved in priority order with sequential
fallback when a field is missing from the new record.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from pathlib import Path

from .errors import EmptyCorpus, EmptyObservations, NoEntry
from .records import DocType, RecordField, UnifiedRecord, collapse_ws, dump_json
from .retrieval import build_index, rank_fields, tokenize
from .segmentation import SegmentLexicon, semantic_segment

log = logging.getLogger(__name__)

TABLE_SCHEMA_VERSION = 1
DEFAULT_THRESHOLD = 0.8


class DsField(str, Enum):
    """The six generated summary fields, in generation order."""

    PATIENT_INFO = "patient_info"
    DISCHARGE_DIAGNOSIS = "discharge_diagnosis"
    TESTS_EXAMINATIONS = "tests_examinations"
    COURSE_TREATMENT = "course_treatment"
    DISCHARGE_CONDITION = "discharge_condition"
    MEDICATION_ADVICE = "medication_advice"


# Short fields localize by keyword containment; the rest are segmented first.
DEFAULT_SHORT_FIELDS = frozenset({DsField.PATIENT_INFO, DsField.DISCHARGE_DIAGNOSIS})


@dataclass(frozen=True)
class SourceRef:
    doc_type: DocType
    field_name: str

    def __post_init__(self):
        if not self.field_name:
            raise ValueError("field_name must be non-empty")

    @property
    def sort_key(self) -> tuple[str, str]:
        return (self.doc_type.value, self.field_name)

    def __str__(self) -> str:
        return f"{self.doc_type.value}/{self.field_name}"


@dataclass
class Observation:
    """One sighting of a source supplying a summary field in one reference record."""

    record_id: str
    segment_label: str | None
    source: SourceRef
    similarity: float = 1.0


@dataclass
class RankedSource:
    ref: SourceRef
    priority: Fraction
    mean_similarity: float


@dataclass
class TableEntry:
    ds_field: DsField
    segment_label: str | None
    sources: list[RankedSource] = field(default_factory=list)


@dataclass
class SourceMappingTable:
    department: str
    version: int = 1
    entries: list[TableEntry] = field(default_factory=list)

    def entry(self, ds_field: DsField, segment_label: str | None = None) -> TableEntry:
        for e in self.entries:
            if e.ds_field == ds_field and e.segment_label == segment_label:
                return e
        raise NoEntry(f"no mapping entry for ({ds_field.value}, {segment_label!r})")

    def entries_for(self, ds_field: DsField) -> list[TableEntry]:
        return [e for e in self.entries if e.ds_field == ds_field]


@dataclass
class ResolvedSources:
    """resolve_sources output: the fields found, or an explicit unavailability marker."""

    sources: list[tuple[SourceRef, RecordField]] = field(default_factory=list)
    unavailable: bool = False


def locate_short_field(record: UnifiedRecord, ground_truth: str) -> list[SourceRef]:
    """Every (doc_type, field) whose content contains the ground truth, whitespace-insensitively."""
    if not ground_truth:
        raise ValueError("ground_truth must be non-empty")
    needle = collapse_ws(ground_truth).replace(" ", "")
    refs: list[SourceRef] = []
    seen: set[SourceRef] = set()
    for doc, fld in record.iter_fields():
        haystack = collapse_ws(fld.content).replace(" ", "")
        if needle and needle in haystack:
            ref = SourceRef(doc.doc_type, fld.field_name)
            if ref not in seen:
                seen.add(ref)
                refs.append(ref)
    return refs


def _field_key(doc_id: str, field_name: str) -> str:
    return f"{doc_id}␟{field_name}"  # separator that cannot collide with '#' ids


def locate_long_field(
    record: UnifiedRecord,
    ds_text: str,
    gateway=None,
    threshold: float = DEFAULT_THRESHOLD,
    lexicon: SegmentLexicon | None = None,
) -> list[tuple[str, SourceRef, float]]:
    """Segment a long summary text and rank every record field per segment."""
    if not ds_text:
        raise ValueError("ds_text must be non-empty")
    candidates: list[tuple[str, str]] = []
    ref_by_key: dict[str, SourceRef] = {}
    for doc, fld in record.iter_fields():
        key = _field_key(doc.doc_id, fld.field_name)
        candidates.append((key, fld.content))
        ref_by_key[key] = SourceRef(doc.doc_type, fld.field_name)
    if not candidates:
        return []
    index = build_index(candidates)
    triples: list[tuple[str, SourceRef, float]] = []
    for segment in semantic_segment(ds_text, gateway, lexicon):
        ranked = rank_fields(index, tokenize(segment.text), [key for key, _ in candidates], threshold)
        for key, score in ranked:
            triples.append((segment.label, ref_by_key[key], score))
    return triples


def compute_priorities(observations: list[Observation]) -> list[RankedSource]:
    """Coverage fraction per source: records covered / records observed, exact.

    Sorted by priority descending, then mean similarity descending, then
    source lexicographically — a total, reproducible order.
    """
    if not observations:
        raise EmptyObservations("cannot compute priorities from zero observations")
    all_records = {o.record_id for o in observations}
    covered: dict[SourceRef, set[str]] = {}
    sims: dict[SourceRef, list[float]] = {}
    for o in observations:
        covered.setdefault(o.source, set()).add(o.record_id)
        sims.setdefault(o.source, []).append(o.similarity)
    ranked = [
        RankedSource(
            ref=ref,
            priority=Fraction(len(records), len(all_records)),
            mean_similarity=sum(sims[ref]) / len(sims[ref]),
        )
        for ref, records in covered.items()
    ]
    ranked.sort(key=lambda r: (-r.priority, -r.mean_similarity, r.ref.sort_key))
    return ranked


def build_mapping_table(
    corpus: list[tuple[UnifiedRecord, dict[DsField, str]]],
    department: str,
    gateway=None,
    threshold: float = DEFAULT_THRESHOLD,
    lexicon: SegmentLexicon | None = None,
    short_fields: frozenset[DsField] = DEFAULT_SHORT_FIELDS,
) -> SourceMappingTable:
    """Localize every reference summary field across the corpus and rank the sources."""
    if not corpus:
        raise EmptyCorpus("mapping table needs at least one (record, reference) pair")
    grouped: dict[tuple[DsField, str | None], list[Observation]] = {}
    for record, reference in corpus:
        record_id = record.admission_id
        for ds_field in DsField:
            text = (reference.get(ds_field) or "").strip()
            if not text:
                continue
            if ds_field in short_fields:
                for ref in locate_short_field(record, text):
                    grouped.setdefault((ds_field, None), []).append(
                        Observation(record_id, None, ref, 1.0)
                    )
            else:
                for label, ref, score in locate_long_field(record, text, gateway, threshold, lexicon):
                    grouped.setdefault((ds_field, label), []).append(
                        Observation(record_id, label, ref, score)
                    )

    entries: list[TableEntry] = []
    for ds_field in DsField:
        keys = sorted(
            (k for k in grouped if k[0] == ds_field),
            key=lambda k: (k[1] is not None, k[1] or ""),
        )
        if not keys:
            log.warning("field %s never localized in the corpus", ds_field.value)
            entries.append(TableEntry(ds_field, None, []))
            continue
        for key in keys:
            entries.append(TableEntry(ds_field, key[1], compute_priorities(grouped[key])))
    return SourceMappingTable(department=department, version=1, entries=entries)


def resolve_sources(
    table: SourceMappingTable,
    record: UnifiedRecord,
    ds_field: DsField,
    segment_label: str | None = None,
    multi_source: bool = False,
) -> ResolvedSources:
    """Walk an entry's sources in priority order with sequential fallback.

    Returns the first present, non-empty source (all of them when
    multi_source is set); an empty record match for every source yields the
    explicit unavailability marker instead of fabricated content.
    """
    entry = table.entry(ds_field, segment_label)
    found: list[tuple[SourceRef, RecordField]] = []
    for ranked in entry.sources:
        hits = [
            (ranked.ref, fld)
            for doc, fld in record.iter_fields()
            if doc.doc_type == ranked.ref.doc_type
            and fld.field_name == ranked.ref.field_name
            and fld.content.strip()
        ]
        if hits:
            found.extend(hits)
            if not multi_source:
                break
    if not found:
        return ResolvedSources(sources=[], unavailable=True)
    return ResolvedSources(sources=found, unavailable=False)


# --- mapping-table file format (schema_version 1, UTF-8) ---------------------

def table_to_obj(table: SourceMappingTable) -> dict:
    return {
        "schema_version": TABLE_SCHEMA_VERSION,
        "department": table.department,
        "version": table.version,
        "entries": [
            {
                "ds_field": e.ds_field.value,
                "segment_label": e.segment_label,
                "sources": [
                    {
                        "doc_type": s.ref.doc_type.value,
                        "field_name": s.ref.field_name,
                        "priority_num": s.priority.numerator,
                        "priority_den": s.priority.denominator,
                        "mean_similarity": s.mean_similarity,
                    }
                    for s in e.sources
                ],
            }
            for e in table.entries
        ],
    }


def table_from_obj(obj: dict) -> SourceMappingTable:
    if obj.get("schema_version") != TABLE_SCHEMA_VERSION:
        raise ValueError(f"unsupported table schema_version: {obj.get('schema_version')!r}")
    return SourceMappingTable(
        department=obj["department"],
        version=obj["version"],
        entries=[
            TableEntry(
                ds_field=DsField(e["ds_field"]),
                segment_label=e["segment_label"],
                sources=[
                    RankedSource(
                        ref=SourceRef(DocType(s["doc_type"]), s["field_name"]),
                        priority=Fraction(s["priority_num"], s["priority_den"]),
                        mean_similarity=s["mean_similarity"],
                    )
                    for s in e["sources"]
                ],
            )
            for e in obj["entries"]
        ],
    )


def write_table(table: SourceMappingTable, path: str | Path) -> None:
    Path(path).write_text(dump_json(table_to_obj(table)), encoding="utf-8")


def read_table(path: str | Path) -> SourceMappingTable:
    return table_from_obj(json.loads(Path(path).read_text(encoding="utf-8")))
