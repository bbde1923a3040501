"""Link every generated sentence to the record sentences that support it.

Provider-based attribution asks for supporting identifiers over a labeled
candidate list and keeps only ids that actually exist — fabricated ids are
counted and dropped, never propagated. The lexical attributor is the
deterministic fallback: BM25 similarity of the generated sentence against
each candidate, self-normalized so a verbatim copy scores exactly 1.0.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

from .errors import LcdsError, MalformedStructuredOutput
from .gateway import CompletionRequest
from .records import UnifiedRecord, dump_json
from .source_map import DsField, SourceMappingTable, resolve_sources
from .summarize import DischargeSummary, SummarySentence
from .retrieval import build_index, normalized_score, tokenize

log = logging.getLogger(__name__)

DEFAULT_ATTRIBUTION_THRESHOLD = 0.5

METHOD_PROVIDER = "provider"
METHOD_LEXICAL = "lexical"


@dataclass
class AttributionEntry:
    gen_sid: str
    sources: list[str] = field(default_factory=list)
    method: str = METHOD_LEXICAL
    confidence: float = 0.0

    @property
    def ungrounded(self) -> bool:
        return not self.sources


@dataclass
class AttributionMap:
    summary_id: str
    entries: list[AttributionEntry] = field(default_factory=list)

    def entry_for(self, gen_sid: str) -> AttributionEntry:
        for e in self.entries:
            if e.gen_sid == gen_sid:
                return e
        raise KeyError(gen_sid)


def assign_ids(summary: DischargeSummary) -> DischargeSummary:
    """(Re)assign generated sentence ids in field order; idempotent."""
    for fld in summary.fields:
        for i, sentence in enumerate(fld.sentences):
            sentence.sid = f"{summary.summary_id}#{fld.ds_field.value}#{i}"
    return summary


def attribute_lexical(
    gen_sentence: str,
    candidates: list[tuple[str, str]],
    threshold: float = DEFAULT_ATTRIBUTION_THRESHOLD,
) -> list[tuple[str, float]]:
    """Candidates whose self-normalized similarity to the sentence exceeds the threshold."""
    if not candidates or not gen_sentence.strip():
        return []
    index = build_index(candidates)
    query = tokenize(gen_sentence)
    scored = [(sid, normalized_score(index, query, sid)) for sid, _ in candidates]
    kept = [(sid, s) for sid, s in scored if s > threshold]
    kept.sort(key=lambda pair: (-pair[1], pair[0]))
    return kept


def attribute_sentence(
    gen_sentence: str,
    candidates: list[tuple[str, str]],
    gateway,
    threshold: float = DEFAULT_ATTRIBUTION_THRESHOLD,
) -> tuple[list[str], str, float]:
    """Supporting ids for one sentence: (ids, method, confidence).

    Provider mode requests an identifier list; ids outside the candidate set
    are discarded. Malformed provider output falls back to the lexical path.
    """
    use_provider = gateway is not None and not getattr(gateway, "is_mock", False)
    if use_provider and candidates:
        listing = "\n".join(f"[{sid}] {text}" for sid, text in candidates)
        prompt = (
            "下面是带标识符的原文句子列表：\n"
            + listing
            + "\n\n请找出支持这句话的原文句子，仅返回对应标识符列表（如 [id1, id2]），"
            + "没有支持句时返回 []。\n生成句："
            + gen_sentence
        )
        try:
            returned = gateway.complete_structured(CompletionRequest(prompt=prompt, structured="identifier-list"))
            valid_ids = {sid for sid, _ in candidates}
            kept: list[str] = []
            for sid in returned:
                if sid in valid_ids:
                    if sid not in kept:
                        kept.append(sid)
                else:
                    gateway.dropped_ids += 1
            return kept, METHOD_PROVIDER, 1.0 if kept else 0.0
        except MalformedStructuredOutput:
            log.warning("provider attribution unparseable; falling back to lexical")
    scored = attribute_lexical(gen_sentence, candidates, threshold)
    confidence = scored[0][1] if scored else 0.0
    return [sid for sid, _ in scored], METHOD_LEXICAL, confidence


def _candidates_for_field(
    record: UnifiedRecord,
    ds_field: DsField,
    table: SourceMappingTable | None,
    scope: str,
) -> list[tuple[str, str]]:
    if scope == "resolved" and table is not None:
        seen: set[str] = set()
        out: list[tuple[str, str]] = []
        for entry in table.entries_for(ds_field):
            resolved = resolve_sources(table, record, ds_field, entry.segment_label)
            for _, fld in resolved.sources:
                for s in fld.sentences:
                    if s.sid not in seen:
                        seen.add(s.sid)
                        out.append((s.sid, s.text))
        return out
    return [(s.sid, s.text) for _, fld in record.iter_fields() for s in fld.sentences]


def build_attribution_map(
    summary: DischargeSummary,
    record: UnifiedRecord,
    gateway=None,
    table: SourceMappingTable | None = None,
    scope: str = "resolved",
    threshold: float = DEFAULT_ATTRIBUTION_THRESHOLD,
) -> AttributionMap:
    """Attribute every generated sentence and write the links back into the summary.

    The candidate pool per field is the resolved source fields when a table
    is given (scope="resolved"), otherwise the whole record. Soundness is
    enforced unconditionally: a supporting id that does not dereference into
    the record never enters the map.
    """
    if scope not in ("resolved", "full"):
        raise ValueError(f"scope must be 'resolved' or 'full', got {scope!r}")
    record_sids = set(record.sentence_index())
    amap = AttributionMap(summary_id=summary.summary_id)
    for fld in summary.fields:
        candidates = _candidates_for_field(record, fld.ds_field, table, scope)
        candidates = [(sid, text) for sid, text in candidates if sid in record_sids]
        for sentence in fld.sentences:
            try:
                sids, method, confidence = attribute_sentence(sentence.text, candidates, gateway, threshold)
            except LcdsError as exc:
                log.warning("attribution failed for %s (%s); recording lexical empty", sentence.sid, exc)
                sids, method, confidence = [], METHOD_LEXICAL, 0.0
            sids = [sid for sid in sids if sid in record_sids]
            sentence.sources = list(sids)
            amap.entries.append(
                AttributionEntry(gen_sid=sentence.sid, sources=sids, method=method, confidence=confidence)
            )
    return amap


# --- attribution file format (UTF-8) -----------------------------------------

def attribution_to_obj(amap: AttributionMap) -> dict:
    return {
        "summary_id": amap.summary_id,
        "entries": [
            {"gen_sid": e.gen_sid, "sources": list(e.sources), "method": e.method, "confidence": e.confidence}
            for e in amap.entries
        ],
    }


def attribution_from_obj(obj: dict) -> AttributionMap:
    return AttributionMap(
        summary_id=obj["summary_id"],
        entries=[
            AttributionEntry(
                gen_sid=e["gen_sid"],
                sources=list(e["sources"]),
                method=e["method"],
                confidence=e["confidence"],
            )
            for e in obj["entries"]
        ],
    )


def write_attribution(amap: AttributionMap, path: str | Path) -> None:
    Path(path).write_text(dump_json(attribution_to_obj(amap)), encoding="utf-8")


def read_attribution(path: str | Path) -> AttributionMap:
    return attribution_from_obj(json.loads(Path(path).read_text(encoding="utf-8")))
