"""Convert raw EMR documents (HTML, XML, structured JSON, keyed text) into unified records.

Conversion is table-driven: a per-type map of source section labels to
canonical field names ships as config, and sections the map does not know
are preserved under their original label so ingest never loses content.
Detection prefers declared metadata and otherwise sniffs structure: HTML
markup means medical records, an XML root means nursing records, and keyed
payloads are classified by per-type key signatures.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from xml.etree import ElementTree

from .errors import ConversionFailure, DuplicateDocId, UnrecognizedFormat
from .records import (
    DocType,
    RecordField,
    Sentence,
    UnifiedDocument,
    UnifiedRecord,
    make_sid,
    validate_record,
)
from .segmentation import split_sentences

log = logging.getLogger(__name__)

# Payload keys consumed as document metadata instead of content fields.
_TITLE_KEYS = ("title", "标题")
_TIMESTAMP_KEYS = ("timestamp", "日期", "记录时间")

_HTML_HINT = re.compile(r"<\s*(html|body|head|div|p|h[1-6]|table|br)\b", re.IGNORECASE)
_KEYED_LINE = re.compile(r"^\s*([^:：\s][^:：]*)[:：]\s*(.*)$")

# Key signatures for structured payloads, one set per structured doc type.
_SIGNATURES: dict[DocType, frozenset[str]] = {
    DocType.EXAMINATION: frozenset({"检查名称", "检查所见", "检查结论", "exam_name", "findings"}),
    DocType.LABORATORY_TEST: frozenset({"项目", "化验结果", "参考范围", "test_items", "results", "reference_range"}),
    DocType.MEDICAL_ORDERS: frozenset({"长期医嘱", "临时医嘱", "用药医嘱", "standing_orders", "medication_orders"}),
    DocType.PATHOLOGY_REPORT: frozenset({"标本", "病理诊断", "肉眼所见", "specimen", "pathology_diagnosis"}),
    DocType.DIAGNOSIS: frozenset({"入院诊断", "出院诊断", "补充诊断", "admission_diagnosis", "discharge_diagnosis"}),
    DocType.VITAL_SIGNS: frozenset({"体温", "脉搏", "呼吸", "血压", "temperature", "pulse", "blood_pressure"}),
}


@dataclass
class RawDocument:
    doc_id: str
    payload: bytes
    doc_type: DocType | None = None  # declared in upload metadata, if any
    encoding: str = "utf-8"

    def __post_init__(self):
        if not self.doc_id:
            raise ValueError("doc_id must be non-empty")
        if "#" in self.doc_id:
            raise ValueError(f"doc_id {self.doc_id!r} may not contain '#'")
        if not self.payload:
            raise ValueError(f"document {self.doc_id!r} has an empty payload")


@dataclass
class TypeMap:
    """Per-type map of source section labels to canonical field names."""

    sections: dict[DocType, dict[str, str]] = field(default_factory=dict)

    def field_name(self, doc_type: DocType, label: str) -> str:
        label = label.strip()
        mapped = self.sections.get(doc_type, {}).get(label)
        return mapped if mapped else _slug(label)

    @classmethod
    def from_obj(cls, obj: dict) -> "TypeMap":
        return cls(sections={DocType(k): dict(v) for k, v in obj.items()})

    @classmethod
    def load(cls, path: str | Path) -> "TypeMap":
        return cls.from_obj(json.loads(Path(path).read_text(encoding="utf-8")))


def default_type_map() -> TypeMap:
    raw = resources.files("lcds").joinpath("data/type_map.json").read_text(encoding="utf-8")
    return TypeMap.from_obj(json.loads(raw))


def _slug(label: str) -> str:
    """Field names may not contain '#' or surrounding whitespace."""
    cleaned = re.sub(r"\s+", "_", label.strip()).replace("#", "-")
    return cleaned or "body"


def _decode(raw: RawDocument) -> str:
    try:
        return raw.payload.decode(raw.encoding or "utf-8")
    except (UnicodeDecodeError, LookupError) as exc:
        raise UnrecognizedFormat(f"payload of {raw.doc_id!r} is not decodable text: {exc}") from exc


def _collect_keys(value, out: set[str]) -> None:
    if isinstance(value, dict):
        for k, v in value.items():
            out.add(str(k))
            _collect_keys(v, out)
    elif isinstance(value, list):
        for item in value:
            _collect_keys(item, out)


def _keyed_lines(text: str) -> dict[str, str]:
    """Parse "label: value" lines; repeated labels accumulate."""
    fields: dict[str, str] = {}
    for line in text.splitlines():
        m = _KEYED_LINE.match(line)
        if not m:
            continue
        label, value = m.group(1).strip(), m.group(2).strip()
        fields[label] = f"{fields[label]}\n{value}" if label in fields else value
    return fields


def _classify_keys(keys: set[str]) -> DocType:
    best: DocType | None = None
    best_hits = 0
    for doc_type in DocType:  # enum order breaks ties deterministically
        signature = _SIGNATURES.get(doc_type)
        if not signature:
            continue
        hits = len(keys & signature)
        if hits > best_hits:
            best, best_hits = doc_type, hits
    if best is None:
        raise UnrecognizedFormat(f"no key signature matches {sorted(keys)[:8]}")
    return best


def detect_doc_type(raw: RawDocument) -> DocType:
    """Declared type wins; otherwise classify by structural sniffing."""
    if raw.doc_type is not None:
        return raw.doc_type
    text = _decode(raw).strip()
    try:
        payload = json.loads(text)
    except json.JSONDecodeError:
        payload = None
    if isinstance(payload, (dict, list)):
        keys: set[str] = set()
        _collect_keys(payload, keys)
        return _classify_keys(keys)
    if _HTML_HINT.search(text):
        return DocType.MEDICAL_RECORDS
    if text.startswith("<?xml") or re.match(r"^<[^<>!?]+>", text):
        return DocType.NURSING_RECORDS
    keyed = _keyed_lines(text)
    if keyed:
        return _classify_keys(set(keyed))
    raise UnrecognizedFormat(f"document {raw.doc_id!r} matches no known structure")


class _SectionHtmlParser:
    """Accumulate text under heading-delimited sections of an HTML document."""

    _HEADINGS = {"h1", "h2", "h3", "h4", "h5", "h6", "b", "strong", "th"}
    _BREAKS = {"p", "div", "br", "tr", "li", "section"}

    def __init__(self):
        from html.parser import HTMLParser

        outer = self

        class Parser(HTMLParser):
            def handle_starttag(self, tag, attrs):
                if tag in outer._HEADINGS:
                    outer._in_heading = True
                    outer._heading_text = []
                elif tag in outer._BREAKS:
                    outer._append("\n")

            def handle_endtag(self, tag):
                if tag in outer._HEADINGS and outer._in_heading:
                    outer._in_heading = False
                    label = "".join(outer._heading_text).strip()
                    if label:
                        outer._start_section(label)

            def handle_data(self, data):
                if outer._in_heading:
                    outer._heading_text.append(data)
                else:
                    outer._append(data)

        self._parser = Parser()
        self._in_heading = False
        self._heading_text: list[str] = []
        self.sections: list[tuple[str, list[str]]] = []

    def _start_section(self, label: str) -> None:
        self.sections.append((label, []))

    def _append(self, data: str) -> None:
        if not self.sections:
            if not data.strip():
                return
            self.sections.append(("body", []))
        self.sections[-1][1].append(data)

    def parse(self, text: str) -> list[tuple[str, str]]:
        self._parser.feed(text)
        self._parser.close()
        out = []
        for label, chunks in self.sections:
            content = re.sub(r"[ \t]+", " ", "".join(chunks))
            content = re.sub(r"\s*\n\s*", "\n", content).strip()
            if content:
                out.append((label, content))
        return out


def _sections_from_html(text: str) -> tuple[list[tuple[str, str]], str | None]:
    return _SectionHtmlParser().parse(text), None


def _sections_from_xml(doc_id: str, text: str) -> tuple[list[tuple[str, str]], str | None]:
    try:
        root = ElementTree.fromstring(text)
    except ElementTree.ParseError as exc:
        raise ConversionFailure(doc_id, f"XML parse error: {exc}") from exc
    timestamp = None
    for key in _TIMESTAMP_KEYS:
        if root.get(key):
            timestamp = root.get(key)
            break
    sections = []
    for child in root:
        label = child.get("name") or child.get("label") or child.tag
        content = " ".join(piece.strip() for piece in child.itertext() if piece.strip())
        if content:
            sections.append((label, content))
    return sections, timestamp


def _render_value(value) -> str:
    if isinstance(value, str):
        return value
    if isinstance(value, (int, float, bool)):
        return str(value)
    if isinstance(value, dict):
        return "，".join(f"{k}: {_render_value(v)}" for k, v in value.items())
    if isinstance(value, list):
        lines = []
        for item in value:
            rendered = _render_value(item).strip()
            if rendered and rendered[-1] not in "。.!?！？":
                rendered += "。"
            if rendered:
                lines.append(rendered)
        return "\n".join(lines)
    return ""


def _sections_from_json(doc_id: str, payload) -> tuple[list[tuple[str, str]], str | None, str | None]:
    if not isinstance(payload, dict):
        raise ConversionFailure(doc_id, "structured payload must be a JSON object")
    title = None
    timestamp = None
    sections = []
    for key, value in payload.items():
        key_s = str(key)
        if key_s in _TITLE_KEYS:
            title = str(value)
        elif key_s in _TIMESTAMP_KEYS:
            timestamp = str(value)
        else:
            sections.append((key_s, _render_value(value)))
    return sections, title, timestamp


def convert_document(raw: RawDocument, type_map: TypeMap | None = None) -> UnifiedDocument:
    """Strip markup, map sections to canonical fields, and segment every field."""
    type_map = type_map or default_type_map()
    doc_type = detect_doc_type(raw)
    text = _decode(raw)
    title: str | None = None
    timestamp: str | None = None

    stripped = text.strip()
    payload = None
    try:
        payload = json.loads(stripped)
    except json.JSONDecodeError:
        pass
    if isinstance(payload, dict):
        sections, title, timestamp = _sections_from_json(raw.doc_id, payload)
    elif _HTML_HINT.search(stripped):
        sections, timestamp = _sections_from_html(stripped)
    elif stripped.startswith("<?xml") or re.match(r"^<[^<>!?]+>", stripped):
        sections, timestamp = _sections_from_xml(raw.doc_id, stripped)
    else:
        keyed = _keyed_lines(stripped)
        if not keyed:
            raise ConversionFailure(raw.doc_id, "payload has no recognizable sections")
        sections = list(keyed.items())

    fields: list[RecordField] = []
    seen: dict[str, RecordField] = {}
    for label, content in sections:
        if not content.strip():
            continue
        name = type_map.field_name(doc_type, label)
        if name in seen:  # repeated section labels accumulate into one field
            seen[name].content = f"{seen[name].content}\n{content}"
            continue
        fld = RecordField(field_name=name, content=content)
        seen[name] = fld
        fields.append(fld)

    for fld in fields:
        fld.sentences = [
            Sentence(make_sid(raw.doc_id, fld.field_name, i), s)
            for i, s in enumerate(split_sentences(fld.content))
        ]

    if not fields:
        log.warning("document %s converted with zero fields", raw.doc_id)
    return UnifiedDocument(
        doc_id=raw.doc_id,
        doc_type=doc_type,
        title=title or raw.doc_id,
        timestamp=timestamp,
        fields=fields,
    )


def build_record(docs: list[UnifiedDocument], patient_id: str, admission_id: str) -> UnifiedRecord:
    """Merge converted documents into one record, sorted by timestamp then doc_id."""
    if not docs:
        raise ValueError("a record needs at least one document")
    seen: set[str] = set()
    for doc in docs:
        if doc.doc_id in seen:
            raise DuplicateDocId(f"doc_id {doc.doc_id!r} appears twice in the batch")
        seen.add(doc.doc_id)
    ordered = sorted(docs, key=lambda d: (d.timestamp is None, d.timestamp or "", d.doc_id))
    record = UnifiedRecord(patient_id=patient_id, admission_id=admission_id, documents=ordered)
    violations = validate_record(record)
    if violations:
        raise ValueError(f"built record violates invariants: {violations[0].code}: {violations[0].message}")
    return record


def convert_batch(
    raws: list[RawDocument],
    patient_id: str,
    admission_id: str,
    type_map: TypeMap | None = None,
) -> UnifiedRecord:
    """Convenience wrapper: convert every raw document, then build the record."""
    type_map = type_map or default_type_map()
    return build_record([convert_document(r, type_map) for r in raws], patient_id, admission_id)
