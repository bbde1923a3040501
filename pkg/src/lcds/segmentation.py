"""Sentence segmentation and semantic segmentation of long summary fields.

Sentence splitting is rule-based and deterministic: fullwidth terminators
(。！？) always end a sentence, ASCII terminators (. ! ?) only when followed
by whitespace or end of text, which keeps decimals like "3.5 mg" intact.

Semantic segmentation labels stretches of a long field (surgery,
chemotherapy, ...). It normally asks a completion provider, but every
deployment also carries a keyword lexicon so the pipeline stays fully
deterministic with the mock provider or with no provider at all. Provider
output is trusted only insofar as it can be aligned back onto substrings of
the input; anything else is rejected and the lexicon takes over.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .errors import MalformedStructuredOutput, SegmentationRejected

log = logging.getLogger(__name__)

FULL_TERMINATORS = "。！？"
ASCII_TERMINATORS = ".!?"
DEFAULT_LABEL = "other"


def split_spans(text: str) -> list[tuple[int, int]]:
    """Return (start, end) spans of sentences in text, excluding surrounding whitespace."""
    spans: list[tuple[int, int]] = []
    start = 0
    i = 0
    n = len(text)

    def close(end: int) -> None:
        nonlocal start
        piece = text[start:end]
        lead = len(piece) - len(piece.lstrip())
        trail = len(piece) - len(piece.rstrip())
        if piece.strip():
            spans.append((start + lead, end - trail))
        start = end

    while i < n:
        ch = text[i]
        if ch in FULL_TERMINATORS:
            close(i + 1)
        elif ch in ASCII_TERMINATORS and (i + 1 == n or text[i + 1].isspace()):
            close(i + 1)
        i += 1
    close(n)
    return spans


def split_sentences(text: str) -> list[str]:
    """Split text into sentences; empty input gives an empty list."""
    return [text[a:b] for a, b in split_spans(text)]


@dataclass
class SemanticSegment:
    label: str
    text: str
    char_span: tuple[int, int]


@dataclass
class SegmentLexicon:
    """Ordered label -> cue terms table driving the deterministic fallback."""

    labels: list[tuple[str, list[str]]] = field(default_factory=list)
    default_label: str = DEFAULT_LABEL

    def classify(self, sentence: str) -> str:
        """Label with the most distinct cue hits; ties go to lexicon order."""
        best_label = self.default_label
        best_hits = 0
        for label, cues in self.labels:
            hits = sum(1 for cue in cues if cue and cue in sentence)
            if hits > best_hits:
                best_label, best_hits = label, hits
        return best_label

    @classmethod
    def from_obj(cls, obj: dict) -> "SegmentLexicon":
        return cls(
            labels=[(e["label"], list(e["cues"])) for e in obj["labels"]],
            default_label=obj.get("default_label", DEFAULT_LABEL),
        )

    @classmethod
    def load(cls, path: str | Path) -> "SegmentLexicon":
        return cls.from_obj(json.loads(Path(path).read_text(encoding="utf-8")))


def default_lexicon() -> SegmentLexicon:
    raw = resources.files("lcds").joinpath("data/segment_lexicon.json").read_text(encoding="utf-8")
    return SegmentLexicon.from_obj(json.loads(raw))


def _find_normalized(haystack: str, needle: str) -> tuple[int, int] | None:
    """Whitespace-insensitive substring search; returns a span in the original text."""
    norm_chars: list[str] = []
    positions: list[int] = []
    for i, ch in enumerate(haystack):
        if not ch.isspace():
            norm_chars.append(ch)
            positions.append(i)
    norm_hay = "".join(norm_chars)
    norm_needle = "".join(ch for ch in needle if not ch.isspace())
    if not norm_needle:
        return None
    at = norm_hay.find(norm_needle)
    if at < 0:
        return None
    return positions[at], positions[at + len(norm_needle) - 1] + 1


def align_segments(segments: list[tuple[str, str]], field_text: str) -> list[SemanticSegment]:
    """Map provider (label, raw text) pairs onto char spans of field_text.

    Exact substring matches win; otherwise a whitespace-insensitive match is
    attempted. Segments that cannot be located are dropped with a warning —
    provider output that is not grounded in the input never survives.
    """
    aligned: list[SemanticSegment] = []
    for label, raw in segments:
        at = field_text.find(raw)
        if at >= 0:
            span = (at, at + len(raw))
        else:
            found = _find_normalized(field_text, raw)
            if found is None:
                log.warning("dropping unalignable segment %r (label %s)", raw[:40], label)
                continue
            span = found
        aligned.append(SemanticSegment(label=label, text=field_text[span[0]:span[1]], char_span=span))
    return aligned


def _merge_labeled_spans(
    labels: list[str], spans: list[tuple[int, int]], text: str
) -> list[SemanticSegment]:
    """Merge consecutive same-label sentence spans into segments."""
    segments: list[SemanticSegment] = []
    for label, span in zip(labels, spans):
        if segments and segments[-1].label == label:
            prev = segments[-1]
            merged = (prev.char_span[0], span[1])
            segments[-1] = SemanticSegment(label, text[merged[0]:merged[1]], merged)
        else:
            segments.append(SemanticSegment(label, text[span[0]:span[1]], span))
    return segments


def _lexicon_segment(field_text: str, lexicon: SegmentLexicon) -> list[SemanticSegment]:
    spans = split_spans(field_text)
    labels = [lexicon.classify(field_text[a:b]) for a, b in spans]
    return _merge_labeled_spans(labels, spans, field_text)


def _provider_segment(field_text: str, gateway, lexicon: SegmentLexicon) -> list[SemanticSegment]:
    from .gateway import CompletionRequest  # local import to avoid a cycle

    prompt = (
        "请将下面的文本按主题切分，输出 JSON 对象：键为类别标签（例如 "
        + "、".join(label for label, _ in lexicon.labels)
        + "），值为原文中的对应片段，片段必须逐字取自原文。\n\n"
        + field_text
    )
    resp = gateway.complete_structured(CompletionRequest(prompt=prompt, structured="label-segment-map"))
    pairs = [(str(k), str(v)) for k, v in resp.items()]
    aligned = align_segments(pairs, field_text)
    if not aligned:
        raise SegmentationRejected("no provider segment could be aligned to the input")

    # Snap aligned spans onto sentence boundaries: a segment never splits a
    # sentence, and every sentence ends up labeled (first claim wins,
    # unclaimed sentences fall back to the default label).
    spans = split_spans(field_text)
    labels: list[str | None] = [None] * len(spans)
    for seg in aligned:
        for i, (a, b) in enumerate(spans):
            overlaps = a < seg.char_span[1] and seg.char_span[0] < b
            if overlaps and labels[i] is None:
                labels[i] = seg.label
    final = [lbl if lbl is not None else lexicon.default_label for lbl in labels]
    return _merge_labeled_spans(final, spans, field_text)


def semantic_segment(field_text: str, gateway=None, lexicon: SegmentLexicon | None = None) -> list[SemanticSegment]:
    """Segment a long field into labeled spans covering the whole text.

    Uses the completion provider when one is configured; the mock provider
    and alignment failures both route to the deterministic lexicon fallback.
    """
    if not field_text:
        raise ValueError("semantic_segment needs non-empty text")
    lexicon = lexicon or default_lexicon()
    use_provider = gateway is not None and not getattr(gateway, "is_mock", False)
    if use_provider:
        try:
            return _provider_segment(field_text, gateway, lexicon)
        except (SegmentationRejected, MalformedStructuredOutput) as exc:
            log.warning("provider segmentation rejected (%s); using lexicon fallback", exc)
    return _lexicon_segment(field_text, lexicon)
