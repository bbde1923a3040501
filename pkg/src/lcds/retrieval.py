"""BM25 scoring and self-normalized similarity over record fields.

Tokenization needs no external segmenter: CJK runs are emitted as unigrams
followed by bigrams, Latin/digit runs are lowercased words. Raw BM25 scores
are unbounded, so similarity is defined as the ratio of a document's score
to the score the query would give itself if it were a document with the
same corpus statistics — identical text scores exactly 1.0 and everything
lands in [0, 1].
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field

from .errors import DuplicateId, UnknownDoc

DEFAULT_K1 = 1.5
DEFAULT_B = 0.75

_CJK_RANGES = (
    (0x3400, 0x4DBF),
    (0x4E00, 0x9FFF),
    (0xF900, 0xFAFF),
)


def _is_cjk(ch: str) -> bool:
    cp = ord(ch)
    return any(lo <= cp <= hi for lo, hi in _CJK_RANGES)


def tokenize(text: str) -> list[str]:
    """CJK runs as unigrams then bigrams; Latin/digit runs as lowercased words."""
    tokens: list[str] = []
    cjk_run: list[str] = []
    word: list[str] = []

    def flush_cjk() -> None:
        if cjk_run:
            tokens.extend(cjk_run)
            tokens.extend(a + b for a, b in zip(cjk_run, cjk_run[1:]))
            cjk_run.clear()

    def flush_word() -> None:
        if word:
            tokens.append("".join(word))
            word.clear()

    for ch in text:
        if _is_cjk(ch):
            flush_word()
            cjk_run.append(ch)
        elif ch.isalnum():
            flush_cjk()
            word.append(ch.lower())
        else:
            flush_cjk()
            flush_word()
    flush_cjk()
    flush_word()
    return tokens


@dataclass
class Bm25Index:
    k1: float
    b: float
    doc_ids: list[str] = field(default_factory=list)
    tf: dict[str, Counter] = field(default_factory=dict)
    doc_len: dict[str, int] = field(default_factory=dict)
    df: Counter = field(default_factory=Counter)
    avgdl: float = 0.0

    @property
    def size(self) -> int:
        return len(self.doc_ids)

    def idf(self, term: str) -> float:
        d = self.df.get(term, 0)
        return math.log((self.size - d + 0.5) / (d + 0.5) + 1.0)


def build_index(docs: list[tuple[str, str]], k1: float = DEFAULT_K1, b: float = DEFAULT_B) -> Bm25Index:
    """Index (id, text) pairs; ids must be distinct."""
    index = Bm25Index(k1=k1, b=b)
    for doc_id, text in docs:
        if doc_id in index.tf:
            raise DuplicateId(f"doc id {doc_id!r} indexed twice")
        tokens = tokenize(text)
        index.doc_ids.append(doc_id)
        index.tf[doc_id] = Counter(tokens)
        index.doc_len[doc_id] = len(tokens)
        for term in set(tokens):
            index.df[term] += 1
    if index.doc_ids:
        index.avgdl = sum(index.doc_len.values()) / len(index.doc_ids)
    return index


def _score(index: Bm25Index, query_tokens: list[str], tf: Counter, length: int) -> float:
    """Shared scoring loop so raw and self scores see identical float ops."""
    if index.avgdl <= 0:
        return 0.0
    norm = index.k1 * (1.0 - index.b + index.b * length / index.avgdl)
    total = 0.0
    for term in query_tokens:
        f = tf.get(term, 0)
        if f == 0:
            continue
        total += index.idf(term) * (f * (index.k1 + 1.0)) / (f + norm)
    return total


def raw_score(index: Bm25Index, query_tokens: list[str], doc_id: str) -> float:
    """Okapi BM25 score of one indexed document against the query tokens."""
    if doc_id not in index.tf:
        raise UnknownDoc(f"doc id {doc_id!r} not indexed")
    return _score(index, query_tokens, index.tf[doc_id], index.doc_len[doc_id])


def raw_score_self(index: Bm25Index, query_tokens: list[str]) -> float:
    """Score the query against itself as a document under the index's statistics."""
    return _score(index, query_tokens, Counter(query_tokens), len(query_tokens))


def normalized_score(index: Bm25Index, query_tokens: list[str], doc_id: str) -> float:
    """raw_score / self-score, clamped to [0, 1]; 0.0 when the query carries no signal."""
    self_score = raw_score_self(index, query_tokens)
    if self_score <= 0.0:
        return 0.0
    value = raw_score(index, query_tokens, doc_id) / self_score
    return min(1.0, max(0.0, value))


def rank_fields(
    index: Bm25Index,
    query_tokens: list[str],
    candidate_ids: list[str],
    threshold: float,
) -> list[tuple[str, float]]:
    """Candidates scoring above threshold, best first, ties broken by id."""
    if not 0.0 <= threshold <= 1.0:
        raise ValueError(f"threshold must be in [0,1], got {threshold}")
    scored = [(cid, normalized_score(index, query_tokens, cid)) for cid in candidate_ids]
    kept = [(cid, s) for cid, s in scored if s > threshold]
    kept.sort(key=lambda pair: (-pair[1], pair[0]))
    return kept
