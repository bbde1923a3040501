"""Scoring: ROUGE-L, provider-judged rubric, and the human scoring sheet.

ROUGE-L tokenizes character-level for CJK text and by whitespace otherwise.
The judge rubric carries four dimensions capped at 40/35/15/10 (summing to
100); the human sheet has four dimensions capped at 30/30/25/15 with an
itemized deduction catalog, and a dimension subtotal is clamped so it never
goes negative.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

from .errors import EmptyReference, EmptyResults, ScoreOutOfRange, UnknownRuleId
from .gateway import CompletionRequest

log = logging.getLogger(__name__)

JUDGE_MAXIMA = {
    "Information Accuracy": 40.0,
    "Medical Completeness": 35.0,
    "Professional Standardization": 15.0,
    "Clinical Practicality": 10.0,
}

HUMAN_MAXIMA = {
    "accuracy": 30.0,
    "completeness": 30.0,
    "standardization": 25.0,
    "utility": 15.0,
}

# Deduction catalog: rule id -> (dimension, canonical points per instance).
# The utility adjustment rule accepts signed points within +/-2.
HUMAN_DEDUCTION_CATALOG: dict[str, tuple[str, float]] = {
    "identity_error": ("accuracy", 3.0),
    "time_point_error": ("accuracy", 3.0),
    "diagnostic_contradiction": ("accuracy", 15.0),
    "diagnosis_omission": ("accuracy", 10.0),
    "history_exam_error": ("accuracy", 3.0),
    "treatment_missing_element": ("completeness", 8.0),
    "missing_exam_category": ("completeness", 5.0),
    "missing_discharge_instruction": ("completeness", 6.0),
    "discharge_condition_discrepancy": ("completeness", 5.0),
    "terminology_error": ("standardization", 3.0),
    "disordered_structure": ("standardization", 8.0),
    "redundant_content": ("standardization", 5.0),
    "vague_recommendation": ("utility", 5.0),
    "missing_risk_warning": ("utility", 8.0),
    "followup_adjustment": ("utility", 2.0),
}


def _has_cjk(text: str) -> bool:
    return any(0x3400 <= ord(ch) <= 0x9FFF or 0xF900 <= ord(ch) <= 0xFAFF for ch in text)


def chars_tokenizer(text: str) -> list[str]:
    return [ch for ch in text if not ch.isspace()]


def words_tokenizer(text: str) -> list[str]:
    return text.split()


def auto_tokenizer(text: str) -> list[str]:
    """Character tokens when the text contains CJK, whitespace words otherwise."""
    return chars_tokenizer(text) if _has_cjk(text) else words_tokenizer(text)


TOKENIZERS = {"auto": auto_tokenizer, "char": chars_tokenizer, "word": words_tokenizer}


@dataclass
class RougeScore:
    precision: float
    recall: float
    f1: float
    lcs_length: int
    tokenizer: str = "auto"


def lcs_length(a: list, b: list) -> int:
    """Longest common subsequence length by dynamic programming."""
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0] * (len(b) + 1)
        for j, y in enumerate(b, start=1):
            cur[j] = prev[j - 1] + 1 if x == y else max(prev[j], cur[j - 1])
        prev = cur
    return prev[len(b)]


def rouge_l(generated: str, reference: str, tokenizer: str = "auto") -> RougeScore:
    """LCS-based precision/recall/F1 between generated and reference text."""
    if not reference.strip():
        raise EmptyReference("rouge_l needs a non-empty reference")
    tok = TOKENIZERS[tokenizer]
    gen_tokens = tok(generated)
    ref_tokens = tok(reference)
    lcs = lcs_length(gen_tokens, ref_tokens)
    recall = lcs / len(ref_tokens) if ref_tokens else 0.0
    precision = lcs / len(gen_tokens) if gen_tokens else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return RougeScore(precision=precision, recall=recall, f1=f1, lcs_length=lcs, tokenizer=tokenizer)


@dataclass
class JudgeBreakdown:
    info_accuracy: float
    completeness: float
    standardization: float
    practicality: float
    total: float
    total_mismatch: bool = False  # provider total disagreed with its own breakdown

    def __post_init__(self):
        dims = zip(JUDGE_MAXIMA.items(), (self.info_accuracy, self.completeness, self.standardization, self.practicality))
        for (name, cap), value in dims:
            if not 0.0 <= value <= cap:
                raise ScoreOutOfRange(f"{name} = {value} outside [0, {cap}]")
        if not 0.0 <= self.total <= 100.0:
            raise ScoreOutOfRange(f"total = {self.total} outside [0, 100]")


JUDGE_PROMPT_TEMPLATE = """你的任务是对照医生撰写的参考版本，评估 AI 生成的出院小结质量。

评分范围：0-100 分，按以下四个维度打分：
1. Information Accuracy（信息准确性，满分 40）：患者身份、关键时间点、入院情况与诊断名称是否与参考一致。
2. Medical Completeness（医学完整性，满分 35）：核心段落与关键数据（化验、影像、手术、用药、随访）是否齐全且无数值错误。
3. Professional Standardization（专业规范性，满分 15）：术语是否规范、叙述是否按诊疗时间顺序、有无冗余。
4. Clinical Practicality（临床实用性，满分 10）：出院指导是否可执行、风险提示是否完整。

输出格式（仅输出 JSON）：
{{
  "score": [总分],
  "breakdown": {{
    "Information Accuracy": [分数],
    "Medical Completeness": [分数],
    "Professional Standardization": [分数],
    "Clinical Practicality": [分数]
  }}
}}

[参考版本]
{reference}

[AI 生成版本]
{generated}
"""


def judge_score(generated: str, reference: str, gateway) -> JudgeBreakdown:
    """Ask the configured judge model to fill the rubric and validate the result.

    When the reported total disagrees with the breakdown sum, the total is
    recomputed from the breakdown and the mismatch flagged.
    """
    prompt = JUDGE_PROMPT_TEMPLATE.format(reference=reference, generated=generated)
    parsed = gateway.complete_structured(CompletionRequest(prompt=prompt, structured="judge-breakdown"))
    breakdown = parsed["breakdown"]
    values = []
    for name in JUDGE_MAXIMA:
        if name not in breakdown:
            raise ScoreOutOfRange(f"judge breakdown is missing {name!r}")
        values.append(float(breakdown[name]))
    reported_total = float(parsed["score"])
    computed_total = sum(values)
    mismatch = abs(reported_total - computed_total) > 1e-9
    if mismatch:
        log.warning("judge total %.2f != breakdown sum %.2f; using the sum", reported_total, computed_total)
    return JudgeBreakdown(
        info_accuracy=values[0],
        completeness=values[1],
        standardization=values[2],
        practicality=values[3],
        total=computed_total,
        total_mismatch=mismatch,
    )


@dataclass
class DeductionItem:
    dimension: str
    rule_id: str
    points: float


@dataclass
class HumanScoreSheet:
    items: list[DeductionItem] = field(default_factory=list)
    subtotals: dict[str, float] = field(default_factory=dict)
    total: float = 0.0


def apply_human_deductions(items: list[DeductionItem]) -> HumanScoreSheet:
    """Compute the human sheet: clamped per-dimension subtotals, summed total.

    Every rule id must come from the catalog and sit in its catalog
    dimension. Subtotals are clamped to [0, dimension max], so no deduction
    multiset can drive a dimension negative.
    """
    deducted: dict[str, float] = {dim: 0.0 for dim in HUMAN_MAXIMA}
    for item in items:
        if item.rule_id not in HUMAN_DEDUCTION_CATALOG:
            raise UnknownRuleId(f"unknown deduction rule {item.rule_id!r}")
        dimension, _ = HUMAN_DEDUCTION_CATALOG[item.rule_id]
        if item.dimension != dimension:
            raise UnknownRuleId(f"rule {item.rule_id!r} belongs to {dimension!r}, not {item.dimension!r}")
        deducted[dimension] += item.points
    subtotals = {
        dim: min(cap, max(0.0, cap - deducted[dim])) for dim, cap in HUMAN_MAXIMA.items()
    }
    return HumanScoreSheet(items=list(items), subtotals=subtotals, total=sum(subtotals.values()))


@dataclass
class RecordEval:
    record_id: str
    rouge: RougeScore | None = None
    judge: JudgeBreakdown | None = None
    human: HumanScoreSheet | None = None


@dataclass
class EvalReport:
    method: str
    per_record: list[RecordEval] = field(default_factory=list)
    means: dict[str, float | None] = field(default_factory=dict)


def aggregate_report(method: str, results: list[RecordEval]) -> EvalReport:
    """Arithmetic means per metric over the records that carry it."""
    if not results:
        raise EmptyResults("aggregate_report needs at least one record result")

    def mean(values: list[float]) -> float | None:
        return sum(values) / len(values) if values else None

    means = {
        "rouge_l_f1": mean([r.rouge.f1 for r in results if r.rouge is not None]),
        "judge_total": mean([r.judge.total for r in results if r.judge is not None]),
        "human_total": mean([r.human.total for r in results if r.human is not None]),
    }
    return EvalReport(method=method, per_record=results, means=means)


def render_table(reports: list[EvalReport]) -> str:
    """Fixed-width comparison table: Method | ROUGE-L | LLM-as-a-Judge | Human."""
    def fmt(value: float | None, scale: float = 1.0) -> str:
        return f"{value * scale:.2f}" if value is not None else "-"

    header = f"{'Method':<24} {'ROUGE-L':>10} {'LLM-as-a-Judge':>16} {'Human':>8}"
    rows = [header, "-" * len(header)]
    for report in reports:
        rows.append(
            f"{report.method:<24} {fmt(report.means['rouge_l_f1'], 100.0):>10} "
            f"{fmt(report.means['judge_total']):>16} {fmt(report.means['human_total']):>8}"
        )
    return "\n".join(rows)


def report_to_obj(report: EvalReport) -> dict:
    return {
        "method": report.method,
        "means": report.means,
        "per_record": [
            {
                "record_id": r.record_id,
                "rouge_l": None
                if r.rouge is None
                else {
                    "precision": r.rouge.precision,
                    "recall": r.rouge.recall,
                    "f1": r.rouge.f1,
                    "lcs_length": r.rouge.lcs_length,
                    "tokenizer": r.rouge.tokenizer,
                },
                "judge": None
                if r.judge is None
                else {
                    "total": r.judge.total,
                    "info_accuracy": r.judge.info_accuracy,
                    "completeness": r.judge.completeness,
                    "standardization": r.judge.standardization,
                    "practicality": r.judge.practicality,
                    "total_mismatch": r.judge.total_mismatch,
                },
                "human": None
                if r.human is None
                else {"total": r.human.total, "subtotals": r.human.subtotals},
            }
            for r in report.per_record
        ],
    }
