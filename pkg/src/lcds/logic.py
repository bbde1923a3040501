"""Five logic types, three-stage prompt orchestration, and the knowledge base.

Stage 1 (task parsing) turns a field's rules into 1-4 logic structures,
stage 2 (rule matching) binds the department's detailed rules to each
structure and accepts physician edits, stage 3 (orchestration) renders one
deterministic composite prompt with the source content labeled by sentence
id. Stages 1 and 2 work offline through a keyword classifier so the whole
engine is testable without a provider.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from pathlib import Path

from .errors import EmptySources, MalformedStructuredOutput, NoRuleForType, RuleNotEditable, UnparseableRule
from .records import RecordField, UnifiedRecord
from .source_map import DsField

log = logging.getLogger(__name__)

MAX_STRUCTURES = 4


class LogicType(str, Enum):
    EXTRACTION = "extraction"
    SUMMARIZATION = "summarization"
    JUDGMENT = "judgment"
    INFERENCE = "inference"
    KNOWLEDGE = "knowledge"

    @classmethod
    def from_name(cls, name: str) -> "LogicType":
        name = name.strip().lower()
        if name == "reasoning":  # accepted alias
            return cls.INFERENCE
        return cls(name)


_TYPE_LABELS = {
    LogicType.EXTRACTION: "提取",
    LogicType.SUMMARIZATION: "总结",
    LogicType.JUDGMENT: "判断",
    LogicType.INFERENCE: "推理",
    LogicType.KNOWLEDGE: "知识",
}

# Ordered cue table for the offline classifier; matched by first occurrence.
_CUES: list[tuple[LogicType, tuple[str, ...]]] = [
    (LogicType.EXTRACTION, ("提取", "抄录", "原样", "extract", "verbatim", "copy")),
    (LogicType.SUMMARIZATION, ("总结", "概括", "归纳", "简述", "summar", "overview")),
    (LogicType.JUDGMENT, ("判断", "判定", "评估", "是否", "异常", "judge", "flag", "assess", "abnormal")),
    (LogicType.INFERENCE, ("推断", "推理", "推测", "进展", "infer", "reason", "deduce")),
    (LogicType.KNOWLEDGE, ("知识库", "指南", "建议", "随访方案", "knowledge", "guideline", "recommend", "advice")),
]


@dataclass
class GenerationRule:
    rule_id: str
    ds_field: DsField
    department: str
    logic_type: LogicType
    text: str
    editable: bool = True

    def __post_init__(self):
        if not self.text:
            raise ValueError(f"rule {self.rule_id!r} has empty text")


@dataclass
class Rulebook:
    department: str
    rules: list[GenerationRule] = field(default_factory=list)

    def __post_init__(self):
        seen = set()
        for r in self.rules:
            key = (r.department, r.ds_field, r.rule_id)
            if key in seen:
                raise ValueError(f"duplicate rule key {key}")
            seen.add(key)

    def rules_for(self, ds_field: DsField, logic_type: LogicType | None = None) -> list[GenerationRule]:
        return [
            r
            for r in self.rules
            if r.ds_field == ds_field and (logic_type is None or r.logic_type == logic_type)
        ]

    @classmethod
    def from_obj(cls, obj: dict) -> "Rulebook":
        department = obj["department"]
        return cls(
            department=department,
            rules=[
                GenerationRule(
                    rule_id=r["rule_id"],
                    ds_field=DsField(r["ds_field"]),
                    department=department,
                    logic_type=LogicType.from_name(r["logic_type"]),
                    text=r["text"],
                    editable=bool(r.get("editable", True)),
                )
                for r in obj["rules"]
            ],
        )

    @classmethod
    def load(cls, path: str | Path) -> "Rulebook":
        return cls.from_obj(json.loads(Path(path).read_text(encoding="utf-8")))


@dataclass
class FieldPattern:
    field_name: str
    contains: str

    def __post_init__(self):
        if not self.field_name or not self.contains:
            raise ValueError("knowledge patterns need both field_name and contains")


@dataclass
class KnowledgeEntry:
    pattern: FieldPattern
    recommendation: str


@dataclass
class KnowledgeBase:
    department: str
    entries: list[KnowledgeEntry] = field(default_factory=list)

    @classmethod
    def from_obj(cls, obj: dict) -> "KnowledgeBase":
        return cls(
            department=obj["department"],
            entries=[
                KnowledgeEntry(
                    pattern=FieldPattern(e["pattern"]["field_name"], e["pattern"]["contains"]),
                    recommendation=e["recommendation"],
                )
                for e in obj["entries"]
            ],
        )

    @classmethod
    def load(cls, path: str | Path) -> "KnowledgeBase":
        return cls.from_obj(json.loads(Path(path).read_text(encoding="utf-8")))


@dataclass
class LogicStructure:
    logic_type: LogicType
    rules: list[GenerationRule] = field(default_factory=list)
    bindings: dict[str, str] = field(default_factory=dict)


@dataclass
class LogicPlan:
    plan_id: str
    ds_field: DsField
    structures: list[LogicStructure] = field(default_factory=list)
    rendered_prompt: str | None = None

    def __post_init__(self):
        if not 1 <= len(self.structures) <= MAX_STRUCTURES:
            raise ValueError(f"a plan needs 1-{MAX_STRUCTURES} structures, got {len(self.structures)}")

    def has_type(self, logic_type: LogicType) -> bool:
        return any(s.logic_type == logic_type for s in self.structures)


def classify_rule_text(text: str) -> list[LogicType]:
    """Keyword classifier: logic types ordered by first cue occurrence in the text."""
    lowered = text.lower()
    hits: list[tuple[int, LogicType]] = []
    for logic_type, cues in _CUES:
        positions = [lowered.find(cue) for cue in cues]
        positions = [p for p in positions if p >= 0]
        if positions:
            hits.append((min(positions), logic_type))
    hits.sort(key=lambda pair: pair[0])
    return [lt for _, lt in hits]


def parse_task(rule: GenerationRule, gateway=None) -> list[LogicType]:
    """Stage 1: map one rule to 1-4 logic types.

    The provider is asked when available; the mock (or no gateway) uses the
    keyword classifier. Overproduction is clamped to 4 with a warning.
    """
    types: list[LogicType] = []
    use_provider = gateway is not None and not getattr(gateway, "is_mock", False)
    if use_provider:
        from .gateway import CompletionRequest

        prompt = (
            "将下面的生成规则归类为 1-4 个逻辑类型（extraction, summarization, "
            "judgment, inference, knowledge），按出现顺序输出标识符列表。\n\n规则：" + rule.text
        )
        try:
            names = gateway.complete_structured(CompletionRequest(prompt=prompt, structured="identifier-list"))
            for name in names:
                try:
                    lt = LogicType.from_name(name)
                except ValueError:
                    continue
                if lt not in types:
                    types.append(lt)
        except MalformedStructuredOutput:
            log.warning("provider task parsing failed for rule %s; using classifier", rule.rule_id)
    if not types:
        types = classify_rule_text(rule.text)
    if not types:
        raise UnparseableRule(f"rule {rule.rule_id!r} yields no logic type")
    if len(types) > MAX_STRUCTURES:
        log.warning("rule %s produced %d logic types; keeping the first %d", rule.rule_id, len(types), MAX_STRUCTURES)
        types = types[:MAX_STRUCTURES]
    return types


def plan_structures(rulebook: Rulebook, ds_field: DsField, gateway=None) -> list[LogicType]:
    """Ordered union of parsed types over a field's rules, clamped to 4."""
    types: list[LogicType] = []
    for rule in rulebook.rules_for(ds_field):
        for lt in parse_task(rule, gateway):
            if lt not in types:
                types.append(lt)
    return types[:MAX_STRUCTURES]


def match_rules(
    structures: list[LogicType],
    rulebook: Rulebook,
    ds_field: DsField,
    edits: dict[str, str] | None = None,
    plan_id: str | None = None,
) -> LogicPlan:
    """Stage 2: bind the department's detailed rules to every structure.

    edits maps rule_id to replacement text; only editable rules accept one.
    """
    if not structures:
        raise ValueError("match_rules needs at least one structure")
    edits = dict(edits or {})
    plan_structs: list[LogicStructure] = []
    for lt in structures:
        matched = rulebook.rules_for(ds_field, lt)
        if not matched:
            raise NoRuleForType(f"no {lt.value} rule for {ds_field.value} in {rulebook.department}")
        bound: list[GenerationRule] = []
        for r in matched:
            if r.rule_id in edits:
                if not r.editable:
                    raise RuleNotEditable(f"rule {r.rule_id!r} is not editable")
                r = GenerationRule(r.rule_id, r.ds_field, r.department, r.logic_type, edits.pop(r.rule_id), r.editable)
            bound.append(r)
        plan_structs.append(LogicStructure(logic_type=lt, rules=bound))
    return LogicPlan(
        plan_id=plan_id or f"{rulebook.department}:{ds_field.value}",
        ds_field=ds_field,
        structures=plan_structs,
    )


def orchestrate(plan: LogicPlan, sources: list[RecordField], knowledge_hits: list[str] | None = None) -> str:
    """Stage 3: render the composite prompt — preamble, instruction blocks in
    plan order, source sentences labeled by id, output directive."""
    knowledge_hits = knowledge_hits or []
    has_content = any(f.content.strip() for f in sources)
    if not has_content and not plan.has_type(LogicType.KNOWLEDGE):
        raise EmptySources(f"plan {plan.plan_id} has no source content and no knowledge structure")

    lines: list[str] = [
        "你是出院小结撰写助手，只能依据给出的原始病历内容完成指定字段，不得编造。",
        "",
        f"[目标字段] {plan.ds_field.value}",
        "",
        "[生成要求]",
    ]
    n = 0
    for structure in plan.structures:
        for rule in structure.rules:
            n += 1
            lines.append(f"{n}. ({_TYPE_LABELS[structure.logic_type]}) {rule.text}")
    lines.append("")
    lines.append("[原始内容]")
    for fld in sources:
        for sentence in fld.sentences:
            lines.append(f"[{sentence.sid}] {sentence.text}")
    if knowledge_hits:
        lines.append("")
        lines.append("[参考知识]")
        for hit in knowledge_hits:
            lines.append(f"- {hit}")
    lines.append("")
    lines.append("[输出格式] 仅输出该字段的正文文本，不要输出解释或推理过程。")
    return "\n".join(lines)


def apply_knowledge(record: UnifiedRecord, kb: KnowledgeBase | None) -> list[str]:
    """Recommendations whose condition pattern matches a record field, in kb order."""
    if kb is None:
        return []
    hits: list[str] = []
    for entry in kb.entries:
        for _, fld in record.iter_fields():
            if fld.field_name == entry.pattern.field_name and entry.pattern.contains in fld.content:
                hits.append(entry.recommendation)
                break
    return hits


def bundled_departments() -> list[str]:
    """Department names with a bundled rulebook."""
    names = []
    for item in resources.files("lcds").joinpath("data/departments").iterdir():
        if item.name.endswith(".rules.json"):
            names.append(item.name[: -len(".rules.json")])
    return sorted(names)


def load_department(
    department: str, rules_dir: str | Path | None = None
) -> tuple[Rulebook, KnowledgeBase | None]:
    """Load a department's rulebook and optional knowledge base.

    rules_dir overrides the bundled data; files are <department>.rules.json
    and <department>.kb.json.
    """
    if rules_dir is not None:
        rules_path = Path(rules_dir) / f"{department}.rules.json"
        kb_path = Path(rules_dir) / f"{department}.kb.json"
        rulebook = Rulebook.load(rules_path)
        kb = KnowledgeBase.load(kb_path) if kb_path.exists() else None
        return rulebook, kb
    pkg = resources.files("lcds").joinpath("data/departments")
    rulebook = Rulebook.from_obj(json.loads(pkg.joinpath(f"{department}.rules.json").read_text(encoding="utf-8")))
    kb = None
    try:
        kb = KnowledgeBase.from_obj(json.loads(pkg.joinpath(f"{department}.kb.json").read_text(encoding="utf-8")))
    except FileNotFoundError:
        pass
    return rulebook, kb
