"""Logic types, three-stage orchestration, and knowledge lookup."""

import hashlib

import pytest

from lcds.errors import EmptySources, NoRuleForType, RuleNotEditable, UnparseableRule
from lcds.gateway import Gateway, ProviderConfig
from lcds.logic import (
    GenerationRule,
    KnowledgeBase,
    KnowledgeEntry,
    FieldPattern,
    LogicPlan,
    LogicStructure,
    LogicType,
    Rulebook,
    apply_knowledge,
    bundled_departments,
    classify_rule_text,
    load_department,
    match_rules,
    orchestrate,
    parse_task,
    plan_structures,
)
from lcds.source_map import DsField
from tests.helpers import ScriptedProvider


def rule(rule_id, ds_field, logic_type, text, editable=True, department="breast_surgery"):
    return GenerationRule(rule_id, ds_field, department, logic_type, text, editable)


class TestParseTask:
    def test_extraction_rule(self):
        r = rule("r1", DsField.PATIENT_INFO, LogicType.EXTRACTION, "提取姓名与住院号，原样抄录。")
        assert parse_task(r) == [LogicType.EXTRACTION]

    def test_two_types_ordered_by_first_occurrence(self):
        r = rule("r2", DsField.TESTS_EXAMINATIONS, LogicType.SUMMARIZATION, "总结病史，再判断化验是否异常。")
        assert parse_task(r) == [LogicType.SUMMARIZATION, LogicType.JUDGMENT]

    def test_english_cues(self):
        r = rule("r3", DsField.TESTS_EXAMINATIONS, LogicType.SUMMARIZATION, "summarize history then flag abnormal tests")
        assert parse_task(r) == [LogicType.SUMMARIZATION, LogicType.JUDGMENT]

    def test_overproduction_clamped_to_four(self):
        provider = ScriptedProvider(
            ['["extraction", "summarization", "judgment", "inference", "knowledge", "extraction"]']
        )
        gw = Gateway(provider, ProviderConfig(backoff_s=0.0))
        r = rule("r4", DsField.COURSE_TREATMENT, LogicType.SUMMARIZATION, "概括经过")
        types = parse_task(r, gw)
        assert len(types) == 4
        assert types == [LogicType.EXTRACTION, LogicType.SUMMARIZATION, LogicType.JUDGMENT, LogicType.INFERENCE]

    def test_reasoning_alias_maps_to_inference(self):
        provider = ScriptedProvider(['["reasoning"]'])
        gw = Gateway(provider, ProviderConfig(backoff_s=0.0))
        r = rule("r5", DsField.COURSE_TREATMENT, LogicType.INFERENCE, "照推理规则办")
        assert parse_task(r, gw) == [LogicType.INFERENCE]

    def test_unparseable_rule(self):
        r = rule("r6", DsField.PATIENT_INFO, LogicType.EXTRACTION, "没有任何线索词的文本")
        with pytest.raises(UnparseableRule):
            parse_task(r)

    def test_mock_gateway_uses_classifier(self, mock_gw):
        r = rule("r7", DsField.PATIENT_INFO, LogicType.EXTRACTION, "提取姓名")
        assert parse_task(r, mock_gw) == [LogicType.EXTRACTION]

    def test_total_over_all_bundled_rules(self):
        # Every bundled rule must classify deterministically to its declared type.
        for department in bundled_departments():
            rulebook, _ = load_department(department)
            for r in rulebook.rules:
                assert classify_rule_text(r.text) == [r.logic_type], (department, r.rule_id)


class TestMatchRules:
    def test_binds_rules_of_each_type(self, breast_surgery):
        rulebook, _ = breast_surgery
        plan = match_rules([LogicType.SUMMARIZATION, LogicType.JUDGMENT], rulebook, DsField.TESTS_EXAMINATIONS)
        assert [s.logic_type for s in plan.structures] == [LogicType.SUMMARIZATION, LogicType.JUDGMENT]
        assert all(s.rules for s in plan.structures)

    def test_physician_edit_applied(self, breast_surgery):
        rulebook, _ = breast_surgery
        edited = "判断化验与检查结果有无异常，需包含眼压检查结果。"
        plan = match_rules(
            [LogicType.JUDGMENT], rulebook, DsField.TESTS_EXAMINATIONS, edits={"ts-judge": edited}
        )
        assert plan.structures[0].rules[0].text == edited

    def test_non_editable_rule_rejects_edit(self, breast_surgery):
        rulebook, _ = breast_surgery
        with pytest.raises(RuleNotEditable):
            match_rules([LogicType.EXTRACTION], rulebook, DsField.PATIENT_INFO, edits={"pi-extract": "x"})

    def test_no_rule_for_type(self, breast_surgery):
        rulebook, _ = breast_surgery
        with pytest.raises(NoRuleForType):
            match_rules([LogicType.KNOWLEDGE], rulebook, DsField.PATIENT_INFO)

    def test_stage_two_keeps_every_structure(self, breast_surgery):
        rulebook, _ = breast_surgery
        structures = plan_structures(rulebook, DsField.MEDICATION_ADVICE)
        plan = match_rules(structures, rulebook, DsField.MEDICATION_ADVICE)
        assert [s.logic_type for s in plan.structures] == structures


class TestLogicPlanInvariants:
    def test_zero_structures_rejected(self):
        with pytest.raises(ValueError):
            LogicPlan(plan_id="p", ds_field=DsField.PATIENT_INFO, structures=[])

    def test_five_structures_rejected(self):
        structs = [LogicStructure(LogicType.EXTRACTION)] * 5
        with pytest.raises(ValueError):
            LogicPlan(plan_id="p", ds_field=DsField.PATIENT_INFO, structures=structs)


class TestOrchestrate:
    def test_instruction_blocks_in_plan_order(self, breast_surgery, record_a):
        rulebook, _ = breast_surgery
        plan = match_rules([LogicType.SUMMARIZATION, LogicType.JUDGMENT], rulebook, DsField.TESTS_EXAMINATIONS)
        sources = [fld for _, fld in record_a.iter_fields() if fld.field_name == "results"]
        prompt = orchestrate(plan, sources)
        assert prompt.index("总结") < prompt.index("判断")
        for sentence in sources[0].sentences:
            assert f"[{sentence.sid}] {sentence.text}" in prompt

    def test_four_structures_render_four_blocks(self, record_a):
        rules = [rule(f"r{i}", DsField.COURSE_TREATMENT, lt, f"规则{i}")
                 for i, lt in enumerate([LogicType.EXTRACTION, LogicType.SUMMARIZATION, LogicType.JUDGMENT, LogicType.INFERENCE])]
        plan = LogicPlan(
            plan_id="p", ds_field=DsField.COURSE_TREATMENT,
            structures=[LogicStructure(r.logic_type, [r]) for r in rules],
        )
        sources = [fld for _, fld in record_a.iter_fields()][:1]
        prompt = orchestrate(plan, sources)
        for i in range(4):
            assert f"规则{i}" in prompt

    def test_deterministic_bytes(self, breast_surgery, record_a):
        rulebook, _ = breast_surgery
        plan = match_rules([LogicType.SUMMARIZATION], rulebook, DsField.TESTS_EXAMINATIONS)
        sources = [fld for _, fld in record_a.iter_fields()][:2]
        h1 = hashlib.sha256(orchestrate(plan, sources).encode()).hexdigest()
        h2 = hashlib.sha256(orchestrate(plan, sources).encode()).hexdigest()
        assert h1 == h2

    def test_empty_sources_rejected_for_non_knowledge_plan(self, breast_surgery):
        rulebook, _ = breast_surgery
        plan = match_rules([LogicType.SUMMARIZATION], rulebook, DsField.TESTS_EXAMINATIONS)
        with pytest.raises(EmptySources):
            orchestrate(plan, [])

    def test_knowledge_plan_tolerates_empty_sources(self, breast_surgery):
        rulebook, _ = breast_surgery
        plan = match_rules([LogicType.KNOWLEDGE], rulebook, DsField.MEDICATION_ADVICE)
        prompt = orchestrate(plan, [], ["建议一"])
        assert "建议一" in prompt


class TestApplyKnowledge:
    def test_matching_entry_returns_recommendation(self, breast_surgery, record_a):
        _, kb = breast_surgery
        hits = apply_knowledge(record_a, kb)
        assert any("乙肝表面抗原阳性" in hit for hit in hits)

    def test_empty_kb(self, record_a):
        assert apply_knowledge(record_a, KnowledgeBase(department="x", entries=[])) == []
        assert apply_knowledge(record_a, None) == []

    def test_two_matches_in_kb_order(self, record_a):
        kb = KnowledgeBase(
            department="x",
            entries=[
                KnowledgeEntry(FieldPattern("results", "乙肝表面抗原阳性"), "先"),
                KnowledgeEntry(FieldPattern("results", "白细胞"), "后"),
            ],
        )
        assert apply_knowledge(record_a, kb) == ["先", "后"]

    def test_no_match(self, record_b, breast_surgery):
        _, kb = breast_surgery
        assert apply_knowledge(record_b, kb) == []


class TestRulebookLoading:
    def test_fifteen_departments_bundled(self):
        departments = bundled_departments()
        assert len(departments) == 15
        assert "breast_surgery" in departments

    def test_all_bundled_rulebooks_load(self):
        for department in bundled_departments():
            rulebook, _ = load_department(department)
            assert rulebook.department == department
            assert rulebook.rules

    def test_duplicate_rule_key_rejected(self):
        r1 = rule("same", DsField.PATIENT_INFO, LogicType.EXTRACTION, "提取")
        with pytest.raises(ValueError):
            Rulebook(department="breast_surgery", rules=[r1, r1])

    def test_load_from_directory_override(self, tmp_path):
        (tmp_path / "demo.rules.json").write_text(
            '{"department": "demo", "rules": [{"rule_id": "r", "ds_field": "patient_info",'
            ' "logic_type": "reasoning", "text": "推断病程", "editable": true}]}',
            encoding="utf-8",
        )
        rulebook, kb = load_department("demo", tmp_path)
        assert rulebook.rules[0].logic_type == LogicType.INFERENCE  # alias canonicalized
        assert kb is None
