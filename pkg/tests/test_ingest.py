"""Document type detection, conversion, and record assembly."""

import json

import pytest

from lcds.errors import ConversionFailure, DuplicateDocId, UnrecognizedFormat
from lcds.ingest import RawDocument, build_record, convert_batch, convert_document, detect_doc_type
from lcds.records import DocType, dump_json, record_from_obj, record_to_obj, validate_record


def raw(doc_id: str, text: str, doc_type: DocType | None = None) -> RawDocument:
    return RawDocument(doc_id=doc_id, payload=text.encode("utf-8"), doc_type=doc_type)


class TestDetectDocType:
    def test_html_markup_means_medical_records(self):
        assert detect_doc_type(raw("d", "<html><body><p>病程</p></body></html>")) == DocType.MEDICAL_RECORDS

    def test_declared_type_passthrough(self):
        assert detect_doc_type(raw("d", "任意内容", DocType.VITAL_SIGNS)) == DocType.VITAL_SIGNS

    def test_xml_root_means_nursing_records(self):
        assert detect_doc_type(raw("d", '<?xml version="1.0"?><nursing><note>x</note></nursing>')) == DocType.NURSING_RECORDS
        assert detect_doc_type(raw("d", "<护理文书><出院小结>好</出院小结></护理文书>")) == DocType.NURSING_RECORDS

    @pytest.mark.parametrize(
        "payload,expected",
        [
            ('{"项目": "血常规", "化验结果": "正常"}', DocType.LABORATORY_TEST),
            ('{"检查名称": "乳腺超声", "检查所见": "低回声"}', DocType.EXAMINATION),
            ('{"长期医嘱": "一级护理", "临时医嘱": "明日出院"}', DocType.MEDICAL_ORDERS),
            ('{"标本": "左乳肿物", "病理诊断": "导管癌"}', DocType.PATHOLOGY_REPORT),
            ('{"入院诊断": "待查", "出院诊断": "导管癌"}', DocType.DIAGNOSIS),
            ('{"体温": "36.5", "脉搏": "80"}', DocType.VITAL_SIGNS),
        ],
    )
    def test_key_signatures(self, payload, expected):
        assert detect_doc_type(raw("d", payload)) == expected

    def test_keyed_text_lines(self):
        assert detect_doc_type(raw("d", "体温: 36.5\n脉搏: 80")) == DocType.VITAL_SIGNS

    def test_unrecognized(self):
        with pytest.raises(UnrecognizedFormat):
            detect_doc_type(raw("d", "没有任何结构的自由文本"))

    def test_deterministic(self):
        payload = '{"项目": "血常规", "化验结果": "正常"}'
        assert detect_doc_type(raw("d", payload)) == detect_doc_type(raw("d", payload))


class TestConvertDocument:
    def test_html_sections_map_to_canonical_fields(self):
        html = "<html><body><h3>主诉</h3><p>发现肿块。</p><h3>现病史</h3><p>三月前起病。</p></body></html>"
        doc = convert_document(raw("adm", html))
        assert [f.field_name for f in doc.fields] == ["chief_complaint", "present_illness"]
        assert doc.fields[0].content == "发现肿块。"

    def test_unknown_sections_preserved(self):
        html = "<html><body><h3>特殊记载</h3><p>内容。</p></body></html>"
        doc = convert_document(raw("adm", html))
        assert [f.field_name for f in doc.fields] == ["特殊记载"]

    def test_empty_structured_document_yields_zero_fields(self, caplog):
        import logging

        with caplog.at_level(logging.WARNING, logger="lcds.ingest"):
            doc = convert_document(raw("empty", "{}", DocType.LABORATORY_TEST))
        assert doc.fields == []
        assert any("zero fields" in message for message in caplog.messages)

    def test_xml_nursing_note_sentence_ids(self):
        xml = "<护理文书><出院小结>恢复良好。予以出院。</出院小结></护理文书>"
        doc = convert_document(raw("n1", xml))
        assert doc.doc_type == DocType.NURSING_RECORDS
        fld = doc.fields[0]
        assert fld.field_name == "discharge_note"
        assert [s.sid for s in fld.sentences] == ["n1#discharge_note#0", "n1#discharge_note#1"]

    def test_structured_metadata_keys_become_title_and_timestamp(self):
        doc = convert_document(raw("lab", '{"标题": "检验报告", "日期": "2024-01-02T08:00:00", "项目": "血常规", "化验结果": "正常"}'))
        assert doc.title == "检验报告"
        assert doc.timestamp == "2024-01-02T08:00:00"
        assert {f.field_name for f in doc.fields} == {"test_items", "results"}

    def test_list_values_render_one_line_per_item(self):
        payload = json.dumps({"用药医嘱": ["他莫昔芬 10mg 口服", "昂丹司琼 8mg 口服"]}, ensure_ascii=False)
        doc = convert_document(raw("orders", payload))
        fld = doc.fields[0]
        assert fld.field_name == "medication_orders"
        assert len(fld.sentences) == 2

    def test_malformed_xml_is_a_conversion_failure(self):
        with pytest.raises(ConversionFailure):
            convert_document(raw("bad", "<?xml version='1.0'?><a><未闭合</a>"))


class TestBuildRecord:
    def test_eight_types_one_doc_each(self):
        docs = [
            raw("m", "<html><body><h3>主诉</h3><p>肿块。</p></body></html>"),
            raw("n", "<护理单><出院小结>良好。</出院小结></护理单>"),
            raw("e", '{"检查名称": "超声", "检查所见": "结节"}'),
            raw("l", '{"项目": "血常规", "化验结果": "正常"}'),
            raw("o", '{"长期医嘱": "护理"}'),
            raw("p", '{"标本": "肿物", "病理诊断": "导管癌"}'),
            raw("d", '{"入院诊断": "待查", "出院诊断": "癌"}'),
            raw("v", '{"体温": "36.5", "脉搏": "80"}'),
        ]
        record = convert_batch(docs, "P1", "A1")
        assert len(record.documents) == 8
        assert {d.doc_type for d in record.documents} == set(DocType)
        assert validate_record(record) == []

    def test_duplicate_doc_ids_rejected(self):
        doc = convert_document(raw("same", '{"体温": "36.5"}'))
        with pytest.raises(DuplicateDocId):
            build_record([doc, doc], "P1", "A1")

    def test_sorted_by_timestamp_with_absent_last(self):
        d1 = convert_document(raw("z", '{"日期": "2024-01-02", "体温": "36.6"}'))
        d2 = convert_document(raw("a", '{"日期": "2024-01-01", "体温": "36.5"}'))
        d3 = convert_document(raw("m", "<html><body><h3>主诉</h3><p>无。</p></body></html>"))  # no timestamp
        record = build_record([d3, d1, d2], "P1", "A1")
        assert [d.doc_id for d in record.documents] == ["a", "z", "m"]

    def test_timestamp_ties_break_by_doc_id(self):
        d1 = convert_document(raw("b", '{"日期": "2024-01-01", "体温": "36.5"}'))
        d2 = convert_document(raw("a", '{"日期": "2024-01-01", "脉搏": "80"}'))
        record = build_record([d1, d2], "P1", "A1")
        assert [d.doc_id for d in record.documents] == ["a", "b"]


class TestRoundTrip:
    def test_fixture_records_round_trip(self, record_a, record_b, record_c):
        for record in (record_a, record_b, record_c):
            assert validate_record(record) == []
            obj = json.loads(dump_json(record_to_obj(record)))
            assert record_from_obj(obj) == record
