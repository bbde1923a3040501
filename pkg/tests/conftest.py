import json
from pathlib import Path

import pytest

from lcds.gateway import Gateway, MockProvider, ProviderConfig
from lcds.ingest import RawDocument, convert_batch
from lcds.logic import load_department
from lcds.source_map import DsField, build_mapping_table

FIXTURES = Path(__file__).parent / "fixtures"


def load_raw_docs(name: str) -> list[RawDocument]:
    return [
        RawDocument(doc_id=path.stem, payload=path.read_bytes())
        for path in sorted((FIXTURES / "raw" / name).iterdir())
    ]


def load_fixture_record(name: str):
    return convert_batch(load_raw_docs(name), patient_id=f"P-{name}", admission_id=name)


def load_reference(name: str) -> dict[DsField, str]:
    obj = json.loads((FIXTURES / "corpus" / f"{name}.reference.json").read_text(encoding="utf-8"))
    return {DsField(k): v for k, v in obj.items()}


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture
def record_a():
    return load_fixture_record("A")


@pytest.fixture
def record_b():
    return load_fixture_record("B")


@pytest.fixture
def record_c():
    return load_fixture_record("C")


@pytest.fixture
def corpus():
    return [(load_fixture_record(name), load_reference(name)) for name in ("A", "B", "C")]


@pytest.fixture
def mapping_table(corpus):
    return build_mapping_table(corpus, "breast_surgery")


@pytest.fixture
def breast_surgery():
    return load_department("breast_surgery")


@pytest.fixture
def mock_gw():
    return Gateway(MockProvider(), ProviderConfig(backoff_s=0.0))
