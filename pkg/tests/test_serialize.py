import copy
import json

import pytest

from clark_tool.errors import SchemaError
from clark_tool.serialize import SCHEMA, VERSION, document_to_state, dumps, loads, state_to_document


@pytest.fixture
def document(base_state):
    return state_to_document(base_state, {"eigenvalue": 1e-8})


def test_document_layout(document):
    assert document["meta"]["schema"] == SCHEMA
    assert document["meta"]["version"] == VERSION
    assert document["meta"]["schedule"] == "triangular"
    assert document["meta"]["tolerances"] == {"eigenvalue": 1e-8}
    assert document["atoms"][0]["t"] == {"mid": "0.5", "rad": "0", "bits": 256}
    stage = document["stages"][0]
    assert stage["N"] == 1
    assert stage["epsilon"] is None
    assert "t" not in stage and "mu" not in stage
    assert [z["j"] for z in stage["zeros"]] == [1]
    assert {c["name"] for c in stage["certificates"]} == {"cap_mu", "cap_c", "lambda_range"}


def test_text_round_trip_is_byte_identical(base_state):
    text = dumps(state_to_document(base_state))
    state = loads(text)
    assert dumps(state_to_document(state)) == text
    assert state.N == 1
    assert state.record(1).basis_const == base_state.record(1).basis_const
    assert state.record(1).zeros.lam(1) == base_state.record(1).zeros.lam(1)


@pytest.mark.slow
def test_three_stage_round_trip_is_byte_identical(three_stage_state):
    text = dumps(state_to_document(three_stage_state))
    state = loads(text)
    assert dumps(state_to_document(state)) == text
    assert state.N == 3
    for original, parsed in zip(three_stage_state.records, state.records):
        assert parsed.basis_const == original.basis_const
        assert parsed.precision_bits == original.precision_bits
        assert parsed.schedule_target == original.schedule_target
        assert [c.status for c in parsed.certificates] == [c.status for c in original.certificates]
    assert state.system.atom(3).c == three_stage_state.system.atom(3).c


def test_loaded_state_keeps_precision_policy(base_state):
    state = loads(dumps(state_to_document(base_state)))
    assert state.ctx.bits == base_state.ctx.bits
    assert state.ctx.max_bits == base_state.ctx.max_bits


def test_invalid_json():
    with pytest.raises(SchemaError, match="Invalid JSON"):
        loads("{not json")


def test_foreign_schema(document):
    document["meta"]["schema"] = "something-else"
    with pytest.raises(SchemaError, match="Not a clark-construction-state document"):
        document_to_state(document)


def test_unsupported_version(document):
    document["meta"]["version"] = "0.1"
    with pytest.raises(SchemaError, match="Unsupported version"):
        document_to_state(document)


@pytest.mark.parametrize(
    "path, key",
    [
        (("meta",), "precision"),
        (("atoms", 0), "mu"),
        (("stages", 0), "basis_const"),
        (("stages", 0, "zeros", 0), "lambda"),
        (("stages", 0, "certificates", 0), "status"),
    ],
)
def test_missing_field(document, path, key):
    broken = copy.deepcopy(document)
    node = broken
    for step in path:
        node = node[step]
    del node[key]
    with pytest.raises(SchemaError, match=f"Missing field '{key}'"):
        document_to_state(broken)


def test_malformed_interval(document):
    document["atoms"][0]["c"] = {"mid": "abc", "rad": "0", "bits": 256}
    with pytest.raises(SchemaError, match="Invalid interval record"):
        document_to_state(document)


def test_stage_count_must_match_atoms(document):
    document["stages"] = []
    with pytest.raises(SchemaError, match="one stage entry per atom"):
        document_to_state(document)


def test_dumps_is_indented_json(document):
    text = dumps(document)
    assert text.endswith("}\n")
    assert json.loads(text) == document
