import pytest

from clark_tool.certify import (
    audit_basis_constant,
    completeness_certificate,
    limit_gap,
    structural_checks,
    tail_bound,
    verify_state,
)
from clark_tool.certreal import CertReal
from clark_tool.errors import DomainError, NeedMoreStages
from clark_tool.model import ConstructionState
from clark_tool.serialize import document_to_state, state_to_document


def _tampered(state, mu_factor=1, c_factor=1):
    """A copy of a two-stage state whose second atom was altered."""
    atom = state.system.atom(2)
    first = state.system.prefix(1)
    system = first.with_atom(atom.t, atom.mu * mu_factor, atom.c * c_factor)
    copy = ConstructionState(state.schedule, state.base, state.ctx)
    copy.commit(first, state.record(1))
    copy.commit(system, state.record(2))
    return copy


@pytest.mark.parametrize("epsilon", [0, -1, "0"])
def test_limit_gap_rejects_nonpositive_epsilon(base_state, epsilon):
    with pytest.raises(DomainError, match="epsilon must be positive"):
        limit_gap(base_state.records, 1, epsilon)


def test_limit_gap_needs_more_than_the_base(base_state):
    with pytest.raises(NeedMoreStages) as info:
        limit_gap(base_state.records, 1, CertReal("0.5"))
    assert info.value.required_stage == 2


def test_tail_bound_ranges(base_state):
    with pytest.raises(IndexError):
        tail_bound(base_state.records, 2, 2)
    with pytest.raises(IndexError):
        tail_bound(base_state.records, 1, 0)


def test_tail_bound_of_the_base(base_state):
    # Only the analytic tail 2^-3 / A_1 remains.
    record = base_state.record(1)
    tail = tail_bound(base_state.records, 1, 1)
    assert tail.is_point()
    assert not tail.certainly_lt(CertReal.power_of_two(-3) / record.basis_const)


def test_structural_checks_on_base(base_state):
    checks = structural_checks(base_state.system)
    assert checks["passed"]
    assert checks["a"]["total_mass_upper"] == pytest.approx(0.25)
    assert checks["b"]["t_min"] == pytest.approx(0.5)


def test_audit_basis_constant_is_reproducible(base_state):
    record = base_state.record(1)
    first = audit_basis_constant(base_state.system, record, samples=20, seed=4)
    second = audit_basis_constant(base_state.system, record, samples=20, seed=4)
    assert first == second
    assert first["passed"]
    assert first["violations"] == 0


def test_completeness_index_errors(base_state):
    with pytest.raises(IndexError):
        completeness_certificate(base_state.records, base_state.system, 2, 1)
    with pytest.raises(IndexError):
        completeness_certificate(base_state.records, base_state.system, 1, 2)


def test_verify_base_state(base_state):
    report = verify_state(base_state)
    assert report.passed
    assert report.failures() == []
    assert report.stages[0].cached_mismatches == 0


def test_verify_ignores_cached_certificates(base_state):
    document = state_to_document(base_state)
    for stage in document["stages"]:
        stage["certificates"] = []
    report = verify_state(document_to_state(document))
    assert report.passed
    assert {c.name for c in report.stages[0].certificates} == {"cap_mu", "cap_c", "lambda_range"}


@pytest.mark.slow
def test_verify_two_stages(two_stage_state):
    report = verify_state(two_stage_state)
    assert report.passed, report.failures()
    assert [s.N for s in report.stages] == [1, 2]
    assert all(s.cached_mismatches == 0 for s in report.stages)
    assert report.records[1].basis_const == two_stage_state.record(2).basis_const


@pytest.mark.slow
@pytest.mark.parametrize("factors", [{"mu_factor": 2}, {"c_factor": 2}])
def test_verify_detects_tampering(two_stage_state, factors):
    report = verify_state(_tampered(two_stage_state, **factors))
    assert not report.passed
    assert report.stages[0].passed
    assert any(N == 2 for N, _ in report.failures())


@pytest.mark.slow
def test_limit_gap_on_two_stages(two_stage_state):
    cert = limit_gap(two_stage_state.records, 1, CertReal("0.5"))
    assert cert.passed
    assert (cert.j, cert.k) == (1, 2)
    assert set(cert.components) == {"st1", "tail_j", "tail_k"}
    with pytest.raises(NeedMoreStages) as info:
        limit_gap(two_stage_state.records, 1, CertReal("0.1"))
    # l(5) = 1 is the next partner with 2^-5 < 0.1.
    assert info.value.required_stage == 5


@pytest.mark.slow
def test_completeness_on_two_stages(two_stage_state):
    state = two_stage_state
    for m in (1, 2):
        cert = completeness_certificate(state.records, state.system, 2, m)
        assert len(cert.alpha) == 2
        assert cert.residual.is_point()
        assert cert.to_dict()["m"] == m
    assert completeness_certificate(state.records, state.system, 2, 1).passed
