import math
from dataclasses import replace

import numpy as np
import pytest

from clark_tool.certreal import CertComplex, CertReal, PrecisionContext
from clark_tool.clark import ModelVector, eigenvector, norm, norm_squared
from clark_tool.diskop import (
    bracket_below,
    build_bundle,
    build_operator,
    cayley_point,
    disk_clark_mass,
    eigen_coordinates,
    grivaux_checklist,
    kernel_phase,
    quadrature_inner_product,
    rank_one_scalar,
    spectral_check,
    theta_at_origin,
    transported_value,
)
from clark_tool.errors import DomainError
from clark_tool.herglotz import solve_level_set


@pytest.fixture
def bundle(three_atoms, three_zeros):
    return build_bundle(three_atoms, three_zeros, PrecisionContext(bits=256))


def test_cayley_point_is_unimodular():
    tau = cayley_point(CertReal("0.3"))
    assert (tau.abs_squared() - 1).contains_zero()
    one = cayley_point(CertReal(0))
    assert one.re.contains(-1) and one.im.contains(0)


def test_disk_clark_mass():
    sigma = disk_clark_mass(CertReal(1), CertReal("0.25"))
    assert sigma.contains(CertReal("0.25"))
    with pytest.raises(DomainError):
        disk_clark_mass(CertReal(1), CertReal(0))


def test_kernel_phase_is_unimodular():
    assert (kernel_phase(CertReal("0.7")).abs_squared() - 1).contains_zero()


def test_beta_equals_inverse_bracket(three_atoms):
    beta = rank_one_scalar(three_atoms)
    assert (beta * bracket_below(three_atoms) - 1).contains_zero()


def test_quadrature_agrees_with_closed_form(single_atom):
    ctx = PrecisionContext(bits=96)
    closed = rank_one_scalar(single_atom, ctx, "closed_form")
    quad = rank_one_scalar(single_atom, ctx, "quadrature")
    assert complex(quad) == pytest.approx(complex(closed), abs=1e-10)


def test_quadrature_inner_product_is_phi_against_theta(single_atom):
    ctx = PrecisionContext(bits=96)
    inner = quadrature_inner_product(single_atom, ctx)
    # <phi, Theta> = (conj Theta(0) - 1) H(-i).
    expected = (theta_at_origin(single_atom).conj() - 1) * bracket_below(single_atom)
    assert complex(inner) == pytest.approx(complex(expected), abs=1e-10)


def test_unknown_method_is_rejected(single_atom):
    with pytest.raises(ValueError, match="method"):
        rank_one_scalar(single_atom, method="simpson")


def test_clark_unitary_is_diagonal(three_atoms):
    U = build_operator(three_atoms, "one_minus_theta")
    for i, row in enumerate(U):
        for j, x in enumerate(row):
            if i != j:
                assert x.contains_zero()
    assert U[1][1].overlaps(cayley_point(three_atoms.atom(2).t))


def test_one_by_one_operator(single_atom, ctx):
    zeros = solve_level_set(single_atom, ctx.real(0), ctx)
    T = build_operator(single_atom, "phi", ctx)
    assert T[0][0].overlaps(cayley_point(zeros.lam(1)))


def test_eigenvector_equation_holds(bundle):
    T = bundle.T_matrix
    for vec, lam in zip(bundle.eigvecs, bundle.Lambda):
        for m, row in enumerate(T):
            tv = sum((a * b for a, b in zip(row, vec)), CertComplex(0, 0))
            assert (tv - lam * vec[m]).contains_zero()


def test_eigen_coordinates_have_clark_norm(three_atoms, three_zeros):
    coords = eigen_coordinates(three_atoms, three_zeros, 1)
    total = sum((x.abs_squared() for x in coords), CertReal(0))
    assert (total - norm_squared(eigenvector(three_atoms, three_zeros, 1))).contains_zero()


def test_transported_value_is_finite(three_atoms, three_zeros):
    v = eigenvector(three_atoms, three_zeros, 1)
    value = transported_value(v, CertComplex(0.1, 0.2))
    assert value.is_finite()
    assert not value.contains_zero()


@pytest.mark.parametrize("seed", [0, 1])
def test_cayley_transport_preserves_norm(three_atoms, seed):
    rng = np.random.default_rng(seed)
    coeffs = rng.standard_normal(3) + 1j * rng.standard_normal(3)
    v = ModelVector(three_atoms, tuple(CertComplex(a.real, a.imag) for a in coeffs))
    # Trapezoid rule on the circle, nodes shifted off w = 1.
    nodes = 1024
    total = 0.0
    for k in range(nodes):
        angle = 2 * math.pi * (k + 0.5) / nodes
        value = transported_value(v, CertComplex(math.cos(angle), math.sin(angle)))
        total += abs(complex(value)) ** 2
    disk_norm = math.sqrt(total / nodes)
    assert disk_norm == pytest.approx(float(norm(v)), rel=1e-8)


def test_spectral_check_passes(bundle):
    report = spectral_check(bundle)
    assert report.passed, report.failures
    assert report.unitarity_defect <= 1e-10
    assert report.rank_one_ratio <= 1e-10
    assert report.max_eigen_error <= 1e-8
    assert report.max_unimodular_defect <= 1e-10
    assert len(report.singular_values) == 3
    assert bundle.diagnostics["passed"]


def test_spectral_check_reports_failures(bundle):
    report = spectral_check(bundle, {"eigenvalue": -1.0})
    assert not report.passed
    assert "eigenvalue_match" in report.failures


def test_checklist_items(three_atoms, three_zeros, bundle):
    checklist = grivaux_checklist(three_atoms, three_zeros, bundle)
    assert checklist["i"]["passed"]
    assert checklist["ii"]["passed"]
    assert not checklist["iii"]["vacuous"]
    assert {p["j"] for p in checklist["iii"]["partners"]} == {1, 2, 3}
    assert "not a proof" in checklist["note"]


def test_checklist_is_vacuous_for_one_atom(single_atom, ctx):
    zeros = solve_level_set(single_atom, ctx.real(0), ctx)
    bundle = build_bundle(single_atom, zeros, ctx)
    assert grivaux_checklist(single_atom, zeros, bundle)["iii"]["vacuous"]



def test_checklist_unimodularity_rests_on_enclosures(three_atoms, three_zeros, bundle):
    first = bundle.Lambda[0]
    blurred = CertComplex(first.re + CertReal("-1e-6", "1e-6"), first.im)
    widened = replace(bundle, Lambda=[blurred] + bundle.Lambda[1:])
    item = grivaux_checklist(three_atoms, three_zeros, widened)["i"]
    assert item["passed"]
    assert item["max_defect_width"] > 1e-10
    scaled = replace(bundle, Lambda=[first * 2] + bundle.Lambda[1:])
    item = grivaux_checklist(three_atoms, three_zeros, scaled)["i"]
    assert not item["unimodular"]
    assert not item["passed"]
