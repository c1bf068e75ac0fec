import math

import numpy as np
import pytest
from scipy import integrate

from clark_tool.certreal import CertComplex, CertReal
from clark_tool.clark import (
    ModelVector,
    basis_constant,
    coordinates,
    decomposition_at,
    eigenvector,
    eigvec_coeffs,
    ell1_ratio,
    frame_matrix,
    frame_sigma_min,
    h_term_norm,
    norm,
    norm_squared,
    pairwise_gap,
    perturbation_norm_bound,
    stage_difference_bound,
    synthesize,
    unimodularity_defect,
)
from clark_tool.errors import NotAZero
from clark_tool.herglotz import ClarkSystem, match_zeros, solve_level_set


def _float_f(ts, mus, coeffs, x):
    """(1 - theta(x)) sum a_n mu_n / (x - t_n) in plain complex floats."""
    s = sum(m / (t - x) for t, m in zip(ts, mus))
    one_minus_theta = 2j / (s + 1j)
    return one_minus_theta * sum(a * m / (x - t) for a, t, m in zip(coeffs, ts, mus))


def _quad_squared(func, points):
    """Integral of |func|^2 over the line; `points` are breakpoints inside (0, 1)."""
    inner = sorted({float(p) for p in points if 0.0 < p < 1.0})
    total = 0.0
    for lo, hi in [(-np.inf, 0.0), (0.0, 1.0), (1.0, np.inf)]:
        value, _ = integrate.quad(
            lambda x: abs(func(x)) ** 2,
            lo,
            hi,
            points=inner if lo == 0.0 and inner else None,
            limit=2000,
            epsabs=1e-14,
            epsrel=1e-12,
        )
        total += value
    return total


def _quad_norm_squared(ts, mus, coeffs):
    return _quad_squared(lambda x: _float_f(ts, mus, coeffs, x), ts)


def _check_parseval(seed, systems):
    rng = np.random.default_rng(seed)
    checked = 0
    while checked < systems:
        N = int(rng.integers(1, 5))
        ts = np.sort(rng.uniform(0.05, 0.95, N))
        if N > 1 and np.min(np.diff(ts)) < 0.05:
            continue
        mus = rng.uniform(0.05, 0.5, N)
        cs = rng.uniform(0.05, 0.5, N)
        coeffs = rng.standard_normal(N) + 1j * rng.standard_normal(N)
        system = ClarkSystem.from_values(list(zip(ts, mus, cs)), bits=128)
        v = ModelVector(system, tuple(CertComplex(a.real, a.imag, bits=128) for a in coeffs))
        expected = _quad_norm_squared(ts, mus, coeffs)
        assert float(norm_squared(v)) == pytest.approx(expected, rel=1e-8)
        checked += 1


def test_unit_frame_vector_norm():
    # ||(1 - theta) / z||^2 = 4 pi for a single atom at 0 with mass 1.
    system = ClarkSystem.from_values([(0, 1, 1)])
    v = ModelVector(system, (CertComplex(-1),))
    assert float(norm_squared(v)) == pytest.approx(4 * math.pi, rel=1e-15)


def test_two_atom_clark_norm():
    system = ClarkSystem.from_values([(0, "0.1", 1), (1, "0.1", 1)])
    v = ModelVector(system, (CertComplex(1), CertComplex(1)))
    assert float(norm(v)) == pytest.approx(math.sqrt(4 * math.pi * 0.2), rel=1e-15)
    assert float(norm(v)) == pytest.approx(1.5853, abs=1e-4)


def test_clark_formula_matches_quadrature():
    _check_parseval(3, 8)


@pytest.mark.slow
def test_clark_formula_matches_quadrature_many():
    _check_parseval(4, 100)


def test_synthesize_at_atom_is_minus_two_i_a(three_atoms):
    v = ModelVector(three_atoms, (CertComplex(1, 2), CertComplex(0, 0), CertComplex(-1, 0)))
    value = synthesize(v, three_atoms.atom(1).t)
    assert value.re.contains(4) and value.im.contains(-2)


def test_synthesize_matches_float_formula(three_atoms):
    coeffs = (1 + 0.5j, -0.25j, 2.0)
    v = ModelVector(three_atoms, tuple(CertComplex(a) for a in coeffs))
    ts = [float(a.t) for a in three_atoms.atoms]
    mus = [float(a.mu) for a in three_atoms.atoms]
    for x in (-2.0, 0.3, 0.65, 3.0):
        got = complex(synthesize(v, CertReal(x)))
        assert got == pytest.approx(_float_f(ts, mus, coeffs, x), rel=1e-12)


def test_model_vector_arithmetic(three_atoms):
    a = ModelVector.unit(three_atoms, 1)
    b = ModelVector.unit(three_atoms, 2)
    combo = (a + b).scale(2) - b
    assert combo.coeffs[0].re.contains(2)
    assert combo.coeffs[1].re.contains(1)
    with pytest.raises(ValueError):
        ModelVector(three_atoms, (CertComplex(1),))


def test_eigvec_coeffs_requires_a_zero(three_atoms, three_zeros):
    v = eigvec_coeffs(three_atoms, three_zeros.lam(1))
    assert len(v.coeffs) == 3
    with pytest.raises(NotAZero):
        eigvec_coeffs(three_atoms, CertReal("0.4"))
    with pytest.raises(NotAZero, match="pole"):
        eigvec_coeffs(three_atoms, CertReal("0.5"))


def test_eigenvector_norm_matches_coordinates(three_atoms, three_zeros):
    v = eigenvector(three_atoms, three_zeros, 2)
    coords = coordinates(v)
    total = sum((x.abs_squared() for x in coords), CertReal(0))
    assert (total - norm_squared(v)).contains_zero()


def test_pairwise_gap_is_symmetric_and_positive(three_atoms, three_zeros):
    g12 = pairwise_gap(three_atoms, three_zeros, 1, 2)
    g21 = pairwise_gap(three_atoms, three_zeros, 2, 1)
    assert g12.gap.overlaps(g21.gap)
    assert g12.gap.is_positive()
    assert len(g12.contributions) == 3
    diff = eigenvector(three_atoms, three_zeros, 1) - eigenvector(three_atoms, three_zeros, 2)
    assert g12.gap.overlaps(norm(diff))


def test_pairwise_gap_unknown_label(three_atoms, three_zeros):
    with pytest.raises(IndexError):
        pairwise_gap(three_atoms, three_zeros, 1, 7)


def test_pairwise_gap_two_atoms(ctx):
    system = ClarkSystem.from_values([(0, "0.1", "0.1"), (1, "0.1", "0.1")])
    zeros = solve_level_set(system, ctx.real(0), ctx)
    assert float(zeros.lam(1)) == pytest.approx(0.0099, abs=1e-6)
    assert float(zeros.lam(2)) == pytest.approx(1.0101, abs=1e-6)
    report = pairwise_gap(system, zeros, 1, 2)
    assert float(report.gap) == pytest.approx(15.8565, abs=1e-3)
    # Same distance from the synthesized functions.
    ts, mus = [0.0, 1.0], [0.1, 0.1]
    diff = eigenvector(system, zeros, 1) - eigenvector(system, zeros, 2)
    coeffs = [float(a) for a in diff.coeffs]
    assert math.sqrt(_quad_norm_squared(ts, mus, coeffs)) == pytest.approx(float(report.gap), rel=1e-8)


def test_frame_matrix_and_sigma_min(three_atoms, three_zeros):
    rows = frame_matrix(three_atoms, three_zeros)
    assert len(rows) == 3 and len(rows[0]) == 3
    sigma = frame_sigma_min(three_atoms, three_zeros)
    assert sigma.is_positive()
    A = basis_constant(three_atoms, three_zeros, sigma_min=sigma)
    assert A.is_point()
    assert not A.certainly_lt(1)
    assert not A.certainly_lt(CertReal(3).sqrt() / sigma)


def test_basis_constant_never_decreases(three_atoms, three_zeros):
    big = CertReal(10 ** 6)
    assert basis_constant(three_atoms, three_zeros, previous=big) == big


def test_ell1_ratio_is_bounded_by_basis_constant(three_atoms, three_zeros):
    A = basis_constant(three_atoms, three_zeros)
    rng = np.random.default_rng(0)
    for _ in range(50):
        ratio = ell1_ratio(three_atoms, three_zeros, rng.standard_normal(3))
        assert not ratio.certainly_gt(A)


def test_unimodularity_defect_vanishes(three_atoms):
    assert unimodularity_defect(three_atoms, CertReal("0.35")).contains_zero()


@pytest.fixture
def two_stages(ctx):
    """A two-atom system grown from the default base, with matched zeros."""
    prev = ClarkSystem.from_values([("1/2", "1/4", "1/8")])
    new = prev.with_atom(CertReal("0.5313"), CertReal("2^-12"), CertReal("2^-20"))
    zeros_prev = solve_level_set(prev, ctx.real(0), ctx)
    zeros_new = solve_level_set(new, ctx.real(0), ctx)
    zeros_new = match_zeros(zeros_prev, zeros_new).labelled(zeros_new, [2])
    return prev, new, zeros_prev, zeros_new


def test_perturbation_bound_shrinks_with_mass(two_stages):
    prev, new, _, _ = two_stages
    bound = perturbation_norm_bound(prev, new, 1)
    smaller = prev.with_atom(new.atom(2).t, CertReal("2^-16"), new.atom(2).c)
    assert bound.is_positive()
    assert not perturbation_norm_bound(prev, smaller, 1).certainly_gt(bound)


def _theta(x, atoms):
    s = sum(m / (t - x) for t, m in atoms)
    return (s - 1j) / (s + 1j)


@pytest.mark.parametrize("t2, mu2", [("0.5313", "2^-12"), ("0.9", "1e-6")])
def test_perturbation_bound_against_quadrature(t2, mu2):
    prev = ClarkSystem.from_values([("1/2", "1/4", "1/8")])
    new = prev.with_atom(CertReal(t2), CertReal(mu2), CertReal("2^-20"))
    t1, mu1 = 0.5, 0.25
    tn, mun = float(new.atom(2).t), float(new.atom(2).mu)

    def difference(x):
        return (_theta(x, [(t1, mu1), (tn, mun)]) - _theta(x, [(t1, mu1)])) / (x - t1)

    # Breakpoints resolve the bump of width mu_N around t_N.
    points = [t1] + [tn + s * w * mun for s in (-1, 0, 1) for w in (1, 10, 100)]
    exact = math.sqrt(_quad_squared(difference, points))
    bound = float(perturbation_norm_bound(prev, new, 1).hi)
    assert exact <= bound <= 10 * exact


@pytest.fixture
def three_stage_step(ctx):
    """A two-atom system and the same system with a third atom between them."""
    prev = ClarkSystem.from_values([("0.2", "0.1", "0.1"), ("0.7", "0.1", "0.1")])
    new = prev.with_atom(CertReal("0.45"), CertReal("0.001"), CertReal("0.05"))
    zeros_prev = solve_level_set(prev, ctx.real(0), ctx)
    zeros_new = solve_level_set(new, ctx.real(0), ctx)
    zeros_new = match_zeros(zeros_prev, zeros_new).labelled(zeros_new, [3])
    return prev, new, zeros_prev, zeros_new


@pytest.mark.parametrize("j", [1, 2])
def test_stage_difference_bound_against_quadrature(three_stage_step, j):
    prev, new, zeros_prev, zeros_new = three_stage_step
    old_vec = eigenvector(prev, zeros_prev, j)
    new_vec = eigenvector(new, zeros_new, j)

    def floats(system, v):
        ts = [float(a.t) for a in system.atoms]
        mus = [float(a.mu) for a in system.atoms]
        return ts, mus, [float(a) for a in v.coeffs]

    old_f = floats(prev, old_vec)
    new_f = floats(new, new_vec)

    def difference(x):
        return _float_f(*old_f, x) - _float_f(*new_f, x)

    t3, mu3 = 0.45, 0.001
    points = new_f[0] + [t3 + s * w * mu3 for s in (-1, 1) for w in (1, 10, 100)]
    exact = math.sqrt(_quad_squared(difference, points))
    bound = stage_difference_bound(prev, new, zeros_prev, zeros_new, j)
    assert exact > 0
    assert exact <= float(bound.hi)


def test_stage_difference_bound_dominates_pointwise_split(two_stages):
    prev, new, zeros_prev, zeros_new = two_stages
    bound = stage_difference_bound(prev, new, zeros_prev, zeros_new, 1)
    assert bound.is_positive()
    parts = decomposition_at(prev, new, zeros_prev, zeros_new, 1, CertComplex(0.3, 0.2))
    rebuilt = parts["g1"] + parts["g2"] - parts["h"]
    assert (rebuilt - parts["difference"]).contains_zero()
    assert h_term_norm(new, zeros_new.lam(1)).certainly_lt(bound)
    with pytest.raises(IndexError):
        stage_difference_bound(prev, new, zeros_prev, zeros_new, 2)


@pytest.mark.slow
def test_ell1_ratio_on_constructed_stages(two_stage_state):
    rng = np.random.default_rng(11)
    for record in two_stage_state.records:
        system = two_stage_state.system.prefix(record.N)
        for _ in range(1000):
            alpha = rng.standard_normal(record.N)
            ratio = ell1_ratio(system, record.zeros, alpha)
            assert not ratio.certainly_gt(record.basis_const)
