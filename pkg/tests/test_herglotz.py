from fractions import Fraction

import numpy as np
import pytest

from clark_tool.certreal import CertComplex, CertReal, PrecisionContext
from clark_tool.errors import AmbiguousMatch, DomainError, PoleError
from clark_tool.herglotz import (
    ClarkSystem,
    eval_cauchy_sum,
    eval_H,
    eval_H_derivative,
    eval_inner,
    eval_phi,
    inner_derivative_at_atom,
    match_zeros,
    nearest_zero,
    one_minus_inner,
    solve_interval,
    solve_level_set,
)


def _random_system(rng, K):
    while True:
        t = np.sort(rng.uniform(0.02, 0.98, K))
        if K == 1 or np.min(np.diff(t)) > 0.02:
            break
    mu = rng.uniform(0.05, 0.5, K)
    c = rng.uniform(0.05, 0.5, K)
    return ClarkSystem.from_values(list(zip(t, mu, c)), bits=96)


def _float_H(system, x):
    total = np.ones_like(x)
    for a in system.atoms:
        total = total + float(a.cmu) / (float(a.t) - x)
    return total


def test_system_rejects_coincident_atoms():
    with pytest.raises(DomainError, match="distinct"):
        ClarkSystem.from_values([(0.5, 0.1, 0.1), (0.5, 0.2, 0.1)])


def test_prefix_and_with_atom(three_atoms):
    assert three_atoms.prefix(2).N == 2
    bigger = three_atoms.with_atom(CertReal("0.9"), CertReal("0.01"), CertReal("0.01"))
    assert bigger.N == 4
    assert bigger.atom(4).t == CertReal("0.9")
    with pytest.raises(IndexError):
        three_atoms.atom(4)


def test_sorted_poles_follow_position(three_atoms):
    system = ClarkSystem(tuple(reversed(three_atoms.atoms)))
    assert [n for _, n in system.sorted_poles()] == [3, 2, 1]


@pytest.mark.parametrize("level", ["0", "0.25", "0.9"])
def test_single_atom_closed_form(single_atom, ctx, level):
    # H(x) = level at x = t + c mu / (1 - level).
    zeros = solve_level_set(single_atom, ctx.real(level), ctx)
    eps = Fraction(level)
    expected = Fraction(1, 2) + Fraction(1, 32) / (1 - eps)
    assert len(zeros) == 1
    assert zeros.lam(1).contains(CertReal(expected, bits=512))
    assert zeros.lam(1).width < 2.0 ** -200


def test_eval_cauchy_sum(single_atom, ctx):
    # 1/4 / (1/2 - i) = (1 + 2i) / 10
    s = eval_cauchy_sum(single_atom, ctx.complex(0, 1))
    assert s.re.overlaps(Fraction(1, 10)) and s.im.overlaps(Fraction(1, 5))
    assert s.width() < 2.0 ** -200
    weighted = eval_cauchy_sum(single_atom, ctx.complex(0, 1), "c_times_mu")
    assert weighted.im.overlaps(Fraction(1, 40))
    on_line = eval_cauchy_sum(single_atom, ctx.real(0))
    assert on_line.re == CertReal("0.5") and on_line.im.is_point()
    with pytest.raises(PoleError):
        eval_cauchy_sum(single_atom, ctx.real("1/2"))
    with pytest.raises(ValueError, match="weights must be one of"):
        eval_cauchy_sum(single_atom, ctx.real(0), "c")


def test_bracket_certifies_sign_change(three_atoms, three_zeros):
    for zero in three_zeros.zeros:
        a, b = zero.bracket
        assert eval_H(three_atoms, a).is_negative()
        assert eval_H(three_atoms, b).is_positive()


def test_zeros_interlace_poles(three_atoms, three_zeros):
    poles = [t for t, _ in three_atoms.sorted_poles()]
    for k, zero in enumerate(three_zeros.zeros):
        assert poles[k].certainly_lt(zero.lam)
        if k + 1 < len(poles):
            assert zero.lam.certainly_lt(poles[k + 1])
        assert zero.interval_index == k + 1


def _scan_brackets(seed, brackets):
    """Compares certified zeros with a float sign scan until `brackets` gaps were checked."""
    rng = np.random.default_rng(seed)
    ctx = PrecisionContext(bits=96)
    checked = 0
    while checked < brackets:
        K = int(rng.integers(1, 7))
        system = _random_system(rng, K)
        level = float(rng.uniform(0, 0.9))
        zeros = solve_level_set(system, CertReal(level, bits=96), ctx)
        assert len(zeros) == K
        poles = [float(t) for t, _ in system.sorted_poles()]
        ends = poles[1:] + [poles[-1] + 20.0]
        for zero, left, right in zip(zeros.zeros, poles, ends):
            grid = np.linspace(left, right, 4002)[1:-1]
            g = _float_H(system, grid) - level
            changes = np.nonzero(np.diff(np.sign(g)) > 0)[0]
            assert len(changes) == 1
            lam = float(zero.lam)
            assert grid[changes[0]] - 1e-9 <= lam <= grid[changes[0] + 1] + 1e-9
        checked += K
    return checked


def test_interlacing_against_sign_scan():
    assert _scan_brackets(7, 100) >= 100


@pytest.mark.slow
def test_interlacing_against_sign_scan_many():
    assert _scan_brackets(8, 1000) >= 1000


@pytest.mark.parametrize("K", [1, 3, 6])
def test_zeros_move_right_with_level(K):
    rng = np.random.default_rng(K)
    system = _random_system(rng, K)
    ctx = PrecisionContext(bits=96)
    levels = [CertReal(f"{i}/20", bits=96) for i in range(20)]
    rows = [solve_level_set(system, level, ctx).zeros for level in levels]
    for low, high in zip(rows, rows[1:]):
        for a, b in zip(low, high):
            assert a.lam.certainly_lt(b.lam)


def test_level_out_of_range(single_atom, ctx):
    with pytest.raises(DomainError, match="level"):
        solve_level_set(single_atom, ctx.real(1), ctx)


def test_nonpositive_coupling_is_rejected(ctx):
    system = ClarkSystem.from_values([(0.5, 0.25, 0)])
    with pytest.raises(DomainError, match="coupling"):
        solve_level_set(system, ctx.real(0), ctx)


def test_solve_interval_matches_level_set(three_atoms, three_zeros, ctx):
    zero = solve_interval(three_atoms, ctx.real(0), 2, ctx)
    assert zero.lam.overlaps(three_zeros.zeros[1].lam)
    with pytest.raises(IndexError):
        solve_interval(three_atoms, ctx.real(0), 4, ctx)


def test_bad_hint_falls_back(three_atoms, three_zeros, ctx):
    hints = [CertReal("0.21"), CertReal("0.79"), CertReal("5")]
    zeros = solve_level_set(three_atoms, ctx.real(0), ctx, hints=hints)
    for a, b in zip(zeros.zeros, three_zeros.zeros):
        assert a.lam.overlaps(b.lam)


def test_derivative_is_positive(three_atoms, three_zeros):
    for zero in three_zeros.zeros:
        assert eval_H_derivative(three_atoms, zero.lam).is_positive()


def test_inner_is_unimodular_on_the_line(three_atoms):
    for x in ("-3", "0.1", "0.35", "0.6", "4"):
        theta = eval_inner(three_atoms, CertReal(x))
        assert (theta.abs_squared() - 1).contains_zero()


def test_inner_rejects_lower_half_plane(three_atoms):
    with pytest.raises(DomainError):
        eval_inner(three_atoms, CertComplex(0, -1))


def test_inner_at_atom_raises_with_limit(three_atoms):
    with pytest.raises(PoleError) as info:
        eval_inner(three_atoms, CertReal("0.5"))
    assert info.value.index == 2
    assert info.value.limit.re.contains(1)


def test_inner_derivative_at_atom(single_atom):
    # (theta(t + h) - 1) / h ~ theta'(t) with |theta'(t)| = 2 / mu = 8.
    h = CertReal.power_of_two(-80)
    theta = eval_inner(single_atom, single_atom.atom(1).t + h)
    slope = abs(theta - 1) / h
    assert float(slope) == pytest.approx(8.0, rel=1e-12)
    assert inner_derivative_at_atom(single_atom, 1) == CertReal(8)


def test_phi_at_atom_has_modulus_two_c(three_atoms):
    for a in three_atoms.atoms:
        value = eval_phi(three_atoms, a.t)
        assert (abs(value) - 2 * a.c).contains_zero()


def test_one_minus_inner_vanishes_at_atom(three_atoms):
    value = one_minus_inner(three_atoms, three_atoms.atom(1).t)
    assert value.contains_zero()


def test_match_zeros_keeps_labels(three_atoms, three_zeros, ctx):
    bigger = three_atoms.with_atom(CertReal("0.9"), CertReal("2^-10"), CertReal("2^-10"))
    new = solve_level_set(bigger, ctx.real(0), ctx)
    labelled = match_zeros(three_zeros, new).labelled(new, [4])
    assert sorted(labelled.labels) == [1, 2, 3, 4]
    for j in (1, 2, 3):
        assert abs(labelled.lam(j) - three_zeros.lam(j)).certainly_lt(CertReal("0.01"))


def test_match_zeros_rejects_foreign_poles(three_zeros, ctx):
    other = ClarkSystem.from_values([(0.1, 0.1, 0.1), (0.4, 0.1, 0.1), (0.7, 0.1, 0.1)])
    with pytest.raises(AmbiguousMatch) as info:
        match_zeros(three_zeros, solve_level_set(other, ctx.real(0), ctx))
    assert not info.value.resolvable


def test_nearest_zero(three_zeros):
    target = three_zeros.zeros[1].lam + CertReal("1e-6")
    assert nearest_zero(three_zeros, target) == 1
