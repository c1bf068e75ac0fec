from fractions import Fraction

import mpmath
import pytest

from clark_tool.certreal import (
    CertComplex,
    CertReal,
    Ordering,
    PrecisionContext,
    compare_certified,
    log2_estimate,
    pi_interval,
    sqrt_certified,
)
from clark_tool.errors import ConfigError, DomainError, PrecisionExhausted


def test_power_of_two_strings_are_exact():
    x = CertReal("2^-3")
    assert x.is_point()
    assert float(x) == 0.125
    assert CertReal("2^(-40)") == CertReal.power_of_two(-40)


def test_fraction_is_enclosed():
    x = CertReal(Fraction(1, 3), bits=64)
    assert not x.is_point()
    assert x.contains(CertReal(Fraction(1, 3), bits=128))
    assert x.width < mpmath.mpf(2) ** -60


def test_decimal_string_is_enclosed():
    x = CertReal("0.1")
    assert x.contains(CertReal(Fraction(1, 10), bits=512))
    assert not x.is_point()


def test_unparsable_string_raises():
    with pytest.raises(DomainError, match="Cannot parse"):
        CertReal("one half")


def test_reversed_interval_raises():
    with pytest.raises(DomainError):
        CertReal(1, 0)


def test_arithmetic_encloses_exact_result():
    third = CertReal(1) / 3
    total = third + third + third
    assert total.contains(1)
    assert (CertReal(2) * CertReal("0.5")).contains(1)
    assert (1 - CertReal("2^-2")).contains(Fraction(3, 4))


def test_integer_powers():
    x = CertReal(3)
    assert x ** 4 == CertReal(81)
    assert (x ** -2).contains(Fraction(1, 9))


def test_sqrt_and_nth_root():
    assert CertReal(2).sqrt().contains(CertReal(2, bits=512).sqrt())
    assert CertReal(27).nth_root(3).contains(3)
    # A rounding artefact straddling zero is clipped.
    assert CertReal(-1e-30, 1e-30).sqrt().lo == 0
    with pytest.raises(DomainError):
        CertReal(-2, -1).sqrt()


def test_compare_certified_orderings():
    a = CertReal(1, 2)
    assert compare_certified(a, CertReal(3)) is Ordering.LESS
    assert compare_certified(CertReal(3), a) is Ordering.GREATER
    assert compare_certified(a, CertReal("1.5")) is Ordering.UNDECIDABLE
    # Equal points are never certified as ordered.
    assert compare_certified(CertReal(1), CertReal(1)) is Ordering.UNDECIDABLE


def test_hull_and_intersect():
    a, b = CertReal(0, 1), CertReal(2, 3)
    h = a.hull(b)
    assert float(h.lo) == 0 and float(h.hi) == 3
    assert CertReal(0, 2).intersect(CertReal(1, 3)) == CertReal(1, 2)
    with pytest.raises(DomainError, match="disjoint"):
        a.intersect(b)


def test_maximum_and_minimum():
    values = [CertReal(1, 2), CertReal("1.5", 3), CertReal(0)]
    assert float(CertReal.maximum(values).hi) == 3
    assert float(CertReal.minimum(values).lo) == 0


def test_pi_interval_contains_pi():
    p = pi_interval(200)
    with mpmath.workdps(80):
        assert p.lo < +mpmath.pi < p.hi
    assert p.width < mpmath.mpf(2) ** -190


def test_cot_matches_mpmath():
    x = CertReal("0.3", bits=128)
    assert float(x.cot()) == pytest.approx(float(mpmath.cot(mpmath.mpf("0.3"))), rel=1e-14)


def test_record_round_trip_is_exact():
    x = CertReal(Fraction(2, 7), bits=300)
    y = CertReal.from_record(x.to_record())
    assert y == x
    assert y.to_record() == x.to_record()


def test_point_record_has_zero_radius():
    rec = CertReal("2^-5").to_record()
    assert rec == {"mid": "0.03125", "rad": "0", "bits": 256}


def test_complex_division_and_abs():
    z = CertComplex(3, 4)
    assert abs(z).contains(5)
    q = z / CertComplex(0, 1)
    assert q.re.contains(4) and q.im.contains(-3)
    assert z.times_i().re.contains(-4)
    assert z.conj().im.contains(-4)


def test_complex_mixed_arithmetic():
    z = 1 + CertComplex(0, 2)
    assert z.re.contains(1) and z.im.contains(2)
    w = 2 - CertComplex(1, 1)
    assert w.re.contains(1) and w.im.contains(-1)
    r = 1 / CertComplex(0, 2)
    assert r.im.contains(Fraction(-1, 2))


def test_precision_context_escalation():
    ctx = PrecisionContext(bits=64, max_bits=200)
    assert ctx.escalate().bits == 128
    assert ctx.escalate().escalate().bits == 200
    assert ctx.at_least(150).bits == 200
    with pytest.raises(PrecisionExhausted):
        PrecisionContext(bits=200, max_bits=200).escalate()


@pytest.mark.parametrize(
    "kwargs",
    [{"bits": 8}, {"bits": 256, "max_bits": 128}, {"escalation_factor": 1}],
)
def test_precision_context_rejects_bad_settings(kwargs):
    with pytest.raises(ConfigError):
        PrecisionContext(**kwargs)


def test_lift_keeps_enclosure():
    ctx = PrecisionContext(bits=512)
    x = CertReal("0.1", bits=64)
    lifted = ctx.lift(x)
    assert lifted.bits == 512
    assert lifted.lo == x.lo and lifted.hi == x.hi


def test_log2_estimate_far_outside_float_range():
    assert log2_estimate(CertReal.power_of_two(-5000)) == -4999
    assert log2_estimate(0) < -1000


def test_sqrt_certified():
    assert sqrt_certified(CertReal("1/4")) == CertReal("0.5")
    # The negative part of a straddling interval is dropped.
    root = sqrt_certified(CertReal(-0.5, 4))
    assert root.lo == 0 and root.hi == 2
    with pytest.raises(DomainError, match="negative interval"):
        sqrt_certified(CertReal(-2, -1))
