# -*- coding: utf-8 -*-
"""
Certified real and complex arithmetic on top of mpmath's interval kernels.

Every quantity the construction compares is carried as a closed interval
[lo, hi] that is guaranteed to contain the true real number. Arithmetic is
delegated to the directed-rounding primitives of `mpmath.libmp` (the same
kernels behind `mpmath.iv`), but each operation receives its precision
explicitly instead of reading the global `mp.prec`. Values therefore behave
like immutable numbers and can be shared freely between threads.

The precision of a result is the larger of its operands' precisions. Plain
Python numbers are converted exactly when they are dyadic (ints, floats,
dyadic fractions) and enclosed by outward rounding otherwise.
"""
import re
from dataclasses import dataclass, replace
from decimal import Context, Decimal, MAX_EMAX, MAX_PREC, MIN_EMIN
from enum import Enum
from fractions import Fraction

import mpmath
from mpmath import mp
from mpmath.libmp import (
    finf,
    fnan,
    fninf,
    from_float,
    from_int,
    from_man_exp,
    from_rational,
    fzero,
    mpf_add,
    mpf_ge,
    mpf_gt,
    mpf_le,
    mpf_lt,
    mpf_mul,
    mpf_nthroot,
    mpf_shift,
    mpf_sqrt,
    mpf_sub,
    mpi_abs,
    mpi_add,
    mpi_div,
    mpi_mul,
    mpi_neg,
    mpi_sub,
    round_ceiling,
    round_floor,
    to_float,
)
from mpmath.libmp.libmpi import mpi_cot, mpi_pi, mpi_square

from .errors import ConfigError, DomainError, PrecisionExhausted

DEFAULT_BITS = 256
DEFAULT_MAX_BITS = 1 << 18
DEFAULT_ESCALATION_FACTOR = 2

_POWER_OF_TWO = re.compile(r"^\s*2\s*\^\s*\(?\s*(-?\d+)\s*\)?\s*$")

# Decimal context wide enough that exact dyadic conversions never round.
_EXACT_DECIMAL = Context(prec=MAX_PREC, Emax=MAX_EMAX, Emin=MIN_EMIN)


class Ordering(Enum):
    """Outcome of a certified comparison."""

    LESS = "less"
    GREATER = "greater"
    UNDECIDABLE = "undecidable"


def _is_finite_raw(x):
    return x not in (finf, fninf, fnan)


def _enclose_fraction(q, bits):
    p, d = q.numerator, q.denominator
    if d & (d - 1) == 0:
        v = from_man_exp(p, -(d.bit_length() - 1))
        return v, v
    return (
        from_rational(p, d, bits, round_floor),
        from_rational(p, d, bits, round_ceiling),
    )


def _enclose(value, bits):
    """Returns a raw (lo, hi) pair enclosing `value`."""
    if isinstance(value, CertReal):
        return value._lo, value._hi
    if isinstance(value, int):
        v = from_int(int(value))
        return v, v
    if isinstance(value, float):
        if value != value:
            raise DomainError("NaN cannot be enclosed in an interval.")
        v = from_float(value)
        return v, v
    if hasattr(value, "_mpf_"):
        # mpf values from any mpmath context, including private ones.
        v = value._mpf_
        return v, v
    if isinstance(value, Fraction):
        return _enclose_fraction(value, bits)
    if isinstance(value, Decimal):
        return _enclose_fraction(Fraction(value), bits)
    if isinstance(value, str):
        match = _POWER_OF_TWO.match(value)
        if match:
            v = from_man_exp(1, int(match.group(1)))
            return v, v
        try:
            return _enclose_fraction(Fraction(value.strip()), bits)
        except (ValueError, ZeroDivisionError) as e:
            raise DomainError(f"Cannot parse '{value}' as a real number.") from e
    raise TypeError(f"Cannot convert {type(value).__name__} to CertReal.")


def _raw_to_decimal(x):
    """Formats an exact raw mpf as an exact decimal string."""
    sign, man, exp, _ = x
    man = int(man)
    if not man:
        return "0"
    if exp >= 0:
        d = Decimal(man << exp)
    else:
        d = Decimal(man * 5 ** (-exp)).scaleb(exp, _EXACT_DECIMAL)
    return str(-d if sign else d)


class CertReal:
    """
    A closed real interval [lo, hi] enclosing an exact real number.

    Instances are immutable. Arithmetic operators return new intervals that
    enclose the exact image of their inputs (outward rounding). There is no
    `<` operator on purpose: orderings go through `compare_certified` or the
    `certainly_*` predicates, which can answer "undecidable".

    Attributes:
        bits (int): Mantissa precision used for operations on this value.
    """

    __slots__ = ("_lo", "_hi", "bits")

    def __init__(self, lo=0, hi=None, bits=DEFAULT_BITS):
        """
        Builds an interval from one or two real values.

        Args:
            lo: Lower end (or the single value when `hi` is None). Accepts
                ints, floats, Fractions, Decimals, mpf values, decimal strings
                and strings of the form "2^-k".
            hi: Optional upper end.
            bits (int): Working precision attached to the value.

        Raises:
            DomainError: If lo > hi or a value cannot be parsed.
        """
        a, b = _enclose(lo, bits)
        if hi is not None:
            _, b = _enclose(hi, bits)
        if mpf_gt(a, b):
            raise DomainError("Interval lower end exceeds upper end.")
        self._lo = a
        self._hi = b
        self.bits = int(bits)

    @classmethod
    def _from_raw(cls, lo, hi, bits):
        obj = cls.__new__(cls)
        obj._lo = fninf if lo == fnan else lo
        obj._hi = finf if hi == fnan else hi
        obj.bits = bits
        return obj

    @classmethod
    def power_of_two(cls, k, bits=DEFAULT_BITS):
        """Returns the exact point interval 2**k."""
        v = from_man_exp(1, int(k))
        return cls._from_raw(v, v, bits)

    @classmethod
    def hull_of(cls, values):
        """Smallest interval containing every interval in `values`."""
        values = list(values)
        out = values[0]
        for v in values[1:]:
            out = out.hull(v)
        return out

    @classmethod
    def maximum(cls, values):
        """Interval enclosure of max(x_1, ..., x_k)."""
        values = list(values)
        lo, hi, bits = values[0]._lo, values[0]._hi, values[0].bits
        for v in values[1:]:
            if mpf_gt(v._lo, lo):
                lo = v._lo
            if mpf_gt(v._hi, hi):
                hi = v._hi
            bits = max(bits, v.bits)
        return cls._from_raw(lo, hi, bits)

    @classmethod
    def minimum(cls, values):
        """Interval enclosure of min(x_1, ..., x_k)."""
        values = list(values)
        lo, hi, bits = values[0]._lo, values[0]._hi, values[0].bits
        for v in values[1:]:
            if mpf_lt(v._lo, lo):
                lo = v._lo
            if mpf_lt(v._hi, hi):
                hi = v._hi
            bits = max(bits, v.bits)
        return cls._from_raw(lo, hi, bits)

    # ------------------------------------------------------------------ views

    @property
    def lo(self):
        """Lower end as an mpmath mpf."""
        return mp.make_mpf(self._lo)

    @property
    def hi(self):
        """Upper end as an mpmath mpf."""
        return mp.make_mpf(self._hi)

    @property
    def mid(self):
        """Exact midpoint as an mpmath mpf."""
        if not self.is_finite():
            raise DomainError("Unbounded interval has no midpoint.")
        return mp.make_mpf(self._exact_mid())

    def _exact_mid(self):
        return mpf_shift(mpf_add(self._lo, self._hi, 0), -1)

    def _exact_rad(self):
        return mpf_shift(mpf_sub(self._hi, self._lo, 0), -1)

    @property
    def rad(self):
        """Upper bound of the half-width as an mpf."""
        return mp.make_mpf(mpf_shift(mpf_sub(self._hi, self._lo, 64, round_ceiling), -1))

    @property
    def width(self):
        """Upper bound of hi - lo as an mpf."""
        return mp.make_mpf(mpf_sub(self._hi, self._lo, 64, round_ceiling))

    def midpoint(self):
        """The exact midpoint as a point interval (a dyadic rational)."""
        m = self._exact_mid()
        return CertReal._from_raw(m, m, self.bits)

    def lower(self):
        """The exact lower end as a point interval."""
        return CertReal._from_raw(self._lo, self._lo, self.bits)

    def upper(self):
        """The exact upper end as a point interval."""
        return CertReal._from_raw(self._hi, self._hi, self.bits)

    def with_bits(self, bits):
        """Same enclosure, operated on at another precision."""
        return CertReal._from_raw(self._lo, self._hi, int(bits))

    def is_finite(self):
        return _is_finite_raw(self._lo) and _is_finite_raw(self._hi)

    def is_point(self):
        return self._lo == self._hi

    def __float__(self):
        return to_float(self._exact_mid())

    def __repr__(self):
        return "CertReal([{}, {}], bits={})".format(
            mpmath.nstr(self.lo, 12), mpmath.nstr(self.hi, 12), self.bits
        )

    # -------------------------------------------------------------- predicates

    def contains(self, value):
        """True if every point of `value` lies in this interval."""
        a, b = _enclose(value, self.bits)
        return mpf_le(self._lo, a) and mpf_le(b, self._hi)

    def overlaps(self, other):
        a, b = _enclose(other, self.bits)
        return not (mpf_lt(self._hi, a) or mpf_lt(b, self._lo))

    def contains_zero(self):
        return mpf_le(self._lo, fzero) and mpf_ge(self._hi, fzero)

    def is_positive(self):
        return mpf_gt(self._lo, fzero)

    def is_negative(self):
        return mpf_lt(self._hi, fzero)

    def is_nonnegative(self):
        return mpf_ge(self._lo, fzero)

    def certainly_lt(self, other):
        return compare_certified(self, other) is Ordering.LESS

    def certainly_gt(self, other):
        return compare_certified(self, other) is Ordering.GREATER

    def certainly_le(self, other):
        a, _ = _enclose(other, self.bits)
        return mpf_le(self._hi, a)

    def __eq__(self, other):
        # Structural equality of the enclosures, not numeric equality.
        if not isinstance(other, CertReal):
            return NotImplemented
        return self._lo == other._lo and self._hi == other._hi

    def __hash__(self):
        return hash((self._lo, self._hi))

    # ------------------------------------------------------------ set algebra

    def hull(self, other):
        a, b = _enclose(other, self.bits)
        lo = self._lo if mpf_le(self._lo, a) else a
        hi = self._hi if mpf_ge(self._hi, b) else b
        return CertReal._from_raw(lo, hi, max(self.bits, _bits_of(other, self.bits)))

    def intersect(self, other):
        a, b = _enclose(other, self.bits)
        lo = self._lo if mpf_ge(self._lo, a) else a
        hi = self._hi if mpf_le(self._hi, b) else b
        if mpf_gt(lo, hi):
            raise DomainError("Intervals are disjoint.")
        return CertReal._from_raw(lo, hi, max(self.bits, _bits_of(other, self.bits)))

    # ------------------------------------------------------------- arithmetic

    def _binary(self, other, kernel, reverse=False):
        if isinstance(other, CertComplex):
            return NotImplemented
        try:
            o = _enclose(other, self.bits)
        except TypeError:
            return NotImplemented
        prec = max(self.bits, _bits_of(other, self.bits))
        s = (self._lo, self._hi)
        lo, hi = kernel(o, s, prec) if reverse else kernel(s, o, prec)
        return CertReal._from_raw(lo, hi, prec)

    def __add__(self, other):
        return self._binary(other, mpi_add)

    def __radd__(self, other):
        return self._binary(other, mpi_add, reverse=True)

    def __sub__(self, other):
        return self._binary(other, mpi_sub)

    def __rsub__(self, other):
        return self._binary(other, mpi_sub, reverse=True)

    def __mul__(self, other):
        return self._binary(other, mpi_mul)

    def __rmul__(self, other):
        return self._binary(other, mpi_mul, reverse=True)

    def __truediv__(self, other):
        return self._binary(other, mpi_div)

    def __rtruediv__(self, other):
        return self._binary(other, mpi_div, reverse=True)

    def __neg__(self):
        lo, hi = mpi_neg((self._lo, self._hi))
        return CertReal._from_raw(lo, hi, self.bits)

    def __pos__(self):
        return self

    def __abs__(self):
        lo, hi = mpi_abs((self._lo, self._hi), self.bits)
        return CertReal._from_raw(lo, hi, self.bits)

    def __pow__(self, n):
        if not isinstance(n, int):
            return NotImplemented
        if n < 0:
            return 1 / (self ** (-n))
        result = CertReal._from_raw(from_int(1), from_int(1), self.bits)
        base = self
        while n:
            if n & 1:
                result = result * base
            n >>= 1
            if n:
                base = base.square()
        return result

    def square(self):
        lo, hi = mpi_square((self._lo, self._hi), self.bits)
        return CertReal._from_raw(lo, hi, self.bits)

    def sqrt(self):
        """
        Certified square root.

        The part of the interval below zero is discarded, so an interval that
        straddles zero (typically a rounding artefact around an exact zero)
        yields [0, sqrt(hi)].

        Raises:
            DomainError: If the whole interval is negative.
        """
        if mpf_lt(self._hi, fzero):
            raise DomainError("Square root of a negative interval.")
        lo = self._lo if mpf_ge(self._lo, fzero) else fzero
        return CertReal._from_raw(
            mpf_sqrt(lo, self.bits, round_floor),
            mpf_sqrt(self._hi, self.bits, round_ceiling),
            self.bits,
        )

    def cot(self):
        """Certified cotangent (unbounded when the interval meets a multiple of pi)."""
        lo, hi = mpi_cot((self._lo, self._hi), self.bits)
        return CertReal._from_raw(lo, hi, self.bits)

    def nth_root(self, n):
        """Certified n-th root of a nonnegative interval (n >= 1)."""
        if mpf_lt(self._hi, fzero):
            raise DomainError("Root of a negative interval.")
        lo = self._lo if mpf_ge(self._lo, fzero) else fzero
        wp = self.bits + 20
        # mpf_nthroot is accurate to a few ulps at wp; widen by 2^-bits relative.
        down = from_man_exp((1 << self.bits) - 1, -self.bits)
        up = from_man_exp((1 << self.bits) + 1, -self.bits)
        a = mpf_mul(mpf_nthroot(lo, n, wp, round_floor), down, self.bits, round_floor)
        b = mpf_mul(mpf_nthroot(self._hi, n, wp, round_ceiling), up, self.bits, round_ceiling)
        return CertReal._from_raw(a, b, self.bits)

    # ---------------------------------------------------------- serialization

    def to_record(self):
        """
        Serializes the interval as exact decimal strings.

        Returns:
            dict: {"mid": str, "rad": str, "bits": int} where mid and rad are
                the exact midpoint and half-width of [lo, hi].
        """
        if not self.is_finite():
            raise DomainError("Cannot serialize an unbounded interval.")
        return {
            "mid": _raw_to_decimal(self._exact_mid()),
            "rad": _raw_to_decimal(self._exact_rad()),
            "bits": self.bits,
        }

    @classmethod
    def from_record(cls, record):
        """
        Rebuilds an interval from `to_record` output.

        Dyadic decimals are converted exactly, so serialising the result again
        reproduces the input byte for byte.
        """
        bits = int(record["bits"])
        mid_lo, mid_hi = _enclose_fraction(Fraction(Decimal(record["mid"])), bits)
        rad_lo, rad_hi = _enclose_fraction(Fraction(Decimal(record["rad"])), bits)
        if mpf_lt(rad_lo, fzero):
            raise DomainError("Negative interval radius.")
        if mid_lo == mid_hi and rad_lo == rad_hi:
            lo = mpf_sub(mid_lo, rad_hi, 0)
            hi = mpf_add(mid_hi, rad_hi, 0)
        else:
            lo = mpf_sub(mid_lo, rad_hi, bits, round_floor)
            hi = mpf_add(mid_hi, rad_hi, bits, round_ceiling)
        return cls._from_raw(lo, hi, bits)


def _bits_of(value, default):
    if isinstance(value, CertReal):
        return value.bits
    return default


def compare_certified(a, b):
    """
    Compares two intervals without ever asserting a false order.

    Args:
        a (CertReal): Left operand (plain numbers are accepted too).
        b (CertReal): Right operand.

    Returns:
        Ordering: LESS iff a.hi < b.lo, GREATER iff a.lo > b.hi, otherwise
            UNDECIDABLE (this includes equal point intervals).
    """
    a_lo, a_hi = _enclose(a, DEFAULT_BITS)
    b_lo, b_hi = _enclose(b, DEFAULT_BITS)
    if mpf_lt(a_hi, b_lo):
        return Ordering.LESS
    if mpf_gt(a_lo, b_hi):
        return Ordering.GREATER
    return Ordering.UNDECIDABLE


def sqrt_certified(a):
    """Certified square root of a CertReal (see `CertReal.sqrt`)."""
    return a.sqrt()


class CertComplex:
    """
    A rectangle re + i*im of two CertReal intervals.

    Attributes:
        re (CertReal): Enclosure of the real part.
        im (CertReal): Enclosure of the imaginary part.
    """

    __slots__ = ("re", "im")

    def __init__(self, re=0, im=0, bits=None):
        if isinstance(re, complex) and im == 0:
            re, im = re.real, re.imag
        if bits is None:
            bits = max(_bits_of(re, DEFAULT_BITS), _bits_of(im, DEFAULT_BITS))
        self.re = re if isinstance(re, CertReal) else CertReal(re, bits=bits)
        self.im = im if isinstance(im, CertReal) else CertReal(im, bits=bits)

    @property
    def bits(self):
        return max(self.re.bits, self.im.bits)

    @staticmethod
    def _lift(value, bits):
        if isinstance(value, CertComplex):
            return value
        if isinstance(value, complex):
            return CertComplex(value.real, value.imag, bits=bits)
        if isinstance(value, CertReal):
            return CertComplex(value, CertReal(0, bits=value.bits))
        return CertComplex(CertReal(value, bits=bits), CertReal(0, bits=bits))

    def __repr__(self):
        return f"CertComplex({self.re!r}, {self.im!r})"

    def __add__(self, other):
        o = CertComplex._lift(other, self.bits)
        return CertComplex(self.re + o.re, self.im + o.im)

    __radd__ = __add__

    def __sub__(self, other):
        o = CertComplex._lift(other, self.bits)
        return CertComplex(self.re - o.re, self.im - o.im)

    def __rsub__(self, other):
        return CertComplex._lift(other, self.bits) - self

    def __mul__(self, other):
        if isinstance(other, (CertReal, int, float, Fraction)):
            return CertComplex(self.re * other, self.im * other)
        o = CertComplex._lift(other, self.bits)
        return CertComplex(
            self.re * o.re - self.im * o.im,
            self.re * o.im + self.im * o.re,
        )

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, (CertReal, int, float, Fraction)):
            return CertComplex(self.re / other, self.im / other)
        o = CertComplex._lift(other, self.bits)
        denom = o.abs_squared()
        return CertComplex(
            (self.re * o.re + self.im * o.im) / denom,
            (self.im * o.re - self.re * o.im) / denom,
        )

    def __rtruediv__(self, other):
        return CertComplex._lift(other, self.bits) / self

    def __neg__(self):
        return CertComplex(-self.re, -self.im)

    def conj(self):
        return CertComplex(self.re, -self.im)

    def times_i(self):
        """Exact multiplication by the imaginary unit."""
        return CertComplex(-self.im, self.re)

    def abs_squared(self):
        return self.re.square() + self.im.square()

    def __abs__(self):
        return self.abs_squared().sqrt()

    def is_finite(self):
        return self.re.is_finite() and self.im.is_finite()

    def contains(self, value):
        o = CertComplex._lift(value, self.bits)
        return self.re.contains(o.re) and self.im.contains(o.im)

    def overlaps(self, other):
        o = CertComplex._lift(other, self.bits)
        return self.re.overlaps(o.re) and self.im.overlaps(o.im)

    def contains_zero(self):
        return self.re.contains_zero() and self.im.contains_zero()

    def width(self):
        return max(self.re.width, self.im.width)

    def to_mpc(self):
        """Midpoint as an mpmath mpc (for diagnostics and reports)."""
        return mpmath.mpc(self.re.mid, self.im.mid)

    def __complex__(self):
        return complex(float(self.re), float(self.im))

    def to_record(self):
        return {"re": self.re.to_record(), "im": self.im.to_record()}

    @classmethod
    def from_record(cls, record):
        return cls(CertReal.from_record(record["re"]), CertReal.from_record(record["im"]))


@dataclass(frozen=True)
class PrecisionContext:
    """
    Working precision and its escalation policy.

    Attributes:
        bits (int): Current mantissa precision.
        max_bits (int): Ceiling that escalation may not exceed.
        escalation_factor (int): Multiplier applied by `escalate`.
    """

    bits: int = DEFAULT_BITS
    max_bits: int = DEFAULT_MAX_BITS
    escalation_factor: int = DEFAULT_ESCALATION_FACTOR

    def __post_init__(self):
        if not isinstance(self.bits, int) or self.bits < 16:
            raise ConfigError(f"Precision must be an integer >= 16 bits, got {self.bits}.")
        if not isinstance(self.max_bits, int) or self.max_bits < self.bits:
            raise ConfigError(
                f"max_bits ({self.max_bits}) must be an integer >= bits ({self.bits})."
            )
        if not isinstance(self.escalation_factor, int) or self.escalation_factor < 2:
            raise ConfigError("escalation_factor must be an integer >= 2.")

    def escalate(self):
        """
        Returns a context with bits multiplied by the escalation factor.

        The last step is clamped to max_bits.

        Raises:
            PrecisionExhausted: If the context is already at max_bits.
        """
        if self.bits >= self.max_bits:
            raise PrecisionExhausted(
                f"Precision ceiling of {self.max_bits} bits reached.", bits=self.bits
            )
        return replace(self, bits=min(self.bits * self.escalation_factor, self.max_bits))

    def at_least(self, bits):
        """Escalates until the context has at least `bits` bits."""
        ctx = self
        while ctx.bits < bits:
            ctx = ctx.escalate()
        return ctx

    def real(self, value):
        return CertReal(value, bits=self.bits)

    def interval(self, lo, hi):
        return CertReal(lo, hi, bits=self.bits)

    def complex(self, re, im=0):
        return CertComplex(
            re if isinstance(re, CertReal) else CertReal(re, bits=self.bits),
            im if isinstance(im, CertReal) else CertReal(im, bits=self.bits),
        )

    def lift(self, value):
        """Re-tags an existing CertReal with this context's precision."""
        if isinstance(value, CertReal):
            return value.with_bits(max(value.bits, self.bits))
        return self.real(value)

    def power_of_two(self, k):
        return CertReal.power_of_two(k, bits=self.bits)

    def pi(self):
        return pi_interval(self.bits)


def pi_interval(bits=DEFAULT_BITS):
    """Enclosure of pi at `bits`."""
    lo, hi = mpi_pi(bits)
    return CertReal._from_raw(lo, hi, bits)


def log2_estimate(value):
    """
    Rough base-2 logarithm of |value| (an integer, never certified).

    Used only to predict starting points of the shrink loops; works for
    magnitudes far outside the float range.
    """
    if isinstance(value, CertReal):
        value = abs(value).hi if value.is_finite() else mpmath.inf
    m = mpmath.mpf(value)
    if m == 0:
        return -(1 << 30)
    return int(mpmath.mag(m))
