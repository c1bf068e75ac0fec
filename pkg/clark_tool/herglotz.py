# -*- coding: utf-8 -*-
"""
Herglotz sums, inner functions and the interlaced zeros of the bracket.

A `ClarkSystem` holds the atomic data (t_n, mu_n, c_n). From it this module
evaluates

    S_N(z) = sum mu_n / (t_n - z)            (Herglotz sum)
    H_N(z) = 1 + sum c_n mu_n / (t_n - z)    (bracket)
    theta_N = (S_N - i) / (S_N + i)          (inner function)
    phi_N   = (1 - theta_N) H_N = 2i H_N / (S_N + i)

and solves H_N(x) = level on the real line. Between consecutive poles H_N is
strictly increasing, so each gap holds exactly one solution and plain
bisection on certified signs finds it.
"""
import logging
from dataclasses import dataclass, field

import mpmath
from mpmath import mpf

from .certreal import CertComplex, CertReal, PrecisionContext
from .errors import AmbiguousMatch, DomainError, PoleError, PrecisionExhausted

logger = logging.getLogger(__name__)

WEIGHTS = ("mu", "c_times_mu")

# Upper bound on hint widenings before falling back to pole-based seeding.
_HINT_EXPANSIONS = 6


@dataclass(frozen=True)
class Atom:
    """One atom of the Clark data: position t, mass mu and coupling c."""

    t: CertReal
    mu: CertReal
    c: CertReal
    cmu: CertReal = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "cmu", self.c * self.mu)


@dataclass(frozen=True)
class ClarkSystem:
    """
    Finite atomic data {(t_n, mu_n, c_n)}, indexed by creation order n = 1..N.

    The positions must be pairwise distinct with certainty. Caps such as
    mu_n < 2^-n are properties of committed construction stages and are
    checked by the construction, not here.
    """

    atoms: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "atoms", tuple(self.atoms))
        order = sorted(range(len(self.atoms)), key=lambda i: self.atoms[i].t.mid)
        for a, b in zip(order, order[1:]):
            if not self.atoms[a].t.certainly_lt(self.atoms[b].t):
                raise DomainError(
                    f"Atoms {a + 1} and {b + 1} are not certifiably distinct."
                )
        object.__setattr__(self, "_order", tuple(order))

    @classmethod
    def from_values(cls, triples, bits=256):
        """Builds a system from (t, mu, c) triples of plain numbers."""
        return cls(
            tuple(
                Atom(CertReal(t, bits=bits), CertReal(mu, bits=bits), CertReal(c, bits=bits))
                for t, mu, c in triples
            )
        )

    @property
    def N(self):
        return len(self.atoms)

    def atom(self, n):
        """Returns the atom with 1-based index n."""
        if not 1 <= n <= len(self.atoms):
            raise IndexError(f"Atom index {n} out of range 1..{len(self.atoms)}.")
        return self.atoms[n - 1]

    def with_atom(self, t, mu, c):
        return ClarkSystem(self.atoms + (Atom(t, mu, c),))

    def prefix(self, n):
        """The system made of the first n atoms."""
        return ClarkSystem(self.atoms[:n])

    def sorted_poles(self):
        """Atom positions in increasing order, as (t, n) pairs."""
        return [(self.atoms[i].t, i + 1) for i in self._order]

    def total_mass(self):
        total = CertReal(0)
        for atom in self.atoms:
            total = total + atom.mu
        return total


def _as_complex(z):
    if isinstance(z, CertComplex):
        return z
    if isinstance(z, CertReal):
        return CertComplex(z, CertReal(0, bits=z.bits))
    return CertComplex(z)


def _overlapping_atoms(system, z):
    """Atoms whose pole cannot be separated from z with certainty."""
    if isinstance(z, CertComplex):
        if not z.im.contains_zero():
            return []
        x = z.re
    else:
        x = z
    return [n for n, a in enumerate(system.atoms, start=1) if a.t.overlaps(x)]


def _weight(atom, weights):
    return atom.mu if weights == "mu" else atom.cmu


def real_sum(system, x, weights="mu", skip=None):
    """
    sum w_n / (t_n - x) for real x, leaving out atom `skip` (1-based).

    Raises:
        PoleError: If x overlaps a pole that is not skipped.
    """
    total = CertReal(0, bits=x.bits)
    for n, atom in enumerate(system.atoms, start=1):
        if n == skip:
            continue
        d = atom.t - x
        if d.contains_zero():
            raise PoleError(n)
        total = total + _weight(atom, weights) / d
    return total


def _complex_sum(system, z, weights, skip=None):
    total = CertComplex(0, 0, bits=z.bits)
    for n, atom in enumerate(system.atoms, start=1):
        if n == skip:
            continue
        d = CertComplex(atom.t - z.re, -z.im)
        if d.re.contains_zero() and d.im.contains_zero():
            raise PoleError(n)
        total = total + _weight(atom, weights) / d
    return total


def eval_cauchy_sum(system, z, weights="mu"):
    """
    Evaluates sum w_n / (t_n - z) with w_n = mu_n or c_n mu_n.

    Args:
        system (ClarkSystem): The atomic data.
        z (CertComplex | CertReal): Evaluation point.
        weights (str): "mu" or "c_times_mu".

    Returns:
        CertComplex: Enclosure of the sum.

    Raises:
        PoleError: If z coincides (up to certification) with some t_n.
    """
    if weights not in WEIGHTS:
        raise ValueError(f"weights must be one of {WEIGHTS}, got '{weights}'.")
    if isinstance(z, CertReal):
        return CertComplex(real_sum(system, z, weights), CertReal(0, bits=z.bits))
    return _complex_sum(system, _as_complex(z), weights)


def eval_H(system, x):
    """H_N(x) = 1 + sum c_n mu_n / (t_n - x) on the real line."""
    return 1 + real_sum(system, x, "c_times_mu")


def eval_H_derivative(system, x):
    """H_N'(x) = sum c_n mu_n / (t_n - x)^2, positive off the poles."""
    total = CertReal(0, bits=x.bits)
    for n, atom in enumerate(system.atoms, start=1):
        d = atom.t - x
        if d.contains_zero():
            raise PoleError(n)
        total = total + atom.cmu / d.square()
    return total


def eval_inner(system, z):
    """
    Evaluates theta_N(z) = (S_N(z) - i) / (S_N(z) + i).

    On the real line the formula is rearranged to ((S^2 - 1) - 2iS) / (S^2 + 1),
    whose enclosure stays tight around the unit circle.

    Raises:
        DomainError: If z lies in the open lower half-plane.
        PoleError: At an atom; the exception carries the limit value 1.
    """
    if isinstance(z, CertComplex) and z.im.is_negative():
        raise DomainError("theta_N is evaluated in the closed upper half-plane only.")
    try:
        if isinstance(z, CertReal):
            s = real_sum(system, z, "mu")
            s2 = s.square()
            denom = s2 + 1
            return CertComplex((s2 - 1) / denom, -2 * s / denom)
        s = _complex_sum(system, _as_complex(z), "mu")
    except PoleError as e:
        raise PoleError(e.index, limit=CertComplex(1, 0, bits=z.bits)) from None
    return (s - CertComplex(0, 1)) / (s + CertComplex(0, 1))


def inner_derivative_at_atom(system, n):
    """|theta_N'(t_n)| = 2 / mu_n."""
    return 2 / system.atom(n).mu


def pole_near(system, z):
    """
    The atom whose pole z cannot be separated from, if any.

    Returns:
        int | None: 1-based atom index, or None when z is clear of every pole.

    Raises:
        PoleError: If z overlaps two poles at once.
    """
    near = _overlapping_atoms(system, z)
    if not near:
        return None
    if len(near) > 1:
        raise PoleError(near[0])
    return near[0]


def coefficient_sum(system, z, coeffs, skip=None):
    """sum a_n mu_n / (t_n - z) for coefficients a_n (CertComplex or CertReal)."""
    zc = _as_complex(z)
    total = CertComplex(0, 0, bits=zc.bits)
    for n, (atom, a) in enumerate(zip(system.atoms, coeffs), start=1):
        if n == skip:
            continue
        d = CertComplex(atom.t - zc.re, -zc.im)
        if d.contains_zero():
            raise PoleError(n)
        total = total + (a * atom.mu) / d
    return total


def _removable_parts(system, z):
    """
    Splits the sums around the single atom m that z may coincide with.

    Returns:
        tuple: (m, d, Q, R) with d = t_m - z, Q = sum_{n != m} c_n mu_n/(t_n - z)
            and R = sum_{n != m} mu_n/(t_n - z), or None when z is clear of
            every pole.
    """
    m = pole_near(system, z)
    if m is None:
        return None
    zc = _as_complex(z)
    d = CertComplex(system.atom(m).t - zc.re, -zc.im)
    q = _complex_sum(system, zc, "c_times_mu", skip=m)
    r = _complex_sum(system, zc, "mu", skip=m)
    return m, d, q, r


def one_minus_inner(system, z):
    """
    1 - theta_N(z) = 2i / (S_N(z) + i), continued through the atoms.

    At an atom t_m the removable form 2i d / (mu_m + d (R + i)) is used,
    which vanishes at d = 0.
    """
    parts = _removable_parts(system, z)
    two_i = CertComplex(0, 2, bits=_as_complex(z).bits)
    if parts is None:
        s = eval_cauchy_sum(system, z, "mu")
        return two_i / (s + CertComplex(0, 1))
    m, d, _, r = parts
    return two_i * d / (system.atom(m).mu + d * (r + CertComplex(0, 1)))


def eval_phi(system, z):
    """
    Evaluates phi_N(z) = (1 - theta_N(z)) H_N(z) = 2i H_N(z) / (S_N(z) + i).

    Near an atom t_m the numerator and denominator are multiplied by
    (t_m - z), giving 2i (c_m mu_m + d (1 + Q)) / (mu_m + d (R + i)), so the
    value at t_m is the finite limit 2i c_m.
    """
    zc = _as_complex(z)
    parts = _removable_parts(system, z)
    two_i = CertComplex(0, 2, bits=zc.bits)
    if parts is None:
        h = 1 + _complex_sum(system, zc, "c_times_mu")
        s = _complex_sum(system, zc, "mu")
        return two_i * h / (s + CertComplex(0, 1))
    m, d, q, r = parts
    atom = system.atom(m)
    num = atom.cmu + d * (1 + q)
    den = atom.mu + d * (r + CertComplex(0, 1))
    return two_i * num / den


# --------------------------------------------------------------------- zeros


@dataclass(frozen=True)
class Zero:
    """
    One certified solution of H(x) = level.

    Attributes:
        lam (CertReal): Enclosure of the solution (the hull of the bracket).
        bracket (tuple): Exact points (a, b) with H(a) < level < H(b) certified.
        interval_index (int): k such that the solution lies between the k-th
            and (k+1)-th smallest poles (k = K means right of all poles).
    """

    lam: CertReal
    bracket: tuple
    interval_index: int


@dataclass(frozen=True)
class ZeroSet:
    """
    The K solutions of H(x) = level for a K-pole bracket, in increasing order.

    `labels` carries the construction's enumeration lambda_1, ..., lambda_K
    (label of the zero at each position); it defaults to positional labels.
    """

    zeros: tuple
    poles: tuple
    level: CertReal
    labels: tuple = None

    def __post_init__(self):
        object.__setattr__(self, "zeros", tuple(self.zeros))
        object.__setattr__(self, "poles", tuple(self.poles))
        if self.labels is None:
            object.__setattr__(self, "labels", tuple(range(1, len(self.zeros) + 1)))
        else:
            object.__setattr__(self, "labels", tuple(self.labels))

    def __len__(self):
        return len(self.zeros)

    def lambdas(self):
        return [z.lam for z in self.zeros]

    def position_of(self, label):
        try:
            return self.labels.index(label)
        except ValueError:
            raise IndexError(f"No zero labelled {label}.") from None

    def by_label(self, label):
        return self.zeros[self.position_of(label)]

    def lam(self, label):
        """Enclosure of the zero labelled `label`."""
        return self.by_label(label).lam

    def with_labels(self, labels):
        return ZeroSet(self.zeros, self.poles, self.level, tuple(labels))

    def in_label_order(self):
        """(label, Zero) pairs sorted by label."""
        return sorted(zip(self.labels, self.zeros), key=lambda p: p[0])


def _sign(value):
    if value.is_positive():
        return 1
    if value.is_negative():
        return -1
    return 0


def _point(value, bits):
    """An exact dyadic point inside `value` (its exact midpoint)."""
    return value.midpoint().with_bits(bits)


def _g(system, x, level, work=None):
    """H(x) - level, evaluated at `work` bits (all operands re-tagged)."""
    if work is None:
        return eval_H(system, x) - level
    x = x.with_bits(work)
    total = 1 - level.with_bits(work)
    for n, atom in enumerate(system.atoms, start=1):
        d = atom.t.with_bits(work) - x
        if d.contains_zero():
            raise PoleError(n)
        total = total + atom.cmu.with_bits(work) / d
    return total


def _sign_at(system, x, level, bits, work=None):
    """Certified sign of H(x) - level, trying a cheaper precision first."""
    if work is not None and work < bits:
        s = _sign(_g(system, x, level, work))
        if s:
            return s
    return _sign(_g(system, x, level, bits))


def _rightmost_upper(system, level, left, bits):
    """A point right of every pole where H - level is certifiably positive."""
    step = CertReal(1, bits=bits)
    for _ in range(128):
        # H tends to 1 > level at infinity, so doubling the step terminates.
        candidate = _point(left.upper() + step, bits)
        if _sign_at(system, candidate, level, bits) > 0:
            return candidate
        step = step * 2
    raise PrecisionExhausted("Could not bound the rightmost zero.", bits=bits)


def _seed_bracket(system, level, left, right, bits):
    """
    Finds a < b inside (left, right) with a certified sign change.

    `left` and `right` are pole enclosures (right is None for the interval
    right of every pole). The offsets from the poles are halved until both
    signs certify.
    """
    if right is None:
        b = _rightmost_upper(system, level, left, bits)
        eta_a = (b - left.upper()) / 2
        eta_b = None
    else:
        gap = right.lower() - left.upper()
        if not gap.is_positive():
            raise PrecisionExhausted("Consecutive poles are not separated.", bits=bits)
        eta_a = gap / 4
        eta_b = gap / 4
    # H - level runs from -inf just right of a pole to +inf just left of the next.
    sa = sb = 0
    for _ in range(bits + 64):
        a = _point(left.upper() + eta_a, bits)
        if right is not None:
            b = _point(right.lower() - eta_b, bits)
        if sa >= 0:
            sa = _sign_at(system, a, level, bits)
        if sb <= 0:
            sb = _sign_at(system, b, level, bits)
        if sa < 0 and sb > 0:
            return a, b
        # Move only the ends whose sign is still wrong or undecided.
        if sa >= 0:
            eta_a = eta_a / 2
        if right is not None and sb <= 0:
            eta_b = eta_b / 2
    raise PrecisionExhausted("Bracket signs could not be certified.", bits=bits)


def _hint_bracket(system, level, hint, left, right, bits):
    """
    Tries brackets around `hint`, widening by 16 each attempt.

    An end that would cross a pole is replaced by the midpoint between the
    pole and the hint, so the bracket always stays inside the interval.
    """
    radius = max(hint.rad, abs(hint.mid) * mpf(2) ** (8 - bits), mpf(2) ** (-bits))
    r = CertReal(radius, bits=bits)
    lo_end = hint.lower().with_bits(bits)
    hi_end = hint.upper().with_bits(bits)
    for _ in range(_HINT_EXPANSIONS):
        a = _point(lo_end - r, bits)
        # Clamp to the pole side.
        if not left.certainly_lt(a):
            a = _point(left.upper().hull(lo_end), bits)
        b = _point(hi_end + r, bits)
        if right is not None and not b.certainly_lt(right):
            b = _point(right.lower().hull(hi_end), bits)
        if not (left.certainly_lt(a) and (right is None or b.certainly_lt(right))):
            return None
        if _sign_at(system, a, level, bits) < 0 and _sign_at(system, b, level, bits) > 0:
            return a, b
        r = r * 16
    return None


def _work_bits(a, b, bits):
    """Precision sufficient to split [a, b] once, with a safety margin."""
    width = (b - a).hi
    if width <= 0:
        return bits
    scale = max(mpf(1), abs(a.mid))
    return min(bits, max(64, int(mpmath.mag(scale / width)) + 64))


def _bisect(system, level, a, b, refine, bits):
    steps = 0
    limit = 4 * bits + 256
    while steps < limit:
        if (b - a).hi <= refine:
            break
        m = _point(a.hull(b), bits)
        # Short brackets near the root need fewer bits than the whole run.
        s = _sign_at(system, m, level, bits, _work_bits(a, b, bits))
        if s > 0:
            b = m
        elif s < 0:
            a = m
        else:
            # Undecidable at full precision; [a, b] is still a valid bracket.
            break
        steps += 1
    return a, b, steps


def _check_inputs(system, level):
    if not level.is_nonnegative() or not level.certainly_lt(1):
        raise DomainError("The level must lie in [0, 1).")
    for n, atom in enumerate(system.atoms, start=1):
        if not atom.cmu.is_positive():
            raise DomainError(f"Atom {n} has no certified positive coupling c_n mu_n.")


def _context_for(level, ctx):
    if ctx is not None:
        return ctx
    bits = level.bits if isinstance(level, CertReal) else 256
    return PrecisionContext(bits=max(bits, 16), max_bits=max(bits, 16))


def solve_interval(system, level, k, ctx=None, hint=None, refine=None):
    """
    Solves H_N(x) = level in the k-th inter-pole interval only.

    Args:
        system (ClarkSystem): Atoms with c_n mu_n > 0.
        level (CertReal): Target level in [0, 1).
        k (int): 1-based interval index; interval k lies right of the k-th
            smallest pole (k = K is the unbounded one).
        ctx (PrecisionContext, optional): Working precision.
        hint (CertReal, optional): Unverified guess for the solution.
        refine (mpf, optional): Bracket width at which bisection stops.

    Returns:
        Zero: The certified solution.
    """
    ctx = _context_for(level, ctx)
    bits = ctx.bits
    level = ctx.lift(level)
    _check_inputs(system, level)
    poles = [t for t, _ in system.sorted_poles()]
    if not 1 <= k <= len(poles):
        raise IndexError(f"Interval index {k} out of range 1..{len(poles)}.")
    left = poles[k - 1]
    right = poles[k] if k < len(poles) else None
    # A hint from the previous stage usually saves the blind search.
    bracket = None
    if hint is not None and left.certainly_lt(hint) and (right is None or hint.certainly_lt(right)):
        bracket = _hint_bracket(system, level, hint, left, right, bits)
    if bracket is None:
        bracket = _seed_bracket(system, level, left, right, bits)
    a, b = bracket
    tol = refine
    if tol is None:
        # Stop a few ulps short of the working precision.
        tol = max(mpf(1), abs(a.mid)) * mpf(2) ** (8 - bits)
    a, b, steps = _bisect(system, level, a, b, tol, bits)
    logger.debug("Interval %d: %d bisection steps at %d bits.", k, steps, bits)
    return Zero(lam=a.hull(b), bracket=(a, b), interval_index=k)


def solve_level_set(system, level, ctx=None, hints=None, refine=None):
    """
    Solves H_N(x) = level for every gap between poles.

    Args:
        system (ClarkSystem): Atoms with c_n > 0.
        level (CertReal): Target level in [0, 1).
        ctx (PrecisionContext, optional): Working precision. Defaults to the
            precision of `level`.
        hints (list, optional): CertReal guesses for the zeros; a guess is used
            for the gap that certainly contains it. Invalid hints fall back to
            seeding from the poles.
        refine (mpf, optional): Absolute bracket width at which bisection
            stops. Defaults to 2^-(bits-8) * max(1, |x|).

    Returns:
        ZeroSet: One zero per interval (p_k, p_k+1) and one right of the last
            pole, each with a certified sign-change bracket.

    Raises:
        DomainError: If some c_n is not positive or the level is not in [0, 1).
        PrecisionExhausted: If a bracket cannot be certified.
    """
    ctx = _context_for(level, ctx)
    level = ctx.lift(level)
    _check_inputs(system, level)
    poles = [t for t, _ in system.sorted_poles()]
    hints = list(hints or [])
    zeros = []
    for k, left in enumerate(poles, start=1):
        right = poles[k] if k < len(poles) else None
        hint = next(
            (
                h
                for h in hints
                if left.certainly_lt(h) and (right is None or h.certainly_lt(right))
            ),
            None,
        )
        zeros.append(solve_interval(system, level, k, ctx, hint=hint, refine=refine))
    logger.debug("Solved %d zeros at %d bits.", len(zeros), ctx.bits)
    return ZeroSet(tuple(zeros), tuple(poles), level)


@dataclass(frozen=True)
class ZeroMatch:
    """
    Correspondence between the zeros of two stages.

    Attributes:
        pairs (dict): Old label -> position of the matching new zero.
        unmatched (tuple): Positions of new zeros without an old partner.
    """

    pairs: dict
    unmatched: tuple

    def labelled(self, new, fresh_labels):
        """
        Returns `new` labelled by continuity: matched zeros inherit the old
        label, unmatched zeros take labels from `fresh_labels` in order.
        """
        labels = [None] * len(new)
        for label, pos in self.pairs.items():
            labels[pos] = label
        fresh = iter(fresh_labels)
        for pos in self.unmatched:
            labels[pos] = next(fresh)
        return new.with_labels(labels)


def match_zeros(old, new):
    """
    Pairs each old zero with the new zero in the same inter-pole interval.

    The new pole set must be the old one, possibly with one extra pole. When
    the extra pole splits an interval, the old zero follows the side of the
    new pole it lies on.

    Raises:
        AmbiguousMatch: If the pole sets are not nested (resolvable=False) or
            an old zero cannot be placed relative to the new pole
            (resolvable=True).
    """
    extra = len(new.poles) - len(old.poles)
    if extra not in (0, 1):
        raise AmbiguousMatch("Pole sets differ by more than one pole.", resolvable=False)
    # Position of each old pole among the new ones.
    mapping = []
    for p in old.poles:
        hits = [i for i, q in enumerate(new.poles) if q.overlaps(p)]
        if len(hits) != 1:
            raise AmbiguousMatch("Old poles are not a subset of the new poles.", resolvable=False)
        mapping.append(hits[0])
    if len(set(mapping)) != len(mapping) or mapping != sorted(mapping):
        raise AmbiguousMatch("Pole correspondence is not order preserving.", resolvable=False)
    spare = [i for i in range(len(new.poles)) if i not in mapping]
    if len(spare) != extra:
        raise AmbiguousMatch("Old poles are not a subset of the new poles.", resolvable=False)
    e = spare[0] if spare else None
    # e: position of the new pole, if any

    pairs = {}
    for label, zero in zip(old.labels, old.zeros):
        a = mapping[zero.interval_index - 1]
        target = a + 1
        # The new pole split this zero's interval.
        if e is not None and e == a + 1:
            split = new.poles[e]
            if zero.lam.certainly_lt(split):
                target = a + 1
            elif zero.lam.certainly_gt(split):
                target = e + 1
            else:
                raise AmbiguousMatch(
                    f"Zero {label} cannot be placed relative to the new pole.",
                    resolvable=True,
                )
        pairs[label] = target - 1
    used = set(pairs.values())
    if len(used) != len(pairs):
        raise AmbiguousMatch("Two old zeros map to the same new zero.", resolvable=False)
    unmatched = tuple(i for i in range(len(new.zeros)) if i not in used)
    return ZeroMatch(pairs=pairs, unmatched=unmatched)


def nearest_zero(zeros, point):
    """
    Position of the zero certifiably nearest to `point`.

    Returns:
        int | None: Position in `zeros`, or None when the two best distances
            cannot be ordered.
    """
    dists = [abs(z.lam - point) for z in zeros.zeros]
    best = min(range(len(dists)), key=lambda i: dists[i].mid)
    for i, d in enumerate(dists):
        if i != best and not dists[best].certainly_lt(d):
            return None
    return best
