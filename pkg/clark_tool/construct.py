# -*- coding: utf-8 -*-
"""
The inductive construction of the atomic data (t_N, mu_N, c_N).

Stage N starts from the committed stage N-1 and

1. picks a level epsilon = mu^2 (mu a power of two), takes t_N as the solution
   of H_N-1(x) = epsilon next to lambda_l(N)^(N-1), and takes the first
   epsilon on the shrink grid where the epsilon-side certificates pass;
2. picks c_N (again a power of two), re-solves and matches the zeros of H_N,
   and takes the largest c_N for which the coupling certificates pass, so
   that doubling the committed c_N fails;
3. evaluates the full certificate set once more at the final precision and
   commits the stage.

When a verdict cannot be certified, the whole stage is repeated at a higher
precision. `evaluate_stage` is also what `verify` replays, so a saved state is
re-checked with exactly the same inequalities.

Both searches gallop along their grid and then bisect, since every check
only gets easier as epsilon or c_N shrinks. Trials never go below what the
current precision can resolve; running out of grid raises the precision.
"""
import logging
from dataclasses import dataclass, field
from fractions import Fraction

import mpmath

from .certreal import CertReal, Ordering, PrecisionContext, compare_certified, log2_estimate
from .clark import (
    basis_constant,
    frame_sigma_min,
    pairwise_gap,
    perturbation_norm_bound,
    stage_difference_bound,
)
from .errors import (
    AmbiguousMatch,
    CertificateFailure,
    ConfigError,
    IterationCap,
    PoleError,
    PrecisionExhausted,
    SingularFrame,
    TieBreak,
)
from .herglotz import (
    Atom,
    ClarkSystem,
    eval_H,
    eval_H_derivative,
    eval_phi,
    match_zeros,
    nearest_zero,
    solve_interval,
    solve_level_set,
)
from .model import ConstructionState

logger = logging.getLogger(__name__)

BASE_DEFAULTS = (Fraction(1, 2), Fraction(1, 4), Fraction(1, 8))
DEFAULT_ITERATION_CAP = 10_000

# Grid spacing of the shrink searches: mu = 2^-k moves k by 2 and c = 2^-m
# moves m by 4, so both epsilon and c shrink by a factor 16 per iteration.
MU_STEP = 2
C_STEP = 4

# Undecidable trials tolerated in one search before asking for precision.
UNDECIDED_LIMIT = 3

CERTIFICATE_NAMES = (
    "eps_cap",
    "bbb",
    "mu_sqrt",
    "cap_mu",
    "t_level",
    "sm",
    "cap_c",
    "dist0",
    "lambda_drift",
    "dist",
    "dist2",
    "st",
    "st1",
    "st1_sep",
    "phi_trace",
    "lambda_range",
)


# ------------------------------------------------------------------- schedule


@dataclass(frozen=True)
class Schedule:
    """
    The enumeration N -> l(N) < N deciding which old zero gets a partner.

    Attributes:
        rule (str): "triangular" (1, 1, 2, 1, 2, 3, ...) or "custom".
        values (tuple): For "custom", values[i] is l(i + 2).
    """

    rule: str = "triangular"
    values: tuple = ()

    def __post_init__(self):
        if self.rule not in ("triangular", "custom"):
            raise ConfigError(f"Unknown schedule rule '{self.rule}'.")
        object.__setattr__(self, "values", tuple(int(v) for v in self.values))
        if self.rule == "custom":
            if not self.values:
                raise ConfigError("A custom schedule needs at least one value.")
            for i, v in enumerate(self.values):
                if not 1 <= v < i + 2:
                    raise ConfigError(f"l({i + 2}) = {v} must satisfy 1 <= l(N) < N.")

    @classmethod
    def parse(cls, text):
        """
        Parses "triangular", "custom:1,1,2" or a bare list "1,1,2".

        Raises:
            ConfigError: On anything else.
        """
        text = str(text).strip()
        if text.lower() == "triangular":
            return cls()
        if text.lower().startswith("custom:"):
            text = text.split(":", 1)[1]
        try:
            values = [int(v) for v in text.split(",") if v.strip()]
        except ValueError:
            raise ConfigError(f"Cannot parse schedule '{text}'.") from None
        return cls("custom", tuple(values))

    def target(self, N):
        """l(N) for N >= 2."""
        if N < 2:
            raise ValueError("The schedule starts at stage 2.")
        if self.rule == "triangular":
            p = N - 2
            b = 1
            while b * (b + 1) // 2 <= p:
                b += 1
            return p - b * (b - 1) // 2 + 1
        if N - 2 >= len(self.values):
            raise ConfigError(f"The custom schedule has no entry for stage {N}.")
        return self.values[N - 2]

    def reach(self):
        """Last stage the schedule defines (None when unbounded)."""
        return None if self.rule == "triangular" else len(self.values) + 1

    def to_text(self):
        if self.rule == "triangular":
            return "triangular"
        return "custom:" + ",".join(str(v) for v in self.values)


# ---------------------------------------------------------------- base stage


@dataclass(frozen=True)
class BaseParams:
    """Stage-1 data (t1, mu1, c1)."""

    t1: CertReal
    mu1: CertReal
    c1: CertReal

    @classmethod
    def from_values(cls, t1=None, mu1=None, c1=None, bits=256):
        """Builds the base from numbers or strings such as "0.5" or "2^-3"."""
        defaults = BASE_DEFAULTS
        values = [defaults[i] if v is None else v for i, v in enumerate((t1, mu1, c1))]
        return cls(*(CertReal(v, bits=bits) for v in values))

    def validate(self):
        """
        Checks 0 < t1 < 1, 0 < mu1 < 1/2, 0 < c1 < 1/2 and t1 + c1 mu1 < 1.

        Raises:
            ConfigError: On the first violated cap.
        """
        half = CertReal(Fraction(1, 2))
        checks = [
            (self.t1.is_positive() and self.t1.certainly_lt(1), "0 < t1 < 1"),
            (self.mu1.is_positive() and self.mu1.certainly_lt(half), "0 < mu1 < 1/2"),
            (self.c1.is_positive() and self.c1.certainly_lt(half), "0 < c1 < 1/2"),
            ((self.t1 + self.c1 * self.mu1).certainly_lt(1), "t1 + c1*mu1 < 1"),
        ]
        for ok, text in checks:
            if not ok:
                raise ConfigError(f"Base stage violates {text}.")
        return self


# --------------------------------------------------------------- certificates


@dataclass(frozen=True)
class Certificate:
    """
    One certified strict inequality lhs < rhs.

    Attributes:
        name (str): Family name (see CERTIFICATE_NAMES).
        lhs_upper (CertReal): Exact upper end of the left-hand side.
        rhs_lower (CertReal): Exact lower end of the right-hand side.
        precision_bits (int): Working precision of the evaluation.
        index (int, optional): j, n or m the certificate refers to.
        side (str, optional): "lower" or "upper" for two-sided families.
        status (str): "pass", "fail" or "undecidable".
    """

    name: str
    lhs_upper: CertReal
    rhs_lower: CertReal
    precision_bits: int
    index: int = None
    side: str = None
    status: str = "pass"

    @property
    def margin(self):
        return self.rhs_lower - self.lhs_upper

    @property
    def passed(self):
        return self.status == "pass"

    @property
    def label(self):
        parts = []
        if self.index is not None:
            parts.append(f"{_INDEX_LETTER.get(self.name, 'n')}={self.index}")
        if self.side is not None:
            parts.append(self.side)
        return f"{self.name}[{','.join(parts)}]" if parts else self.name


_INDEX_LETTER = {"dist0": "j", "lambda_drift": "j", "st": "j", "st1_sep": "j", "phi_trace": "m"}

_STATUS = {Ordering.LESS: "pass", Ordering.GREATER: "fail", Ordering.UNDECIDABLE: "undecidable"}


def certify_lt(name, lhs, rhs, bits, index=None, side=None):
    """Builds the Certificate for lhs < rhs from two enclosures."""
    lhs = lhs if isinstance(lhs, CertReal) else CertReal(lhs, bits=bits)
    rhs = rhs if isinstance(rhs, CertReal) else CertReal(rhs, bits=bits)
    status = _STATUS[compare_certified(lhs, rhs)]
    return Certificate(name, lhs.upper(), rhs.lower(), bits, index, side, status)


def _any_undecided(certificates):
    return any(c.status == "undecidable" for c in certificates)


# --------------------------------------------------------------- stage record


@dataclass(frozen=True)
class StageRecord:
    """
    Everything committed at stage N.

    `epsilon` and `schedule_target` are None for the base stage.
    """

    N: int
    epsilon: CertReal
    t_new: CertReal
    mu_new: CertReal
    c_new: CertReal
    delta: CertReal
    basis_const: CertReal
    sigma_min: CertReal
    schedule_target: int
    precision_bits: int
    zeros: object
    certificates: tuple = field(default_factory=tuple)

    @property
    def passed(self):
        return all(c.passed for c in self.certificates)

    def failures(self):
        return [c for c in self.certificates if not c.passed]

    def certificate(self, name, index=None, side=None):
        for c in self.certificates:
            if c.name == name and c.index == index and c.side == side:
                return c
        raise KeyError(f"Stage {self.N} has no certificate {name}[{index}].")

    def bounds(self, name):
        """index -> lhs_upper for one certificate family."""
        return {c.index: c.lhs_upper for c in self.certificates if c.name == name}


@dataclass(frozen=True)
class StageInputs:
    """
    The committed stage N-1 as seen by stage N.

    The zeros are re-solved at the stage's precision, and delta is recomputed
    from them, so construction and verification see identical inputs.
    """

    N: int
    system: ClarkSystem
    zeros: object
    basis_const: CertReal
    delta: CertReal
    target: int

    @classmethod
    def build(cls, system, zeros, basis_const, target, ctx):
        if zeros.level.bits != ctx.bits:
            zeros = refresh_zeros(system, zeros, ctx)
        return cls(
            N=system.N + 1,
            system=system,
            zeros=zeros,
            basis_const=basis_const,
            delta=min_distance(system, zeros),
            target=target,
        )

    @classmethod
    def from_state(cls, state, ctx):
        last = state.last_record
        return cls.build(
            state.system, last.zeros, last.basis_const, state.schedule.target(state.N + 1), ctx
        )


def refresh_zeros(system, zeros, ctx):
    """Re-solves a labelled zero set at ctx.bits, keeping its labels."""
    fresh = solve_level_set(
        system, CertReal(0, bits=ctx.bits), ctx, hints=[z.lam for z in zeros.zeros]
    )
    return fresh.with_labels(zeros.labels)


def min_distance(system, zeros):
    """delta = min over zeros and atoms of |lambda_j - t_n|, as a lower point."""
    dists = [abs(z.lam - a.t) for z in zeros.zeros for a in system.atoms]
    return CertReal.minimum(dists).lower()


class _NeedBits(Exception):
    """Raised inside a stage when the working precision is too low for it."""

    def __init__(self, bits, k=None):
        super().__init__(bits)
        self.bits = bits
        self.k = k


def required_bits(scale):
    """Precision needed to resolve distances of size `scale` near the unit interval."""
    return int(1.25 * max(0, -log2_estimate(scale))) + 256


def _bits_for(ctx, scale):
    return min(required_bits(scale), ctx.max_bits)


def _in_reach(ctx, scale):
    return ctx.bits >= _bits_for(ctx, scale)


def _last_in_reach(lo, step, failed, bound, reach):
    """Largest grid index in (failed, bound) whose exponent is within reach, or None."""
    a, b = failed + 1, bound
    if a >= b or not reach(lo + a * step):
        return None
    while b - a > 1:
        mid = (a + b) // 2
        if reach(lo + mid * step):
            a = mid
        else:
            b = mid
    return a


def _grid_search(lo, step, accept, reach, cap):
    """
    Smallest exponent e = lo + i * step, 0 <= i <= cap, with accept(e) true.

    Pass/fail is monotone in e: every check gets easier as the exponent grows.
    The grid is tried at i = 0, 1, 3, 7, ... and the first passing trial is
    bisected against the last failing one, which finds the same exponent as
    a linear scan. Exponents outside reach(e) are never tried.

    Args:
        lo (int): First exponent.
        step (int): Grid spacing.
        accept (callable): e -> (bool, value).
        reach (callable): e -> bool, True for exponents the current
            precision can resolve (monotone: False from some e on).
        cap (int): Largest grid index.

    Returns:
        tuple: (e, value) on success, otherwise (None, i) with i the first
            grid index that was not tried.
    """
    failed, i = -1, 0
    found = None
    # Gallop: i = 0, 1, 3, 7, ...
    while found is None:
        if i > cap or not reach(lo + i * step):
            top = _last_in_reach(lo, step, failed, min(i, cap + 1), reach)
            if top is None:
                return None, failed + 1
            ok, value = accept(lo + top * step)
            if not ok:
                return None, top + 1
            found = (top, value)
            break
        ok, value = accept(lo + i * step)
        if ok:
            found = (i, value)
        else:
            failed, i = i, 2 * i + 1
    hit, value = found
    # Bisect between the last failing and the first passing index.
    while hit - failed > 1:
        mid = (hit + failed) // 2
        ok, candidate = accept(lo + mid * step)
        if ok:
            hit, value = mid, candidate
        else:
            failed = mid
    return lo + hit * step, value


class _UndecidedTally:
    """Counts trials with an undecidable verdict and gives up after a few."""

    def __init__(self, N, what, bits):
        self.N, self.what, self.bits = N, what, bits
        self.count = 0

    def __call__(self, certificates):
        if _any_undecided(certificates):
            self.count += 1
            if self.count >= UNDECIDED_LIMIT:
                raise PrecisionExhausted(
                    f"Stage {self.N}: {self.what} certificates undecidable.", bits=self.bits
                )


# ------------------------------------------------------------------ stage one


def evaluate_base(base, ctx):
    """Solves and certifies the one-atom stage."""
    bits = ctx.bits
    atom = Atom(ctx.lift(base.t1), ctx.lift(base.mu1), ctx.lift(base.c1))
    system = ClarkSystem((atom,))
    zeros = solve_level_set(system, CertReal(0, bits=bits), ctx)
    half = CertReal(Fraction(1, 2), bits=bits)
    certificates = (
        certify_lt("cap_mu", atom.mu, half, bits),
        certify_lt("cap_c", atom.c, half, bits),
        certify_lt("lambda_range", zeros.lam(1), CertReal(1, bits=bits), bits),
    )
    sigma = frame_sigma_min(system, zeros, bits)
    record = StageRecord(
        N=1,
        epsilon=None,
        t_new=atom.t,
        mu_new=atom.mu,
        c_new=atom.c,
        delta=min_distance(system, zeros),
        basis_const=basis_constant(system, zeros, sigma_min=sigma),
        sigma_min=sigma,
        schedule_target=None,
        precision_bits=bits,
        zeros=zeros,
        certificates=certificates,
    )
    return system, record


def init_stage1(base, ctx=None):
    """
    Commits the base stage: a single atom with lambda_1 = t1 + c1 mu1.

    Args:
        base (BaseParams): Stage-1 data.
        ctx (PrecisionContext, optional): Working precision.

    Returns:
        tuple: (ClarkSystem, StageRecord).

    Raises:
        ConfigError: If a base cap is violated.
    """
    base.validate()
    ctx = ctx or PrecisionContext()
    system, record = evaluate_base(base, ctx)
    if not record.passed:
        raise CertificateFailure(1, record.failures()[0])
    logger.info("Stage 1 committed: lambda_1 = %s.", record.zeros.lam(1))
    return system, record


# -------------------------------------------------------------- epsilon side


def select_t_new(inputs, epsilon, ctx, slope=None):
    """
    The solution of H_N-1(x) = epsilon nearest to lambda_l(N)^(N-1).

    Only the interval of lambda_l is solved. Every other solution lies beyond
    a pole, so the candidate is certainly nearest when it is closer to
    lambda_l than every pole. Otherwise all solutions are compared.

    Returns:
        CertReal: An exact point t_N inside the certified bracket.

    Raises:
        TieBreak: If two candidate distances cannot be ordered.
    """
    system = inputs.system
    zero = inputs.zeros.by_label(inputs.target)
    lam = zero.lam
    if slope is None:
        slope = eval_H_derivative(system, lam)
    hint = lam.hull(lam + 2 * epsilon / slope)
    found = solve_interval(system, epsilon, zero.interval_index, ctx, hint=hint)
    t = found.lam.midpoint().with_bits(ctx.bits)
    reach = CertReal.minimum([abs(lam - a.t) for a in system.atoms])
    if abs(t - lam).certainly_lt(reach):
        return t
    level_set = solve_level_set(system, epsilon, ctx)
    pos = nearest_zero(level_set, lam)
    if pos is None:
        raise TieBreak(f"Stage {inputs.N}: nearest solution is not certified.", bits=ctx.bits)
    return level_set.zeros[pos].lam.midpoint().with_bits(ctx.bits)


def _level_certificates(inputs, t_new, mu_new, epsilon, ctx):
    """The epsilon-side certificates that need no perturbation integral."""
    N, bits = inputs.N, ctx.bits
    p2 = ctx.power_of_two
    lam = inputs.zeros.lam(inputs.target)
    certs = [
        certify_lt("eps_cap", epsilon, p2(-2 * N - 4) / inputs.basis_const, bits),
        certify_lt("bbb", abs(t_new - lam), p2(-6 * N) * inputs.delta ** 3, bits),
        certify_lt("mu_sqrt", abs(mu_new.square() - epsilon), epsilon * p2(-(bits // 2)), bits),
        certify_lt("cap_mu", mu_new, p2(-N), bits),
    ]
    try:
        level_gap = abs(eval_H(inputs.system, t_new) - epsilon)
        certs.append(certify_lt("t_level", level_gap, epsilon / 2, bits))
    except PoleError:
        certs.append(Certificate("t_level", CertReal(1), CertReal(0), bits, status="fail"))
    return certs


def _sm_certificates(inputs, t_new, mu_new, ctx, screen=False):
    """The (sm) certificates; `screen` allows crude bounds that already pass."""
    N, bits = inputs.N, ctx.bits
    # theta_N does not depend on c_N.
    trial = inputs.system.with_atom(t_new, mu_new, CertReal(0, bits=bits))
    target = ctx.power_of_two(-2 * N) / inputs.basis_const
    certs, sm_bounds = [], {}
    for n in range(1, N):
        sm_bounds[n] = perturbation_norm_bound(
            inputs.system, trial, n, target=target if screen else None
        )
        certs.append(certify_lt("sm", sm_bounds[n], target, bits, index=n))
    return certs, sm_bounds


def epsilon_certificates(inputs, t_new, mu_new, epsilon, ctx):
    """
    Certificates that depend on (t_N, mu_N) only.

    Returns:
        tuple: (certificates, sm_bounds) with sm_bounds[n] the certified
            bound on ||(theta_N - theta_N-1) / (x - t_n)||.
    """
    certs = _level_certificates(inputs, t_new, mu_new, epsilon, ctx)
    sm_certs, sm_bounds = _sm_certificates(inputs, t_new, mu_new, ctx)
    return certs + sm_certs, sm_bounds


def _budgets_hold(inputs, mu_new, sm_bounds, ctx):
    """
    Internal budgets that shrinking c_N cannot repair.

    The (theta_N - theta_N-1) part of every stage difference must use at most
    half of its target, and the atom-N term of the pair gap at most a quarter.
    """
    N = inputs.N
    p2 = ctx.power_of_two
    st_target = p2(-N - 2) / inputs.basis_const
    for label, zero in inputs.zeros.in_label_order():
        g2 = CertReal(0, bits=ctx.bits)
        for n, atom in enumerate(inputs.system.atoms, start=1):
            g2 = g2 + abs(atom.cmu / (zero.lam - atom.t)) * sm_bounds[n]
        if not g2.certainly_lt(st_target / 2):
            return False
    pi = ctx.pi()
    return (64 * pi * mu_new ** 3).certainly_lt(p2(-2 * N - 4))


@dataclass(frozen=True)
class EpsilonChoice:
    epsilon: CertReal
    t_new: CertReal
    mu_new: CertReal
    sm_bounds: dict
    certificates: tuple
    k: int


def _start_exponent(inputs, slope, ctx):
    """Initial k for mu = 2^-k, about a factor 16 in epsilon above the prediction."""
    N = inputs.N
    p2 = ctx.power_of_two
    bbb = slope * p2(-6 * N) * inputs.delta ** 3
    cap = p2(-2 * N - 4) / inputs.basis_const
    predicted = CertReal.minimum([bbb, cap])
    return max(N + 1, -log2_estimate(predicted) // 2 - 2)


def choose_epsilon(inputs, ctx, iteration_cap=DEFAULT_ITERATION_CAP, start=None):
    """
    Finds the first epsilon = 4^-k on the shrink grid where every
    epsilon-side certificate passes.

    The grid is k = start, start + MU_STEP, ... (epsilon shrinks by 16 per
    step). It is searched by `_grid_search`; a trial evaluates the
    perturbation bounds only once the cheap level certificates pass.

    Args:
        inputs (StageInputs): The committed previous stage.
        ctx (PrecisionContext): Working precision.
        iteration_cap (int): Maximum number of grid steps.
        start (int, optional): Exponent k to resume from.

    Returns:
        EpsilonChoice: epsilon, t_N, mu_N = sqrt(epsilon) and the sm bounds.

    Raises:
        IterationCap: If no grid point within `iteration_cap` steps passes.
        PrecisionExhausted: After repeated undecidable verdicts.
    """
    slope = eval_H_derivative(inputs.system, inputs.zeros.lam(inputs.target))
    k0 = start if start is not None else _start_exponent(inputs, slope, ctx)
    tally = _UndecidedTally(inputs.N, "epsilon", ctx.bits)

    def attempt(k):
        mu = ctx.power_of_two(-k)
        epsilon = ctx.power_of_two(-2 * k)
        t_new = select_t_new(inputs, epsilon, ctx, slope)
        certs = _level_certificates(inputs, t_new, mu, epsilon, ctx)
        # Cheap level checks first, then the crude bounds, then the refined ones.
        if all(c.passed for c in certs):
            sm_certs, _ = _sm_certificates(inputs, t_new, mu, ctx, screen=True)
            if all(c.passed for c in sm_certs):
                sm_certs, sm_bounds = _sm_certificates(inputs, t_new, mu, ctx)
            certs += sm_certs
            if all(c.passed for c in sm_certs) and _budgets_hold(inputs, mu, sm_bounds, ctx):
                return True, EpsilonChoice(epsilon, t_new, mu, sm_bounds, tuple(certs), k)
        tally(certs)
        return False, None

    def reach(k):
        return _in_reach(ctx, ctx.power_of_two(-2 * k))

    k, found = _grid_search(k0, MU_STEP, attempt, reach, iteration_cap)
    if k is not None:
        logger.debug("Stage %d: epsilon = 2^-%d accepted.", inputs.N, 2 * k)
        return found
    if found > iteration_cap:
        raise IterationCap(f"Stage {inputs.N}: epsilon not found in {iteration_cap} shrinks.")
    k = k0 + found * MU_STEP
    raise _NeedBits(_bits_for(ctx, ctx.power_of_two(-2 * k)), k)


# ---------------------------------------------------------------- coupling


def solve_stage_zeros(inputs, system_new, ctx):
    """
    Solves H_N = 0 with first-order hints and labels the zeros by continuity.

    Raises:
        AmbiguousMatch: From `match_zeros`.
    """
    N = inputs.N
    atom = system_new.atom(N)
    bits = ctx.bits
    hints = []
    for zero in inputs.zeros.zeros:
        slope = eval_H_derivative(inputs.system, zero.lam)
        shift = atom.cmu / ((atom.t - zero.lam) * slope)
        hints.append((zero.lam - shift).midpoint())
    level = eval_H(inputs.system, atom.t)
    slope = eval_H_derivative(inputs.system, atom.t)
    # y (level + slope y) = c mu for the new zero t_N + y.
    disc = (level.square() + 4 * slope * atom.cmu).sqrt()
    y = ((disc - level) / (2 * slope)).midpoint()
    if y.is_positive():
        hints.append((atom.t + y / 4).hull(atom.t + 4 * y))
    zeros = solve_level_set(system_new, CertReal(0, bits=bits), ctx, hints=hints)
    return match_zeros(inputs.zeros, zeros).labelled(zeros, [N])


def coupling_certificates(inputs, system_new, zeros_new, sm_bounds, ctx):
    """Certificates that depend on c_N (through the zeros of H_N)."""
    N, l, bits = inputs.N, inputs.target, ctx.bits
    p2 = ctx.power_of_two
    A, delta = inputs.basis_const, inputs.delta
    atom = system_new.atom(N)
    old = inputs.zeros
    certs = [certify_lt("cap_c", atom.c, p2(-N), bits)]

    dist0_target = p2(-6 * N) * delta ** 3 / A
    for j in range(1, N):
        drift = abs(zeros_new.lam(j) - old.lam(j))
        certs.append(certify_lt("dist0", drift, dist0_target, bits, index=j))
        certs.append(certify_lt("lambda_drift", drift, p2(-N), bits, index=j))

    lam_n = zeros_new.lam(N)
    lam_l = zeros_new.lam(l)
    d_new = abs(lam_n - atom.t)
    certs.append(certify_lt("dist", atom.c / (2 * atom.mu), d_new, bits, side="lower"))
    certs.append(certify_lt("dist", d_new, abs(lam_l - atom.t), bits, side="upper"))
    certs.append(certify_lt("dist2", abs(lam_n - old.lam(l)), p2(-N) * delta ** 3, bits))

    st_target = p2(-N - 2) / A
    for j in range(1, N):
        bound = stage_difference_bound(
            inputs.system, system_new, old, zeros_new, j, sm_bounds=sm_bounds
        )
        certs.append(certify_lt("st", bound, st_target, bits, index=j))

    gap = pairwise_gap(system_new, zeros_new, l, N).gap
    certs.append(certify_lt("st1", gap, p2(-N - 1), bits))
    spread = abs(lam_l - lam_n).nth_root(3)
    for j in sorted({l, N}):
        lam_j = zeros_new.lam(j)
        nearest = CertReal.minimum([abs(a.t - lam_j) for a in inputs.system.atoms])
        certs.append(certify_lt("st1_sep", spread, nearest, bits, index=j))

    rel = p2(-(bits // 2))
    for m, a in enumerate(system_new.atoms, start=1):
        trace = abs(abs(eval_phi(system_new, a.t)) - 2 * a.c)
        certs.append(certify_lt("phi_trace", trace, 2 * a.c * rel, bits, index=m))
    return certs


@dataclass(frozen=True)
class CouplingChoice:
    c_new: CertReal
    zeros: object
    certificates: tuple


def _coupling_attempt(inputs, eps, m, ctx):
    c = ctx.power_of_two(-m)
    system_new = inputs.system.with_atom(eps.t_new, eps.mu_new, c)
    zeros = solve_stage_zeros(inputs, system_new, ctx)
    certs = coupling_certificates(inputs, system_new, zeros, eps.sm_bounds, ctx)
    return c, zeros, certs


def _start_coupling_exponent(inputs, eps, ctx):
    """Initial m for c = 2^-m, a factor 16 above the predicted coupling."""
    N = inputs.N
    p2 = ctx.power_of_two
    lam = inputs.zeros.lam(inputs.target)
    slope = eval_H_derivative(inputs.system, lam)
    d = abs(eps.t_new - lam)
    target = p2(-6 * N) * inputs.delta ** 3 / inputs.basis_const
    y = CertReal.minimum([d, target]) / 16
    c = y * (eps.epsilon + slope * y) / eps.mu_new
    return max(N + 1, -log2_estimate(c) - C_STEP)


def choose_c(inputs, eps, ctx, iteration_cap=DEFAULT_ITERATION_CAP):
    """
    The largest c_N = 2^-m, m > N, for which the coupling certificates pass.

    From the predicted exponent the search moves up the grid m, m + C_STEP,
    ... until a coupling passes, then narrows to single steps, so that
    doubling the committed c_N fails (or would break c_N < 2^-N). When the
    predicted exponent already passes, it moves down instead.

    Args:
        inputs (StageInputs): The committed previous stage.
        eps (EpsilonChoice): The accepted epsilon side.
        ctx (PrecisionContext): Working precision.

    Returns:
        CouplingChoice: c_N, the labelled zeros of H_N and the certificates.

    Raises:
        IterationCap, PrecisionExhausted, AmbiguousMatch.
    """
    N = inputs.N
    m0 = _start_coupling_exponent(inputs, eps, ctx)
    tally = _UndecidedTally(N, "coupling", ctx.bits)

    def attempt(m, lenient=False):
        try:
            c, zeros, certs = _coupling_attempt(inputs, eps, m, ctx)
        except (AmbiguousMatch, PoleError, SingularFrame):
            # Large couplings may move the zeros out of reach of the matching.
            if lenient:
                return False, None
            raise
        if all(x.passed for x in certs):
            return True, CouplingChoice(c, zeros, tuple(certs))
        if not lenient:
            tally(certs)
        return False, None

    def reach(m):
        return _in_reach(ctx, ctx.power_of_two(-m) * eps.mu_new / eps.epsilon)

    # The predicted coupling itself is out of reach: retry the stage with more bits.
    if not reach(m0):
        raise _NeedBits(_bits_for(ctx, ctx.power_of_two(-m0) * eps.mu_new / eps.epsilon), eps.k)
    ok, accepted = attempt(m0)
    if ok:
        # Gallop towards larger couplings; m = N is excluded since c_N < 2^-N.
        failed, hit = m0, m0
        drop = 1
        while True:
            failed = max(N, hit - drop)
            if failed == N:
                break
            ok, candidate = attempt(failed, lenient=True)
            if not ok:
                break
            hit, accepted = failed, candidate
            drop *= 2
    else:
        m, found = _grid_search(m0 + C_STEP, C_STEP, attempt, reach, iteration_cap - 1)
        if m is None:
            if found > iteration_cap - 1:
                raise IterationCap(f"Stage {N}: c_N not found in {iteration_cap} shrinks.")
            m = m0 + C_STEP * (found + 1)
            raise _NeedBits(_bits_for(ctx, ctx.power_of_two(-m) * eps.mu_new / eps.epsilon), eps.k)
        hit, accepted = m, found
        failed = m - C_STEP
    # Unit steps between the last failure and the first success.
    while hit - failed > 1:
        mid = (hit + failed) // 2
        ok, candidate = attempt(mid, lenient=True)
        if ok:
            hit, accepted = mid, candidate
        else:
            failed = mid
    logger.debug("Stage %d: c = 2^-%d accepted.", N, hit)
    return accepted


# --------------------------------------------------------------------- stages


def evaluate_stage(inputs, t_new, mu_new, c_new, ctx):
    """
    Recomputes every certificate of stage N from (t_N, mu_N, c_N).

    epsilon is taken as mu_N^2. Used both to commit a stage and to verify it.

    Raises:
        SingularFrame: If the eigenvector frame cannot be certified.
        AmbiguousMatch: If the zeros cannot be matched.
    """
    t_new, mu_new, c_new = ctx.lift(t_new), ctx.lift(mu_new), ctx.lift(c_new)
    epsilon = mu_new.square()
    # Always the refined perturbation bounds, never the screening ones.
    certs, sm_bounds = epsilon_certificates(inputs, t_new, mu_new, epsilon, ctx)
    system_new = inputs.system.with_atom(t_new, mu_new, c_new)
    zeros = solve_stage_zeros(inputs, system_new, ctx)
    certs += coupling_certificates(inputs, system_new, zeros, sm_bounds, ctx)
    sigma = frame_sigma_min(system_new, zeros, ctx.bits)
    record = StageRecord(
        N=inputs.N,
        epsilon=epsilon,
        t_new=t_new,
        mu_new=mu_new,
        c_new=c_new,
        delta=min_distance(system_new, zeros),
        basis_const=basis_constant(system_new, zeros, inputs.basis_const, sigma),
        sigma_min=sigma,
        schedule_target=inputs.target,
        precision_bits=ctx.bits,
        zeros=zeros,
        certificates=tuple(certs),
    )
    return system_new, record


def _escalate(ctx, N, error):
    try:
        return ctx.escalate()
    except PrecisionExhausted:
        raise PrecisionExhausted(
            f"Stage {N}: {error} (precision ceiling {ctx.max_bits} bits).", bits=ctx.bits
        ) from error


def advance(state, iteration_cap=DEFAULT_ITERATION_CAP):
    """
    Constructs and commits stage N = state.N + 1.

    Raises:
        CertificateFailure: If the final evaluation does not pass.
        PrecisionExhausted: If the precision ceiling is reached.
        IterationCap: If a shrink loop does not terminate.
    """
    N = state.N + 1
    ctx = state.ctx
    start = None
    while True:
        try:
            inputs = StageInputs.from_state(state, ctx)
            eps = choose_epsilon(inputs, ctx, iteration_cap, start)
            # A retry at higher precision resumes the epsilon search here.
            start = eps.k
            coupling = choose_c(inputs, eps, ctx, iteration_cap)
            system, record = evaluate_stage(inputs, eps.t_new, eps.mu_new, coupling.c_new, ctx)
        except _NeedBits as e:
            logger.info("Stage %d: raising precision to %d bits.", N, e.bits)
            ctx = ctx.at_least(e.bits)
            start = e.k
            continue
        # Everything below is a precision problem: repeat the stage with more bits.
        except SingularFrame as e:
            ctx = _escalate(ctx, N, e)
            continue
        except AmbiguousMatch as e:
            if not e.resolvable:
                raise
            ctx = _escalate(ctx, N, e)
            continue
        except PrecisionExhausted as e:
            if e.bits is not None and e.bits >= ctx.max_bits:
                raise
            ctx = _escalate(ctx, N, e)
            continue
        if not record.passed:
            raise CertificateFailure(N, record.failures()[0])
        state.ctx = ctx
        state.commit(system, record)
        logger.info(
            "Stage %d committed at %d bits (l = %d, A_N = %s).",
            N,
            ctx.bits,
            record.schedule_target,
            mpmath.nstr(record.basis_const.hi, 4),
        )
        return record


def extend(state, stages, iteration_cap=DEFAULT_ITERATION_CAP, on_stage=None):
    """Advances a committed state until it holds `stages` stages."""
    reach = state.schedule.reach()
    if reach is not None and stages > reach:
        raise ConfigError(f"The schedule only defines stages up to {reach}.")
    while state.N < stages:
        record = advance(state, iteration_cap)
        if on_stage is not None:
            on_stage(record)
    return state


def start(config, on_stage=None):
    """A ConstructionState holding the committed base stage of `config`."""
    if config.stages < 1:
        raise ConfigError("At least one stage is required.")
    base = config.base_params
    state = ConstructionState(config.schedule, base, config.precision)
    system, record = init_stage1(base, config.precision)
    state.commit(system, record)
    if on_stage is not None:
        on_stage(record)
    return state


def run(config, on_stage=None):
    """
    Runs the construction from the base stage.

    Args:
        config (RunConfig): Uses `stages`, `schedule`, `base_params`,
            `precision` and `iteration_cap`.
        on_stage (callable, optional): Called with each committed record.

    Returns:
        tuple: (ClarkSystem, list of StageRecord).
    """
    state = start(config, on_stage)
    extend(state, config.stages, config.iteration_cap, on_stage)
    return state.system, list(state.records)
