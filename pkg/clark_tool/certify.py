# -*- coding: utf-8 -*-
"""
Global statements assembled from committed stage certificates.

The limit objects theta, phi and f_j are never formed. Every statement about
them is a finite sum of certified stage bounds plus an analytic geometric
tail for the stages that were not constructed:

* the telescoped distance ||f_j^N - f_j|| (`tail_bound`),
* the distance between two limit eigenvectors (`limit_gap`),
* how well the frame vector at t_m is approximated by the f_j
  (`completeness_certificate`).

`verify_state` replays the whole construction from the atoms alone.
"""
import logging
from dataclasses import dataclass, field

import numpy as np

from .certreal import CertComplex, CertReal, PrecisionContext, pi_interval
from .clark import ell1_ratio
from .construct import BaseParams, Schedule, StageInputs, evaluate_base, evaluate_stage
from .diskop import cayley_point
from .errors import ClarkToolError, ConfigError, DomainError, NeedMoreStages
from .herglotz import eval_inner
from .linalg import solve_enclosure

logger = logging.getLogger(__name__)


def _stage_bound(record, name, index):
    try:
        return record.certificate(name, index).lhs_upper
    except KeyError:
        raise DomainError(
            f"Stage {record.N} carries no '{name}' certificate; run verify first."
        ) from None


def tail_bound(records, j, from_stage):
    """
    Certified bound on ||f_j^M - f_j|| for M = from_stage.

    The committed stages contribute their certified (st) bounds; every later
    stage k contributes at most 2^-(k+2) / A_(k-1) <= 2^-(k+2) / A_Nmax since
    the basis constants never decrease, which sums to 2^-(Nmax+2) / A_Nmax.

    Args:
        records (list): Committed StageRecords, records[N - 1] for stage N.
        j (int): Zero label.
        from_stage (int): M with j <= M <= Nmax.

    Returns:
        CertReal: A point interval holding the bound.

    Raises:
        IndexError: If j or from_stage is outside the committed range.
    """
    n_max = len(records)
    if not 1 <= j <= n_max:
        raise IndexError(f"Zero label {j} out of range 1..{n_max}.")
    if not j <= from_stage <= n_max:
        raise IndexError(f"from_stage {from_stage} out of range {j}..{n_max}.")
    last = records[-1]
    bits = last.precision_bits
    # Analytic tail of every stage not yet built.
    total = CertReal.power_of_two(-n_max - 2, bits) / last.basis_const
    # Plus the certified step of every committed stage after M.
    for k in range(from_stage + 1, n_max + 1):
        total = total + _stage_bound(records[k - 1], "st", j)
    return total.upper()


@dataclass(frozen=True)
class LimitGapCertificate:
    """
    Bound on ||f_j - f_k|| for the limit eigenvectors.

    Attributes:
        j, k (int): Zero labels; k is the stage N with l(N) = j.
        stage (int): The stage N (equal to k).
        bound (CertReal): st1 gap + tail(j, N) + tail(N, N).
        epsilon (CertReal): The requested accuracy.
        components (dict): The three summands.
    """

    j: int
    k: int
    stage: int
    bound: CertReal
    epsilon: CertReal
    components: dict = field(default_factory=dict)

    @property
    def passed(self):
        return self.bound.certainly_lt(self.epsilon)

    def to_dict(self):
        return {
            "j": self.j,
            "k": self.k,
            "stage": self.stage,
            "bound": self.bound.to_record(),
            "bound_float": float(self.bound),
            "epsilon": self.epsilon.to_record(),
            "components": {name: v.to_record() for name, v in self.components.items()},
            "passed": self.passed,
        }


def _required_stage(schedule, j, epsilon, after):
    """First stage beyond `after` with l(N) = j and 2^-N < epsilon."""
    N = after + 1
    limit = after + 100_000
    # Custom schedules end; the triangular one always finds a hit.
    while N < limit:
        try:
            hit = schedule.target(N) == j
        except ConfigError:
            break
        if hit and CertReal.power_of_two(-N).certainly_lt(epsilon):
            return N
        N += 1
    return N


def limit_gap(records, j, epsilon, schedule=None):
    """
    Finds a partner k for f_j with ||f_j - f_k|| < epsilon.

    Scans the committed stages N with l(N) = j and 2^-N < epsilon, earliest
    first, and returns the first one whose certified bound is below epsilon.

    Raises:
        DomainError: If epsilon is not positive.
        NeedMoreStages: If no committed stage qualifies.
    """
    schedule = schedule or Schedule()
    epsilon = epsilon if isinstance(epsilon, CertReal) else CertReal(epsilon)
    if not epsilon.is_positive():
        raise DomainError("epsilon must be positive.")
    n_max = len(records)
    for record in records[1:]:
        N = record.N
        # Only stages that paired f_j with their new eigenvector are candidates.
        if record.schedule_target != j:
            continue
        if not CertReal.power_of_two(-N).certainly_lt(epsilon):
            continue
        # ||f_j - f_N|| <= ||f_j^N - f_N^N|| + tail(j) + tail(N).
        st1 = _stage_bound(record, "st1", None)
        tail_j = tail_bound(records, j, N)
        tail_n = tail_bound(records, N, N)
        bound = (st1 + tail_j + tail_n).upper()
        cert = LimitGapCertificate(
            j=j,
            k=N,
            stage=N,
            bound=bound,
            epsilon=epsilon,
            components={"st1": st1, "tail_j": tail_j, "tail_k": tail_n},
        )
        if cert.passed:
            logger.info("Limit gap f_%d ~ f_%d certified below %s.", j, N, float(epsilon))
            return cert
    raise NeedMoreStages(_required_stage(schedule, j, epsilon, n_max))


@dataclass(frozen=True)
class CompletenessCertificate:
    """
    Approximation of the frame vector g = (1 - theta) mu_m / (z - t_m).

    residual bounds ||g - sum alpha_j f_j||; the certificate passes when it is
    below threshold = 2^(-N+1) ||g_N||.
    """

    N: int
    m: int
    alpha: tuple
    g_norm: CertReal
    truncation: CertReal
    eigen_tails: CertReal
    residual: CertReal
    threshold: CertReal

    @property
    def passed(self):
        return self.residual.certainly_lt(self.threshold)

    def to_dict(self):
        return {
            "N": self.N,
            "m": self.m,
            "alpha": [a.to_record() for a in self.alpha],
            "g_norm": float(self.g_norm),
            "truncation": float(self.truncation),
            "eigen_tails": float(self.eigen_tails),
            "residual": float(self.residual),
            "threshold": float(self.threshold),
            "passed": self.passed,
        }


def completeness_certificate(records, system, N, m):
    """
    Certifies that the f_j approximate the m-th Clark frame vector.

    Solves g_N = sum alpha_j f_j^N in Clark coordinates (a_n = delta_nm on one
    side, a_n = c_n / (lambda_j - t_n) on the other) and bounds

        ||g - sum alpha_j f_j|| <= ||g - g_N|| + sum |alpha_j| ||f_j^N - f_j||,

    where ||g - g_N|| <= mu_m sum_(k > N) ||(theta_k - theta_k-1) / (x - t_m)||
    uses the recorded (sm) bounds and their 4^-k targets past the last stage.

    Raises:
        IndexError: If N or m is out of range.
        SingularFrame: If the coordinate system cannot be solved.
    """
    n_max = len(records)
    if not 1 <= N <= n_max:
        raise IndexError(f"Stage {N} out of range 1..{n_max}.")
    if not 1 <= m <= N:
        raise IndexError(f"Atom index {m} out of range 1..{N}.")
    record = records[N - 1]
    stage_system = system.prefix(N)
    bits = record.precision_bits
    labels = list(range(1, N + 1))
    # Column j holds the Clark coordinates of f_j^N.
    rows = [
        [atom.c / (record.zeros.lam(j) - atom.t) for j in labels] for atom in stage_system.atoms
    ]
    # g_N is the m-th unit vector in the same coordinates.
    rhs = [CertReal(1 if n == m else 0, bits=bits) for n in labels]
    alpha = solve_enclosure(rows, rhs, bits)

    mu_m = stage_system.atom(m).mu
    g_norm = (4 * pi_interval(bits) * mu_m).sqrt()
    last = records[-1]
    # sum over k > Nmax of 4^-k / A_Nmax.
    tail_sm = CertReal.power_of_two(-2 * n_max, bits) / (3 * last.basis_const)
    for k in range(N + 1, n_max + 1):
        tail_sm = tail_sm + _stage_bound(records[k - 1], "sm", m)
    truncation = (mu_m * tail_sm).upper()

    eigen_tails = CertReal(0, bits=bits)
    for a, j in zip(alpha, labels):
        eigen_tails = eigen_tails + abs(a) * tail_bound(records, j, N)
    residual = (truncation + eigen_tails).upper()
    threshold = (CertReal.power_of_two(1 - N, bits) * g_norm).lower()
    return CompletenessCertificate(
        N=N,
        m=m,
        alpha=tuple(alpha),
        g_norm=g_norm,
        truncation=truncation,
        eigen_tails=eigen_tails.upper(),
        residual=residual,
        threshold=threshold,
    )


def structural_checks(system):
    """
    Certified structural facts about a committed system.

    (a) sum mu_n < 1, hence |S(i)| cannot reach i and theta(0) != 0 on the disk;
    (b) every atom lies in [t_min, t_max] inside (0, 1), so the complementary
        arc of the circle is free of boundary spectrum;
    (c) theta(i) != 1, so 1 - theta is a valid Clark vector.

    Returns:
        dict: One entry per item plus "passed".
    """
    mass = system.total_mass()
    theta_i = eval_inner(system, CertComplex(0, 1))
    item_a = {
        "total_mass_upper": float(mass.hi),
        "theta_disk_origin_abs_lower": float(abs(theta_i).lo),
        "passed": mass.certainly_lt(1) and not theta_i.contains_zero(),
    }
    ts = [a.t for a in system.atoms]
    t_min, t_max = CertReal.minimum(ts), CertReal.maximum(ts)
    inside = t_min.is_positive() and t_max.certainly_lt(1)
    ends = [cayley_point(t_min), cayley_point(t_max)]
    item_b = {
        "t_min": float(t_min),
        "t_max": float(t_max),
        "spectral_arc": [[float(e.re), float(e.im)] for e in ends],
        "passed": inside,
    }
    # theta(i) is the value at the center of the disk.
    item_c = {"passed": not (theta_i - 1).contains_zero()}
    return {
        "a": item_a,
        "b": item_b,
        "c": item_c,
        "passed": item_a["passed"] and item_b["passed"] and item_c["passed"],
    }


def audit_basis_constant(system, record, samples=1000, seed=0):
    """
    Samples random coefficient vectors and checks sum |alpha_j| <= A_N ||sum alpha_j f_j||.

    Returns:
        dict: Largest ratio seen, number of certified violations and verdict.
    """
    rng = np.random.default_rng(seed)
    A = record.basis_const
    worst = 0.0
    violations = 0
    for _ in range(samples):
        alpha = rng.standard_normal(system.N)
        ratio = ell1_ratio(system, record.zeros, alpha)
        worst = max(worst, float(ratio.hi))
        # A ratio that merely touches A_N is not a violation.
        if ratio.certainly_gt(A):
            violations += 1
    return {
        "N": record.N,
        "basis_const": float(A),
        "samples": samples,
        "max_ratio": worst,
        "violations": violations,
        "passed": violations == 0,
    }


# -------------------------------------------------------------------- verify


@dataclass
class StageVerification:
    """Recomputed certificates of one stage."""

    N: int
    certificates: tuple = ()
    error: str = None
    cached_mismatches: int = 0

    @property
    def passed(self):
        return self.error is None and all(c.passed for c in self.certificates)


@dataclass
class VerifyReport:
    """Outcome of `verify_state`; `records` are the replayed stage records."""

    stages: list
    records: list

    @property
    def passed(self):
        return bool(self.stages) and all(s.passed for s in self.stages)

    def failures(self):
        out = []
        for s in self.stages:
            if s.error is not None:
                out.append((s.N, s.error))
            out.extend((s.N, c.label) for c in s.certificates if not c.passed)
        return out


def _context(bits, state):
    return PrecisionContext(
        bits=bits,
        max_bits=max(bits, state.ctx.max_bits),
        escalation_factor=state.ctx.escalation_factor,
    )


def _mismatches(fresh, cached):
    # Stripped certificates simply count as no mismatch.
    by_key = {(c.name, c.index, c.side): c.status for c in cached.certificates}
    return sum(
        1
        for c in fresh.certificates
        if (c.name, c.index, c.side) in by_key and by_key[(c.name, c.index, c.side)] != c.status
    )


def verify_state(state):
    """
    Recomputes every certificate from the atoms, trusting nothing cached.

    Stage N is replayed at its recorded precision from the replayed stage
    N-1, with epsilon = mu_N^2. Replay stops at the first stage that cannot
    be evaluated, since later stages depend on it.

    Returns:
        VerifyReport: Per-stage results and the replayed records.
    """
    stages = []
    replayed = []
    atoms = state.system.atoms
    try:
        # Stage 1 is rebuilt from the first atom alone.
        base = BaseParams(atoms[0].t, atoms[0].mu, atoms[0].c).validate()
        ctx = _context(state.records[0].precision_bits, state)
        system, record = evaluate_base(base, ctx)
    except ClarkToolError as e:
        stages.append(StageVerification(1, error=str(e)))
        return VerifyReport(stages, replayed)
    stages.append(
        StageVerification(1, record.certificates, cached_mismatches=_mismatches(record, state.records[0]))
    )
    replayed.append(record)

    for cached in state.records[1:]:
        N = cached.N
        atom = atoms[N - 1]
        try:
            ctx = _context(cached.precision_bits, state)
            # Inputs come from the replayed previous stage, never from the cached one.
            inputs = StageInputs.build(
                system, record.zeros, record.basis_const, state.schedule.target(N), ctx
            )
            system, record = evaluate_stage(inputs, atom.t, atom.mu, atom.c, ctx)
        except ClarkToolError as e:
            stages.append(StageVerification(N, error=f"{type(e).__name__}: {e}"))
            logger.warning("Replay stopped at stage %d: %s", N, e)
            break
        stages.append(
            StageVerification(N, record.certificates, cached_mismatches=_mismatches(record, cached))
        )
        replayed.append(record)
    return VerifyReport(stages, replayed)
