# -*- coding: utf-8 -*-
"""
The model space K_theta in its Clark atomic frame.

Every element of K_theta_N is written as

    f(z) = (1 - theta_N(z)) * sum a_n mu_n / (z - t_n),

and the Clark formula gives its norm exactly from the coefficients:
||f||^2 = 4 pi sum |a_n|^2 mu_n. All norms inside K_theta are computed this
way. The one quantity that leaves the model space, the difference of two
consecutive inner functions, is bounded by `perturbation_norm_bound`.
"""
import logging
from dataclasses import dataclass

from mpmath import mpf

from .certreal import CertComplex, CertReal, log2_estimate, pi_interval
from .errors import DomainError, NotAZero, PoleError, PrecisionExhausted
from .herglotz import (
    ClarkSystem,
    coefficient_sum,
    eval_H,
    eval_inner,
    one_minus_inner,
    pole_near,
)
from .linalg import lower_singular_value

logger = logging.getLogger(__name__)

# Working precision of the perturbation bound; it only needs a few correct
# leading digits because it is compared against targets with large margins.
PERTURBATION_BITS = 128

# Subcells per octave in the near-pole quadrature of the perturbation bound.
_CELLS_PER_OCTAVE = 4


def _cplx(value):
    if isinstance(value, CertComplex):
        return value
    if isinstance(value, CertReal):
        return CertComplex(value, CertReal(0, bits=value.bits))
    return CertComplex(value)


@dataclass(frozen=True)
class ModelVector:
    """
    Coefficients a_1..a_N of an element of K_theta_N.

    Attributes:
        system (ClarkSystem): The atomic data defining theta_N.
        coeffs (tuple): CertComplex coefficients, one per atom.
    """

    system: ClarkSystem
    coeffs: tuple

    def __post_init__(self):
        coeffs = tuple(_cplx(a) for a in self.coeffs)
        if len(coeffs) != self.system.N:
            raise ValueError(
                f"Expected {self.system.N} coefficients, got {len(coeffs)}."
            )
        object.__setattr__(self, "coeffs", coeffs)

    @classmethod
    def zero(cls, system):
        return cls(system, tuple(CertComplex(0, 0) for _ in range(system.N)))

    @classmethod
    def unit(cls, system, m):
        """The frame vector with a_m = 1 and every other coefficient 0."""
        system.atom(m)
        return cls(system, tuple(CertComplex(1 if n == m else 0, 0) for n in range(1, system.N + 1)))

    def _check_same(self, other):
        if other.system is not self.system and other.system != self.system:
            raise ValueError("Model vectors belong to different systems.")

    def __add__(self, other):
        self._check_same(other)
        return ModelVector(self.system, tuple(a + b for a, b in zip(self.coeffs, other.coeffs)))

    def __sub__(self, other):
        self._check_same(other)
        return ModelVector(self.system, tuple(a - b for a, b in zip(self.coeffs, other.coeffs)))

    def scale(self, alpha):
        return ModelVector(self.system, tuple(a * alpha for a in self.coeffs))


def synthesize(v, z):
    """
    Evaluates f(z) = (1 - theta_N(z)) sum a_n mu_n / (z - t_n).

    At an atom t_m both factors are combined into
    2i (-a_m mu_m + d * rest) / (mu_m + d (R + i)) with d = t_m - z, whose
    value at d = 0 is -2i a_m, so |f(t_m)| = 2 |a_m|.

    Args:
        v (ModelVector): Coefficients.
        z (CertComplex | CertReal): Point of the closed upper half-plane.

    Returns:
        CertComplex: Enclosure of f(z).
    """
    system = v.system
    zc = _cplx(z)
    m = pole_near(system, zc)
    if m is None:
        return -(one_minus_inner(system, zc) * coefficient_sum(system, zc, v.coeffs))
    atom = system.atom(m)
    d = CertComplex(atom.t - zc.re, -zc.im)
    rest = -coefficient_sum(system, zc, v.coeffs, skip=m)
    r = coefficient_sum(system, zc, [1] * system.N, skip=m)
    num = -(v.coeffs[m - 1] * atom.mu) + d * rest
    den = atom.mu + d * (r + CertComplex(0, 1))
    return CertComplex(0, 2) * num / den


def norm_squared(v):
    """4 pi sum |a_n|^2 mu_n."""
    total = CertReal(0)
    for a, atom in zip(v.coeffs, v.system.atoms):
        total = total + a.abs_squared() * atom.mu
    return 4 * pi_interval(total.bits) * total


def norm(v):
    """
    Certified L2 norm of the synthesized function by the Clark formula.

    Returns:
        CertReal: sqrt(4 pi sum |a_n|^2 mu_n).
    """
    return norm_squared(v).sqrt()


def eigvec_coeffs(system, lam, tolerance=None):
    """
    Coefficients of f = phi_N / (z - lambda) for a zero lambda of H_N.

    Args:
        system (ClarkSystem): The atomic data.
        lam (CertReal): Enclosure of a zero of the bracket H_N.
        tolerance (optional): Accept lam when H_N(lam) meets [-tol, tol]
            instead of requiring it to contain 0.

    Returns:
        ModelVector: a_n = c_n / (lambda - t_n).

    Raises:
        NotAZero: If H_N(lam) certifiably avoids 0 (beyond the tolerance) or
            lam sits on a pole.
    """
    try:
        h = eval_H(system, lam)
    except PoleError as e:
        raise NotAZero(f"lambda coincides with the pole of atom {e.index}.") from None
    tol = CertReal(0) if tolerance is None else abs(CertReal(tolerance))
    if not h.overlaps(CertReal(-tol.hi, tol.hi)):
        raise NotAZero(f"H_N(lambda) = {float(h):.6g} does not vanish.")
    return ModelVector(system, tuple(atom.c / (lam - atom.t) for atom in system.atoms))


def eigenvector(system, zeros, label):
    """Model vector of the eigenvector attached to the zero labelled `label`."""
    lam = zeros.lam(label)
    return ModelVector(system, tuple(atom.c / (lam - atom.t) for atom in system.atoms))


@dataclass(frozen=True)
class GapReport:
    """
    Distance between two eigenvectors.

    Attributes:
        j, k (int): Zero labels.
        gap (CertReal): ||f_j - f_k||_2.
        contributions (tuple): Per-atom terms; gap^2 = pi * sum(contributions).
    """

    j: int
    k: int
    gap: CertReal
    contributions: tuple


def pairwise_gap(system, zeros, j, k):
    """
    ||f_j - f_k||_2 by the Clark formula.

    The m-th contribution is 4 c_m^2 mu_m (1/(lambda_j - t_m) - 1/(lambda_k - t_m))^2.

    Raises:
        IndexError: If j or k is not a label of `zeros`.
    """
    lam_j = zeros.lam(j)
    lam_k = zeros.lam(k)
    contributions = []
    total = CertReal(0)
    for atom in system.atoms:
        diff = 1 / (lam_j - atom.t) - 1 / (lam_k - atom.t)
        term = 4 * atom.c.square() * atom.mu * diff.square()
        contributions.append(term)
        total = total + term
    gap = (pi_interval(total.bits) * total).sqrt()
    return GapReport(j=j, k=k, gap=gap, contributions=tuple(contributions))


def frame_matrix(system, zeros):
    """
    The real matrix B_mj = sqrt(pi mu_m) c_m / (lambda_j - t_m).

    Columns follow the zero labels 1..K. The Clark coordinates of f_j are
    -2i B_mj, so the singular values of the coordinate matrix are twice
    those of B.
    """
    labels = sorted(zeros.labels)
    rows = []
    for atom in system.atoms:
        scale = (pi_interval(atom.mu.bits) * atom.mu).sqrt() * atom.c
        rows.append([scale / (zeros.lam(j) - atom.t) for j in labels])
    return rows


def frame_sigma_min(system, zeros, bits=None):
    """
    Certified lower bound on sigma_min of the Clark coordinate matrix M.

    Raises:
        SingularFrame: If invertibility cannot be certified at `bits`.
    """
    rows = frame_matrix(system, zeros)
    if bits is None:
        bits = max(x.bits for row in rows for x in row)
    return 2 * lower_singular_value(rows, bits)


def basis_constant(system, zeros, previous=None, sigma_min=None):
    """
    A_N = max(previous, 1, sqrt(N) / sigma_min(M)).

    Any x satisfies sum |x_j| <= sqrt(N) |x|_2 <= sqrt(N) ||M x|| / sigma_min,
    and ||M x|| is the Clark norm of sum x_j f_j, so the result is a valid
    l1 basis constant. It is returned as an exact point (its upper end).

    Raises:
        SingularFrame: If the frame cannot be certified invertible.
    """
    if len(zeros) != system.N:
        raise ValueError("basis_constant needs one zero per atom.")
    if sigma_min is None:
        sigma_min = frame_sigma_min(system, zeros)
    bits = sigma_min.bits
    # Rounded up so that A_N stays an exact dyadic upper bound.
    candidate = (CertReal(system.N, bits=bits).sqrt() / sigma_min).upper()
    values = [CertReal(1, bits=bits), candidate]
    if previous is not None:
        values.append(previous)
    return CertReal.maximum(values).upper()


# ------------------------------------------------------------ perturbations


def _offsets(system, t_ref, bits):
    """(t_k - t_ref) at `bits` for every atom of `system`."""
    return [atom.t.with_bits(bits) - t_ref.with_bits(bits) for atom in system.atoms]


def _sum_at_offset(masses, offsets, u):
    """S(t_ref + u) = sum mu_k / (offset_k - u), or None if a pole is hit."""
    total = CertReal(0, bits=u.bits)
    for mass, o in zip(masses, offsets):
        d = o - u
        if d.contains_zero():
            return None
        total = total + mass / d
    return total


def _cell_bound(masses, offsets, mu_range, u, d_signed, envelope):
    """Upper bound of |theta_N - theta_N-1|^2 / (x - t_n)^2 integrated over a cell."""
    width = u.upper() - u.lower()
    s = _sum_at_offset(masses, offsets, u)
    # The envelope holds for every mass in mu_range; the exact form can only improve it.
    integrand = envelope
    if s is not None:
        denom = ((u * s - mu_range).square() + u.square()) * (1 + s.square())
        if denom.is_positive():
            exact = (4 * mu_range.square() / denom).hi
            integrand = min(envelope, exact)
    # 1 / (x - t_n)^2 over the cell
    weight = 1 / (d_signed + u).square()
    return (width * CertReal(integrand, bits=u.bits) * weight).hi


def _crude_near_bound(mu, d_abs):
    return (64 * mu / d_abs.square()).hi


def _near_new_atom(system_prev, mu, t_new, t_n, d_abs, bits):
    """
    The part of the integral within half the atom distance of t_N.

    Returns the smaller of the crude bound 64 mu / D^2 and a sum over
    geometric cells of |u| = |x - t_N| with fixed dyadic boundaries.
    """
    crude = _crude_near_bound(mu, d_abs)
    half = (d_abs / 2).lower()
    e_mu = log2_estimate(mu)
    rho0 = CertReal.power_of_two(e_mu - 8, bits)
    u_max = CertReal.power_of_two(e_mu + 24, bits)
    if half.certainly_lt(u_max):
        u_max = half
    if not rho0.certainly_lt(u_max):
        return crude
    offsets = _offsets(system_prev, t_new, bits)
    masses = [atom.mu.with_bits(bits) for atom in system_prev.atoms]
    d_signed = t_new.with_bits(bits) - t_n.with_bits(bits)
    mu_range = CertReal(0, mu.hi, bits=bits)
    inv_d2 = 4 / d_abs.square()
    # |u| <= rho0: integrand <= 4 / (x - t_n)^2 <= 4 * inv_d2.
    total = 2 * rho0 * 4 * inv_d2
    for side in (1, -1):
        e = e_mu - 8
        done = False
        while not done:
            for k in range(_CELLS_PER_OCTAVE):
                lo = CertReal.power_of_two(e, bits) * (1 + CertReal(k, bits=bits) / _CELLS_PER_OCTAVE)
                hi = CertReal.power_of_two(e, bits) * (1 + CertReal(k + 1, bits=bits) / _CELLS_PER_OCTAVE)
                if not hi.certainly_lt(u_max):
                    hi = u_max
                    done = True
                envelope = min(mpf(4), (4 * mu.square() / lo.square()).hi)
                if side > 0:
                    u = CertReal(lo.lo, hi.hi, bits=bits)
                else:
                    u = CertReal(-hi.hi, -lo.lo, bits=bits)
                total = total + _cell_bound(masses, offsets, mu_range, u, d_signed, envelope)
                if done:
                    break
            e += 1
    # |u| > u_max: envelope 4 mu^2 / u^2 times 4 / D^2.
    total = total + 4 * mu.square() * inv_d2 * (2 / u_max)
    return min(crude, total.hi)


def perturbation_norm_bound(sys_prev, sys_new, n, bits=PERTURBATION_BITS, target=None):
    """
    Certified upper bound for ||(theta_N - theta_N-1) / (x - t_n)||_2.

    The real line is split in three regions, with mu = mu_N, D = |t_N - t_n|:

    * |x - t_N| < D/2: the integrand is at most min(4, 4 mu^2/u^2) * 4/D^2,
      refined cell by cell with the exact form
      4 mu^2 / (((u S' - mu)^2 + u^2)(1 + S'^2)) where S' = S_N-1(x).
    * |x - t_n| < r: both inner functions are close to 1; there
      |theta_N - theta_N-1| <= 8 s rho^2 / mu_n^2 with s = 2 mu / D.
    * elsewhere: |theta_N - theta_N-1| <= 4 mu / D.

    Every estimate is taken for all masses in [0, mu], so the bound cannot
    grow when mu_N shrinks.

    Args:
        sys_prev (ClarkSystem): Stage N-1 atoms.
        sys_new (ClarkSystem): Stage N atoms (sys_prev plus one atom).
        n (int): Atom index, n < N.
        bits (int): Working precision.
        target (CertReal, optional): When the crude estimate near t_N
            already gives a bound below `target`, that bound is returned
            without the cell refinement.

    Returns:
        CertReal: A point interval holding the bound.

    Raises:
        PrecisionExhausted: If t_N and t_n cannot be separated at `bits`.
    """
    N = sys_new.N
    if sys_prev.N != N - 1:
        raise ValueError("sys_new must extend sys_prev by exactly one atom.")
    if not 1 <= n < N:
        raise IndexError(f"Atom index {n} out of range 1..{N - 1}.")
    new = sys_new.atom(N)
    mu = new.mu.with_bits(bits)
    if mu.hi == 0:
        return CertReal(0, bits=bits)
    atom_n = sys_prev.atom(n)
    d_abs = abs(new.t.with_bits(bits) - atom_n.t.with_bits(bits))
    if not d_abs.is_positive():
        raise PrecisionExhausted("New atom not separated from t_n.", bits=bits)

    half = d_abs / 2
    mu_n = atom_n.mu.with_bits(bits)
    # Pull of the other atoms on S near t_n, and the distance to the nearest of them.
    r_prime = CertReal(0, bits=bits)
    gap = None
    for k, atom in enumerate(sys_prev.atoms, start=1):
        if k == n:
            continue
        dist = abs(atom.t.with_bits(bits) - atom_n.t.with_bits(bits))
        r_prime = r_prime + 2 * atom.mu.with_bits(bits) / dist
        gap = dist if gap is None else CertReal.minimum([gap, dist])
    cap = CertReal.maximum([mu, CertReal.power_of_two(-N, bits)])
    s_cap = 2 * cap / d_abs
    s_max = 2 * mu / d_abs
    candidates = [half, mu_n / (2 * (r_prime + s_cap))]
    if gap is not None:
        candidates.append(gap / 2)
    r = CertReal.minimum(candidates).lower()
    region_b = CertReal(128, bits=bits) / 3 * s_max.square() * r ** 3 / mu_n ** 4
    region_c = 32 * mu.square() / (d_abs.square() * r)

    rest = region_b + region_c
    # Screening: skip the cells when the crude estimate already clears the target.
    if target is not None:
        bound = (CertReal(_crude_near_bound(mu, d_abs), bits=bits) + rest).sqrt().upper()
        if bound.certainly_lt(target):
            return bound
    region_a = _near_new_atom(sys_prev, mu, new.t, atom_n.t, d_abs, bits)
    bound = (CertReal(region_a, bits=bits) + rest).sqrt().upper()
    logger.debug("Perturbation bound for n=%d at N=%d: %s", n, N, bound)
    return bound


def stage_difference_bound(sys_prev, sys_new, zeros_prev, zeros_new, j, sm_bounds=None):
    """
    Certified upper bound for ||f_j^(N-1) - f_j^N||_2.

    The difference splits as g1 + g2 - h with
    g1 = (1 - theta_N) sum_(n<N) c_n mu_n (lambda - lambda') / ((lambda' - t_n)(lambda - t_n)(z - t_n)),
    g2 = (theta_N - theta_N-1) sum_(n<N) c_n mu_n / ((lambda' - t_n)(z - t_n)),
    h  = (1 - theta_N) c_N mu_N / ((lambda - t_N)(z - t_N)),
    where lambda' and lambda are the zeros labelled j at stages N-1 and N.
    g1 and h lie in K_theta_N and are normed exactly; g2 uses
    `perturbation_norm_bound` for each n.

    Args:
        sm_bounds (dict, optional): Precomputed perturbation bounds by n.

    Returns:
        CertReal: A point interval holding the bound.
    """
    N = sys_new.N
    if not 1 <= j <= N - 1:
        raise IndexError(f"Zero label {j} out of range 1..{N - 1}.")
    lam_old = zeros_prev.lam(j)
    lam_new = zeros_new.lam(j)
    g1 = _g1_vector(sys_new, lam_old, lam_new)
    g1_norm = norm(g1)
    # g2 is not in K_theta_N; bound it atom by atom.
    g2_norm = CertReal(0)
    for n, atom in enumerate(sys_prev.atoms, start=1):
        sm = sm_bounds[n] if sm_bounds is not None else perturbation_norm_bound(sys_prev, sys_new, n)
        g2_norm = g2_norm + abs(atom.cmu / (lam_old - atom.t)) * sm
    h_norm = h_term_norm(sys_new, lam_new)
    return (g1_norm + g2_norm + h_norm).upper()


def _g1_vector(sys_new, lam_old, lam_new):
    N = sys_new.N
    coeffs = []
    for n, atom in enumerate(sys_new.atoms, start=1):
        if n == N:
            coeffs.append(CertReal(0))
        else:
            coeffs.append(atom.c * (lam_new - lam_old) / ((lam_old - atom.t) * (lam_new - atom.t)))
    return ModelVector(sys_new, tuple(coeffs))


def h_term_norm(sys_new, lam_new):
    """||h||_2 = c_N sqrt(4 pi mu_N) / |lambda_j^N - t_N|."""
    atom = sys_new.atom(sys_new.N)
    four_pi_mu = 4 * pi_interval(atom.mu.bits) * atom.mu
    return atom.c * four_pi_mu.sqrt() / abs(lam_new - atom.t)


def decomposition_at(sys_prev, sys_new, zeros_prev, zeros_new, j, z):
    """
    Pointwise values of the three-term splitting of f_j^(N-1) - f_j^N.

    Returns:
        dict: CertComplex values for "difference", "g1", "g2" and "h"; the
            difference equals g1 + g2 - h.
    """
    N = sys_new.N
    lam_old = zeros_prev.lam(j)
    lam_new = zeros_new.lam(j)
    f_old = synthesize(eigenvector(sys_prev, zeros_prev, j), z)
    f_new = synthesize(eigenvector(sys_new, zeros_new, j), z)
    g1 = synthesize(_g1_vector(sys_new, lam_old, lam_new), z)
    zc = _cplx(z)
    coeffs = [atom.c / (lam_old - atom.t) for atom in sys_prev.atoms]
    inner = -coefficient_sum(sys_prev, zc, coeffs)
    g2 = (eval_inner(sys_new, zc) - eval_inner(sys_prev, zc)) * inner
    atom = sys_new.atom(N)
    # h lives on the new atom only.
    h_coeffs = [CertReal(0)] * (N - 1) + [atom.c / (lam_new - atom.t)]
    h = synthesize(ModelVector(sys_new, tuple(h_coeffs)), z)
    return {"difference": f_old - f_new, "g1": g1, "g2": g2, "h": h}


def ell1_ratio(system, zeros, alpha):
    """
    sum |alpha_j| / ||sum alpha_j f_j|| for real coefficients alpha.

    Used to audit basis constants; the ratio never exceeds a valid A_N.
    """
    labels = sorted(zeros.labels)
    combo = ModelVector.zero(system)
    for a, j in zip(alpha, labels):
        combo = combo + eigenvector(system, zeros, j).scale(CertReal(float(a)))
    l1 = sum(abs(float(a)) for a in alpha)
    denom = norm(combo)
    if not denom.is_positive():
        raise DomainError("Combination has no certified positive norm.")
    return CertReal(l1) / denom


def unimodularity_defect(system, x):
    """| |theta_N(x)| - 1 | on the real line, as an interval."""
    return abs(abs(eval_inner(system, x)) - 1)


def clark_weights(system):
    """Per-atom weights sqrt(4 pi mu_n) turning coefficients into l2 coordinates."""
    return [(4 * pi_interval(atom.mu.bits) * atom.mu).sqrt() for atom in system.atoms]


def coordinates(v):
    """l2 coordinates sqrt(4 pi mu_n) a_n of a model vector."""
    return [a * w for a, w in zip(v.coeffs, clark_weights(v.system))]