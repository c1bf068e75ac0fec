# -*- coding: utf-8 -*-
"""
Disk model of the construction and the rank-one perturbation T = U + R.

The upper half-plane is mapped to the unit disk by w = (z - i) / (z + i).
Atoms t_n become boundary points tau_n with disk Clark masses
sigma_n = 2 mu_n / (t_n^2 + 1). In the orthonormal basis of normalized
reproducing kernels at the tau_n, the Clark unitary is U = diag(tau_n) and
the operator with vector phi is

    T_mn = tau_n delta_mn + i tau_n c_m sqrt(sigma_m sigma_n) beta,

where beta = <1 - Theta, Theta> / <phi, Theta> = 1 / H_N(-i). The scalar beta
is obtained either in closed form or by circle quadrature; both must agree.
The eigenvalues of T are the Cayley images Lambda_j of the zeros lambda_j of
H_N, with eigenvectors given by the transported f_j.
"""
import logging
from dataclasses import dataclass, field

import mpmath

from .certreal import CertComplex, CertReal, PrecisionContext, pi_interval
from .clark import eigenvector, frame_sigma_min, pairwise_gap, synthesize
from .errors import DegenerateVector, DomainError, QuadratureStall, SingularFrame
from .herglotz import eval_cauchy_sum, eval_inner, pole_near, real_sum
from .linalg import eigenvalues, matmul, singular_values, working_context

logger = logging.getLogger(__name__)

VECTOR_CHOICES = ("phi", "one_minus_theta")
METHODS = ("closed_form", "quadrature")

# Node cap for circle quadrature.
MAX_QUADRATURE_NODES = 1 << 16
INITIAL_QUADRATURE_NODES = 64

DEFAULT_TOLERANCES = {
    "eigenvalue": 1e-8,
    "residual": 1e-8,
    "unimodular": 1e-10,
    "unitarity": 1e-10,
    "rank_one": 1e-10,
}


def cayley_point(t):
    """
    tau = (t - i) / (t + i) = ((t^2 - 1) - 2 i t) / (t^2 + 1).

    Args:
        t (CertReal): A real point.

    Returns:
        CertComplex: A point of the unit circle.
    """
    t2 = t.square()
    denom = t2 + 1
    return CertComplex((t2 - 1) / denom, -2 * t / denom)


def disk_clark_mass(t, mu):
    """
    sigma = 2 mu / (t^2 + 1), so that ||k_tau||^2 = 2 / sigma in H^2 of the disk.

    Raises:
        DomainError: If mu is not certifiably positive.
    """
    if not mu.is_positive():
        raise DomainError("Clark masses must be positive.")
    return 2 * mu / (t.square() + 1)


def kernel_phase(t):
    """conj(omega) with omega = (1 + i t) / sqrt(1 + t^2)."""
    r = (1 + t.square()).sqrt()
    return CertComplex(1 / r, -t / r)


def theta_at_origin(system):
    """Theta(0) = theta_N(i)."""
    i = CertComplex(0, 1)
    return eval_inner(system, i)


def bracket_below(system):
    """H_N(-i) = 1 + sum c_n mu_n / (t_n + i)."""
    return 1 + eval_cauchy_sum(system, CertComplex(0, -1), "c_times_mu")


def _check_vector(system):
    theta0 = theta_at_origin(system)
    if (theta0 - 1).contains_zero():
        raise DegenerateVector("Theta(0) = 1: the Clark vector 1 - Theta vanishes.")
    h = bracket_below(system)
    if h.contains_zero():
        raise DegenerateVector("<phi, Theta> cannot be separated from 0.")
    return theta0, h


def _phi_over_theta(system, x):
    """
    phi(x) conj(Theta(x)) on the real line, i.e. 2i H(x) / (S(x) - i).

    At an atom the removable form 2i (c_m mu_m + d (1 + Q)) / (mu_m + d (R - i))
    is used, with d = t_m - x.
    """
    m = pole_near(system, x)
    two_i = CertComplex(0, 2)
    if m is None:
        h = 1 + real_sum(system, x, "c_times_mu")
        s = real_sum(system, x, "mu")
        return two_i * h / CertComplex(s, CertReal(-1, bits=x.bits))
    atom = system.atom(m)
    d = atom.t - x
    q = real_sum(system, x, "c_times_mu", skip=m)
    r = real_sum(system, x, "mu", skip=m)
    num = atom.cmu + d * (1 + q)
    den = CertComplex(atom.mu + d * r, -d)
    return two_i * num / den


def _circle_average(system, nodes, bits):
    """(1/K) sum over the K uniform circle nodes, mapped to the line."""
    pi = pi_interval(bits)
    total = CertComplex(0, 0, bits=bits)
    # Half-shifted nodes avoid w = 1, the image of infinity.
    for k in range(nodes):
        angle = pi * (2 * k + 1) / (2 * nodes)
        # w = exp(2i angle) lies over x = -cot(angle).
        x = -angle.cot()
        total = total + _phi_over_theta(system, x)
    return total / nodes


def quadrature_inner_product(system, ctx, tolerance=None):
    """
    <phi_D, Theta> in H^2 of the disk by the trapezoid rule on the circle.

    The node count doubles until two successive averages differ by less than
    `tolerance`; their difference is added to the enclosure radius.

    Raises:
        QuadratureStall: If the node cap is reached first.
    """
    bits = ctx.bits
    if tolerance is None:
        tolerance = mpmath.mpf(2) ** (-(bits // 2))
    nodes = INITIAL_QUADRATURE_NODES
    previous = _circle_average(system, nodes, bits)
    while nodes < MAX_QUADRATURE_NODES:
        nodes *= 2
        current = _circle_average(system, nodes, bits)
        delta = current - previous
        spread = max(abs(delta.re).hi, abs(delta.im).hi)
        if spread < tolerance:
            # The last difference becomes part of the enclosure.
            pad = CertReal(-spread, spread, bits=bits)
            logger.debug("Quadrature converged with %d nodes.", nodes)
            return CertComplex(current.re + pad, current.im + pad)
        previous = current
    raise QuadratureStall(f"No agreement within {float(tolerance):.3g} at {nodes} nodes.")


def rank_one_scalar(system, ctx=None, method="closed_form"):
    """
    beta = <1 - Theta, Theta> / <phi, Theta>.

    Args:
        system (ClarkSystem): Atomic data.
        ctx (PrecisionContext, optional): Working precision (quadrature only).
        method (str): "closed_form" uses beta = 1 / H_N(-i); "quadrature"
            evaluates both inner products on the circle.

    Raises:
        DegenerateVector: If Theta(0) = 1 or <phi, Theta> meets 0.
        QuadratureStall: From the quadrature method.
    """
    if method not in METHODS:
        raise ValueError(f"method must be one of {METHODS}, got '{method}'.")
    theta0, h = _check_vector(system)
    if method == "closed_form":
        return 1 / h
    ctx = ctx or PrecisionContext()
    inner = quadrature_inner_product(system, ctx)
    if inner.contains_zero():
        raise DegenerateVector("<phi, Theta> cannot be separated from 0.")
    return (theta0.conj() - 1) / inner


def build_operator(system, vector_choice="phi", ctx=None, method="closed_form"):
    """
    Matrix of T (vector_choice = "phi") or of the Clark unitary U
    (vector_choice = "one_minus_theta") in the normalized kernel basis.

    Returns:
        list: N rows of CertComplex entries.
    """
    if vector_choice not in VECTOR_CHOICES:
        raise ValueError(f"vector_choice must be one of {VECTOR_CHOICES}.")
    tau = [cayley_point(a.t) for a in system.atoms]
    n = system.N
    # U is diagonal in the kernel basis.
    if vector_choice == "one_minus_theta":
        _check_vector(system)
        return [[tau[i] if i == j else CertComplex(0, 0) for j in range(n)] for i in range(n)]
    beta = rank_one_scalar(system, ctx, method)
    sigma = [disk_clark_mass(a.t, a.mu) for a in system.atoms]
    root = [s.sqrt() for s in sigma]
    rows = []
    for m in range(n):
        row = []
        # i beta c_m sqrt(sigma_m), shared by the whole row.
        left = beta.times_i() * (system.atoms[m].c * root[m])
        for j in range(n):
            entry = left * (tau[j] * root[j])
            if m == j:
                entry = entry + tau[j]
            row.append(entry)
        rows.append(row)
    return rows


def eigen_coordinates(system, zeros, label):
    """
    Coordinates of the transported f_j in the normalized kernel basis:
    v_m = conj(omega_m) sqrt(4 pi mu_m) a_m with a_m = c_m / (lambda_j - t_m).
    """
    v = eigenvector(system, zeros, label)
    out = []
    for a, atom in zip(v.coeffs, system.atoms):
        weight = (4 * pi_interval(atom.mu.bits) * atom.mu).sqrt()
        out.append(kernel_phase(atom.t) * a * weight)
    return out


def transported_value(v, w):
    """
    F(w) = sqrt(pi) f(z) (z + i) with z = i (1 + w) / (1 - w).

    This is the isometry from L^2 of the line onto H^2 of the disk used
    throughout (the normalization constant is a convention).
    """
    w = w if isinstance(w, CertComplex) else CertComplex(w)
    z = CertComplex(0, 1) * (1 + w) / (1 - w)
    return synthesize(v, z) * (z + CertComplex(0, 1)) * pi_interval(w.bits).sqrt()


@dataclass
class DiskOperatorBundle:
    """
    Disk data of one committed stage.

    Attributes:
        tau (list): Cayley images of the atoms.
        sigma (list): Disk Clark masses.
        Lambda (list): Cayley images of the zeros, by label.
        T_matrix, U_matrix (list): Operator matrices (rows of CertComplex).
        eigvecs (list): Kernel-basis coordinates of the transported f_j.
        beta (CertComplex): Rank-one coupling scalar.
    """

    N: int
    tau: list
    sigma: list
    Lambda: list
    T_matrix: list
    U_matrix: list
    eigvecs: list
    beta: CertComplex
    bits: int
    method: str = "closed_form"
    diagnostics: dict = field(default_factory=dict)


def build_bundle(system, zeros, ctx=None, method="closed_form"):
    """Assembles the DiskOperatorBundle of a stage."""
    ctx = ctx or PrecisionContext()
    labels = sorted(zeros.labels)
    bundle = DiskOperatorBundle(
        N=system.N,
        tau=[cayley_point(a.t) for a in system.atoms],
        sigma=[disk_clark_mass(a.t, a.mu) for a in system.atoms],
        Lambda=[cayley_point(zeros.lam(j)) for j in labels],
        T_matrix=build_operator(system, "phi", ctx, method),
        U_matrix=build_operator(system, "one_minus_theta", ctx),
        eigvecs=[eigen_coordinates(system, zeros, j) for j in labels],
        beta=rank_one_scalar(system, ctx, method),
        bits=ctx.bits,
        method=method,
    )
    logger.info("Built %dx%d disk operator (%s, %d bits).", system.N, system.N, method, ctx.bits)
    return bundle


def _vector_norm(v):
    total = CertReal(0)
    for x in v:
        total = total + x.abs_squared()
    return total.sqrt()


def _mat_vec(rows, v):
    return [r[0] for r in matmul(rows, [[x] for x in v])]


def _conj_transpose(rows):
    n = len(rows)
    return [[rows[j][i].conj() for j in range(n)] for i in range(n)]


@dataclass
class SpectralReport:
    """Outcome of `spectral_check`. Values are floats for reporting."""

    eigenvalues: list
    matches: list
    residuals: list
    max_eigen_error: float
    max_residual: float
    max_unimodular_defect: float
    unitarity_defect: float
    rank_one_ratio: float
    singular_values: list
    clark_eigen_error: float
    min_distinctness: float
    tolerances: dict
    passed: bool
    failures: list

    def to_dict(self):
        return {
            "eigenvalues": [[float(e.real), float(e.imag)] for e in self.eigenvalues],
            "matches": self.matches,
            "residuals": self.residuals,
            "max_eigen_error": self.max_eigen_error,
            "max_residual": self.max_residual,
            "max_unimodular_defect": self.max_unimodular_defect,
            "unitarity_defect": self.unitarity_defect,
            "rank_one_ratio": self.rank_one_ratio,
            "singular_values": self.singular_values,
            "clark_eigen_error": self.clark_eigen_error,
            "min_distinctness": self.min_distinctness,
            "tolerances": self.tolerances,
            "passed": self.passed,
            "failures": self.failures,
        }


def spectral_check(bundle, tolerances=None):
    """
    Compares the spectrum of T with the Cayley images of the zeros.

    Checks eigenvalue match, eigenvector residuals ||T v_j - Lambda_j v_j|| /
    ||v_j|| (certified upper ends), unimodularity of the computed
    eigenvalues, unitarity of U, that T - U has rank one, that U has the
    eigenvalues tau_n, and the separation of the Lambda_j.

    Returns:
        SpectralReport: Never raises on a failed check; failures are listed.
    """
    tol = dict(DEFAULT_TOLERANCES)
    tol.update(tolerances or {})
    bits = bundle.bits
    # Floating diagnostics on the midpoint matrices.
    eig = eigenvalues(bundle.T_matrix, bits)
    work = working_context(bits)
    targets = [work.mpc(L.re.mid, L.im.mid) for L in bundle.Lambda]

    # Greedy nearest matching, each eigenvalue used once.
    remaining = list(eig)
    matches = []
    max_err = 0.0
    for j, target in enumerate(targets, start=1):
        best = min(range(len(remaining)), key=lambda i: abs(remaining[i] - target))
        err = float(abs(remaining[best] - target))
        matches.append({"j": j, "error": err})
        max_err = max(max_err, err)
        remaining.pop(best)

    # Residuals stay in interval arithmetic.
    residuals = []
    for j, (vec, lam) in enumerate(zip(bundle.eigvecs, bundle.Lambda), start=1):
        tv = _mat_vec(bundle.T_matrix, vec)
        diff = [a - lam * b for a, b in zip(tv, vec)]
        rel = _vector_norm(diff) / _vector_norm(vec)
        residuals.append({"j": j, "residual": float(rel.hi)})
    max_res = max((r["residual"] for r in residuals), default=0.0)

    unimod = max((float(abs(abs(e) - 1)) for e in eig), default=0.0)

    # max entry of U*U - I
    uu = matmul(_conj_transpose(bundle.U_matrix), bundle.U_matrix)
    unitarity = 0.0
    for i, row in enumerate(uu):
        for j, x in enumerate(row):
            d = x - 1 if i == j else x
            unitarity = max(unitarity, float(abs(d.re).hi), float(abs(d.im).hi))

    # Rank one: the second singular value of T - U vanishes relative to the first.
    diff_rows = [[a - b for a, b in zip(r1, r2)] for r1, r2 in zip(bundle.T_matrix, bundle.U_matrix)]
    svals = singular_values(diff_rows, bits)
    ratio = float(svals[1] / svals[0]) if len(svals) > 1 and svals[0] > 0 else 0.0

    # Clark: the spectrum of U is {tau_n}.
    u_eig = eigenvalues(bundle.U_matrix, bits)
    clark_err = 0.0
    for tau in bundle.tau:
        t = work.mpc(tau.re.mid, tau.im.mid)
        clark_err = max(clark_err, float(min(abs(e - t) for e in u_eig)))

    distinct = float("inf")
    for a in range(len(bundle.Lambda)):
        for b in range(a + 1, len(bundle.Lambda)):
            d = abs(bundle.Lambda[a] - bundle.Lambda[b])
            distinct = min(distinct, float(d.lo))

    # Distinctness is certified; everything else compares against tolerances.
    failures = []
    if max_err > tol["eigenvalue"]:
        failures.append("eigenvalue_match")
    if max_res > tol["residual"]:
        failures.append("eigenvector_residual")
    if unimod > tol["unimodular"]:
        failures.append("unimodularity")
    if unitarity > tol["unitarity"]:
        failures.append("unitarity")
    if ratio > tol["rank_one"]:
        failures.append("rank_one")
    if clark_err > tol["eigenvalue"]:
        failures.append("clark_unitary_spectrum")
    if len(bundle.Lambda) > 1 and not distinct > 0:
        failures.append("distinctness")

    report = SpectralReport(
        eigenvalues=eig,
        matches=matches,
        residuals=residuals,
        max_eigen_error=max_err,
        max_residual=max_res,
        max_unimodular_defect=unimod,
        unitarity_defect=unitarity,
        rank_one_ratio=ratio,
        singular_values=[float(s) for s in svals],
        clark_eigen_error=clark_err,
        min_distinctness=distinct if distinct != float("inf") else None,
        tolerances=tol,
        passed=not failures,
        failures=failures,
    )
    bundle.diagnostics = report.to_dict()
    return report


def grivaux_checklist(system, zeros, bundle):
    """
    Finite-stage evidence for the unimodular eigenvector criterion.

    (i) every enclosure of |Lambda_j|^2 - 1 contains 0, and the Lambda_j are
        certifiably pairwise distinct;
    (ii) the eigenvector frame has full rank (certified sigma_min > 0);
    (iii) for each j, the nearest other eigenvector and the certified gap.

    Items (ii) and (iii) are finite-dimensional surrogates only; a finite
    matrix is never hypercyclic.

    Returns:
        dict: Report with one entry per item.
    """
    n = len(bundle.Lambda)
    defects = [L.abs_squared() - 1 for L in bundle.Lambda]
    unimodular = all(d.contains_zero() for d in defects)
    distinct = all(
        not (bundle.Lambda[a] - bundle.Lambda[b]).contains_zero()
        for a in range(n)
        for b in range(a + 1, n)
    )
    item_i = {
        "unimodular": unimodular,
        "distinct": distinct,
        # Reported only; the verdict rests on the enclosures.
        "max_defect_width": max((float(d.width) for d in defects), default=0.0),
        "passed": unimodular and distinct,
    }

    try:
        sigma = frame_sigma_min(system, zeros)
        item_ii = {"rank": n, "sigma_min_lower": float(sigma.lo), "passed": sigma.is_positive()}
    except SingularFrame as e:
        item_ii = {"rank": None, "sigma_min_lower": 0.0, "passed": False, "error": str(e)}

    labels = sorted(zeros.labels)
    partners = []
    # Nearest partner by the upper end of the certified gap.
    if n < 2:
        item_iii = {"vacuous": True, "partners": [], "passed": None}
    else:
        for j in labels:
            best = None
            for k in labels:
                if k == j:
                    continue
                gap = pairwise_gap(system, zeros, j, k).gap
                if best is None or gap.hi < best[1].hi:
                    best = (k, gap)
            partners.append({"j": j, "k": best[0], "gap_upper": float(best[1].hi)})
        item_iii = {"vacuous": False, "partners": partners, "passed": True}
    return {
        "i": item_i,
        "ii": item_ii,
        "iii": item_iii,
        "note": "Items (ii) and (iii) are finite-stage evidence, not a proof of hypercyclicity.",
    }
