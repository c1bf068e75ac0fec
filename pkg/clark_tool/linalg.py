# -*- coding: utf-8 -*-
"""
Small dense linear algebra with certified error bounds.

Approximate work (inverses, eigenvalues, singular values) is done by mpmath's
matrix routines in a private context at the requested precision, so the
global `mpmath.mp` settings are never touched. Approximate results are then
turned into certificates by evaluating residuals in interval arithmetic:
if X approximates the inverse of A and E = I - X A satisfies ||E||_F < 1,
then ||A^-1||_2 <= ||X||_F / (1 - ||E||_F).
"""
from functools import lru_cache

from mpmath.ctx_mp import MPContext

from .certreal import CertComplex, CertReal
from .errors import SingularFrame


@lru_cache(maxsize=16)
def working_context(bits):
    """An mpmath context fixed at `bits` of precision."""
    ctx = MPContext()
    ctx.prec = int(bits)
    return ctx


def _is_complex(rows):
    return any(isinstance(x, CertComplex) for row in rows for x in row)


def midpoint_matrix(rows, bits):
    """mpmath matrix of the interval midpoints of `rows`."""
    ctx = working_context(bits)
    if _is_complex(rows):
        return ctx.matrix(
            [[ctx.mpc(x.re.mid, x.im.mid) if isinstance(x, CertComplex) else ctx.mpc(x.mid) for x in row] for row in rows]
        )
    return ctx.matrix([[x.mid for x in row] for row in rows])


def _point_rows(matrix, bits, complex_entries):
    rows = []
    for i in range(matrix.rows):
        row = []
        for j in range(matrix.cols):
            x = matrix[i, j]
            if complex_entries:
                row.append(CertComplex(CertReal(x.real, bits=bits), CertReal(x.imag, bits=bits)))
            else:
                row.append(CertReal(x, bits=bits))
        rows.append(row)
    return rows


def matmul(a, b):
    """Interval product of two matrices given as lists of rows."""
    n, m, p = len(a), len(b), len(b[0])
    out = []
    for i in range(n):
        row = []
        for j in range(p):
            acc = a[i][0] * b[0][j]
            for k in range(1, m):
                acc = acc + a[i][k] * b[k][j]
            row.append(acc)
        out.append(row)
    return out


def frobenius_norm(rows):
    """Certified Frobenius norm."""
    total = CertReal(0)
    for row in rows:
        for x in row:
            total = total + (x.abs_squared() if isinstance(x, CertComplex) else x.square())
    return total.sqrt()


def identity_defect(x_rows, a_rows):
    """||I - X A||_F as a certified interval."""
    product = matmul(x_rows, a_rows)
    defect = []
    for i, row in enumerate(product):
        defect.append([(1 - v if i == j else -v) for j, v in enumerate(row)])
    return frobenius_norm(defect)


def approximate_inverse(rows, bits):
    """
    Numerical inverse of the midpoint matrix, as exact point intervals.

    Raises:
        SingularFrame: If mpmath reports the midpoint matrix singular.
    """
    ctx = working_context(bits)
    try:
        inv = ctx.inverse(midpoint_matrix(rows, bits))
    except ZeroDivisionError as e:
        raise SingularFrame("Midpoint matrix is numerically singular.") from e
    return _point_rows(inv, bits, _is_complex(rows))


def inverse_norm_bound(rows, bits):
    """
    Certified upper bound on ||A^-1||_2 for the interval matrix `rows`.

    Returns:
        tuple: (bound, X) where bound is a CertReal whose upper end bounds the
            norm of the inverse of every matrix in `rows` and X is the
            approximate inverse used.

    Raises:
        SingularFrame: If the residual test ||I - X A||_F < 1 fails.
    """
    x = approximate_inverse(rows, bits)
    e = identity_defect(x, rows)
    # ||I - XA|| < 1 makes A invertible with ||A^-1|| <= ||X|| / (1 - ||I - XA||).
    if not e.certainly_lt(1):
        raise SingularFrame(
            f"Residual ||I - XA||_F = {float(e.hi):.3g} does not certify invertibility."
        )
    bound = frobenius_norm(x) / (1 - e)
    return bound.upper(), x


def lower_singular_value(rows, bits):
    """
    Certified lower bound on the smallest singular value.

    Returns:
        CertReal: A point interval sigma with sigma <= sigma_min(A).
    """
    bound, _ = inverse_norm_bound(rows, bits)
    return (1 / bound).lower()


def solve_enclosure(rows, rhs, bits):
    """
    Encloses the solution of A x = b.

    The midpoint solution x0 = X b is widened componentwise by
    ||A^-1||_2 ||b - A x0||_2.

    Args:
        rows (list): Square interval matrix A.
        rhs (list): Interval right-hand side b.
        bits (int): Working precision.

    Returns:
        list: Enclosures of the components of x.
    """
    bound, x = inverse_norm_bound(rows, bits)
    x0 = [row[0] for row in matmul(x, [[v] for v in rhs])]
    # Exact midpoints, so the residual below is computed for a fixed vector.
    x0 = [v.midpoint() if isinstance(v, CertReal) else CertComplex(v.re.midpoint(), v.im.midpoint()) for v in x0]
    residual = [b - r[0] for b, r in zip(rhs, matmul(rows, [[v] for v in x0]))]
    radius = (bound * frobenius_norm([[r] for r in residual])).hi
    spread = CertReal(-radius, radius, bits=bits)
    out = []
    for v in x0:
        if isinstance(v, CertComplex):
            out.append(CertComplex(v.re + spread, v.im + spread))
        else:
            out.append(v + spread)
    return out


def eigenvalues(rows, bits):
    """Approximate eigenvalues of the midpoint matrix (mpmath mpc values)."""
    ctx = working_context(bits)
    values = ctx.eig(midpoint_matrix(rows, bits), left=False, right=False)
    # mpmath returns (E, EL, ER) for 1x1 matrices regardless of left/right.
    if isinstance(values, tuple):
        values = values[0]
    return [ctx.mpc(v) for v in values]


def eigen_decomposition(rows, bits):
    """Approximate eigenvalues and right eigenvectors (as column lists)."""
    ctx = working_context(bits)
    values, vectors = ctx.eig(midpoint_matrix(rows, bits))
    columns = [[vectors[i, j] for i in range(vectors.rows)] for j in range(vectors.cols)]
    return [ctx.mpc(v) for v in values], columns


def singular_values(rows, bits):
    """Approximate singular values, largest first."""
    ctx = working_context(bits)
    values = ctx.svd(midpoint_matrix(rows, bits), compute_uv=False)
    return sorted((ctx.mpf(v) for v in values), reverse=True)
