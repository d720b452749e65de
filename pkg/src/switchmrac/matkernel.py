"""Small dense matrix kernels: determinant, adjugate, inverse, symmetric eigen-extremes.

Everything here targets the tiny matrices this library actually meets
(regressor Grams up to ~10x10).  Determinants use exact cofactor expansion up
to 4x4 and LU with partial pivoting above that; adjugates use a det*inverse
fast path when the LU pivots are safely graded and fall back to direct
cofactor minors otherwise.  For inputs that are singular to machine precision
the sign of ``det`` is not guaranteed.
"""

import numpy as np

from .errors import AsymmetricMatrixError, DimensionError, SingularMatrixError

# Cofactor expansion is exact and cheap up to this dimension.
COFACTOR_MAX_DIM = 4

# LU-based adjugate only when min|pivot| exceeds this fraction of max|pivot|;
# beyond that the det*inv product loses too many digits and cofactor minors
# (each backward-stable on its own) take over.
ADJ_PIVOT_RATIO = 1e-6

_JACOBI_REL = 1e-15
_JACOBI_MAX_SWEEPS = 64


def _as_square(m, op):
    a = np.asarray(m, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
        raise DimensionError(f"{op} requires a square matrix, got shape {a.shape}")
    return a


def _det_cofactor(a):
    k = a.shape[0]
    if k == 1:
        return a[0, 0]
    if k == 2:
        return a[0, 0] * a[1, 1] - a[0, 1] * a[1, 0]
    if k == 3:
        return (
            a[0, 0] * (a[1, 1] * a[2, 2] - a[1, 2] * a[2, 1])
            - a[0, 1] * (a[1, 0] * a[2, 2] - a[1, 2] * a[2, 0])
            + a[0, 2] * (a[1, 0] * a[2, 1] - a[1, 1] * a[2, 0])
        )
    # first-row expansion, minors recurse into the closed forms above
    total = 0.0
    cols = np.arange(k)
    for j in range(k):
        minor = a[1:, cols != j]
        total += (-1.0) ** j * a[0, j] * _det_cofactor(minor)
    return total


def _lu_factor(a):
    """LU with partial pivoting, in place on a copy.

    Returns (lu, sign, singular) where ``singular`` flags an exactly zero
    pivot column (det is exactly 0 in that case).
    """
    k = a.shape[0]
    lu = a.copy()
    sign = 1.0
    for col in range(k):
        piv = col + int(np.argmax(np.abs(lu[col:, col])))
        if lu[piv, col] == 0.0:
            return lu, sign, True
        if piv != col:
            lu[[col, piv], :] = lu[[piv, col], :]
            sign = -sign
        inv_p = 1.0 / lu[col, col]
        for row in range(col + 1, k):
            f = lu[row, col] * inv_p
            lu[row, col] = f
            if f != 0.0:
                lu[row, col + 1 :] -= f * lu[col, col + 1 :]
    return lu, sign, False


def _lu_det(a):
    lu, sign, singular = _lu_factor(a)
    if singular:
        return 0.0
    d = sign
    for i in range(a.shape[0]):
        d *= lu[i, i]
    return d


def _lu_inverse(a):
    """Inverse via LU with partial pivoting and triangular solves."""
    k = a.shape[0]
    lu = a.copy()
    perm = np.arange(k)
    for col in range(k):
        piv = col + int(np.argmax(np.abs(lu[col:, col])))
        if piv != col:
            lu[[col, piv], :] = lu[[piv, col], :]
            perm[[col, piv]] = perm[[piv, col]]
        inv_p = 1.0 / lu[col, col]
        for row in range(col + 1, k):
            f = lu[row, col] * inv_p
            lu[row, col] = f
            if f != 0.0:
                lu[row, col + 1 :] -= f * lu[col, col + 1 :]
    inv = np.zeros((k, k))
    for rhs in range(k):
        # forward substitution on permuted unit vector
        y = np.zeros(k)
        for i in range(k):
            s = 1.0 if perm[i] == rhs else 0.0
            s -= np.dot(lu[i, :i], y[:i])
            y[i] = s
        # back substitution
        xcol = np.zeros(k)
        for i in range(k - 1, -1, -1):
            s = y[i] - np.dot(lu[i, i + 1 :], xcol[i + 1 :])
            xcol[i] = s / lu[i, i]
        inv[:, rhs] = xcol
    return inv


def det(m):
    """Determinant: cofactor expansion up to 4x4, LU with partial pivoting above."""
    a = _as_square(m, "det")
    if a.shape[0] <= COFACTOR_MAX_DIM:
        return float(_det_cofactor(a))
    return float(_lu_det(a))


def _adj_cofactor(a):
    k = a.shape[0]
    adj = np.empty((k, k))
    idx = np.arange(k)
    for i in range(k):
        rows = idx != i
        for j in range(k):
            minor = a[np.ix_(rows, idx != j)]
            if minor.shape[0] <= COFACTOR_MAX_DIM:
                md = _det_cofactor(minor)
            else:
                md = _lu_det(minor)
            adj[j, i] = (-1.0) ** (i + j) * md
    return adj


def det_adj(m):
    """Determinant and adjugate together (shares the conditioning decision).

    For dimensions <= 4 both come from exact cofactor formulas.  Above that a
    single LU provides det, and the adjugate is det * inverse when the pivots
    are well graded or direct cofactor minors otherwise.
    """
    a = _as_square(m, "det_adj")
    k = a.shape[0]
    if k == 1:
        return float(a[0, 0]), np.array([[1.0]])
    if k <= COFACTOR_MAX_DIM:
        return float(_det_cofactor(a)), _adj_cofactor(a)
    lu, sign, singular = _lu_factor(a)
    if singular:
        return 0.0, _adj_cofactor(a)
    piv = np.abs(np.diag(lu))
    d = sign * float(np.prod(np.diag(lu)))
    if piv.min() > ADJ_PIVOT_RATIO * piv.max():
        return d, d * _lu_inverse(a)
    return d, _adj_cofactor(a)


def adjugate(m):
    """Adjugate (transpose of the cofactor matrix); adj(M) @ M = det(M) * I."""
    return det_adj(m)[1]


def invert(m, threshold=1e-12):
    """Inverse via adj/det; raises SingularMatrixError below the det threshold.

    The threshold scales as ``threshold * (||M||_F / sqrt(k))**k`` so the test
    is invariant under uniform rescaling of M.
    """
    a = _as_square(m, "invert")
    k = a.shape[0]
    d, adj = det_adj(a)
    scale = np.linalg.norm(a) / np.sqrt(k)
    if abs(d) <= threshold * scale**k:
        raise SingularMatrixError(
            f"matrix of dim {k} is singular to working precision (det={d:g})",
            det_value=d,
        )
    return adj / d


def jacobi_eigh(s):
    """Eigenvalues and eigenvectors of a symmetric matrix by cyclic Jacobi.

    Rotations run until every off-diagonal entry is negligible relative to
    the geometric mean of its diagonal pair (the relative criterion that
    keeps tiny eigenvalues of graded positive semidefinite matrices at full
    relative accuracy).  Returns (eig, V) with S = V @ diag(eig) @ V.T;
    eigenvalues are unsorted.
    """
    w = np.array(s, dtype=float)
    k = w.shape[0]
    v = np.eye(k)
    if k == 1:
        return np.array([w[0, 0]]), v
    for _ in range(_JACOBI_MAX_SWEEPS):
        rotated = False
        for p in range(k - 1):
            for q in range(p + 1, k):
                apq = w[p, q]
                if apq == 0.0:
                    continue
                if abs(apq) <= _JACOBI_REL * np.sqrt(abs(w[p, p]) * abs(w[q, q])):
                    continue
                rotated = True
                tau = (w[q, q] - w[p, p]) / (2.0 * apq)
                t = np.sign(tau) if tau != 0.0 else 1.0
                t = t / (abs(tau) + np.sqrt(1.0 + tau * tau))
                c = 1.0 / np.sqrt(1.0 + t * t)
                sn = t * c
                # two-sided rotation in the (p, q) plane
                wp = c * w[:, p] - sn * w[:, q]
                wq = sn * w[:, p] + c * w[:, q]
                w[:, p] = wp
                w[:, q] = wq
                wp = c * w[p, :] - sn * w[q, :]
                wq = sn * w[p, :] + c * w[q, :]
                w[p, :] = wp
                w[q, :] = wq
                vp = c * v[:, p] - sn * v[:, q]
                vq = sn * v[:, p] + c * v[:, q]
                v[:, p] = vp
                v[:, q] = vq
        if not rotated:
            break
    return np.diag(w).copy(), v


def sym_eig_extremes(s, sym_tol=1e-9):
    """Extreme eigenvalues of a symmetric matrix via cyclic Jacobi rotations.

    Asymmetric input is a contract violation.
    """
    a = _as_square(s, "sym_eig_extremes")
    scale = float(np.max(np.abs(a)))
    if scale == 0.0:
        return 0.0, 0.0
    if float(np.max(np.abs(a - a.T))) > sym_tol * scale:
        raise AsymmetricMatrixError(
            "sym_eig_extremes requires a symmetric matrix "
            f"(max|S - S^T| exceeds {sym_tol:g} relative)"
        )
    eig, _ = jacobi_eigh(0.5 * (a + a.T))
    return float(eig.min()), float(eig.max())


def psd_det_adj(s):
    """Determinant and adjugate of a symmetric PSD matrix via its eigensystem.

    With S = V diag(lam) V^T: det = prod(lam) and
    adj(S) = V diag(prod_{j != i} lam_j) V^T.  Unlike the LU/cofactor route,
    products of eigenvalues never cancel across modes, so the result keeps
    full relative accuracy even when det underflows toward zero -- which is
    the normal operating regime for exponentially weighted regressor Grams.
    Also returns lam_min/lam_max (in magnitude) as a conditioning measure.
    """
    a = _as_square(s, "psd_det_adj")
    k = a.shape[0]
    if k == 1:
        return float(a[0, 0]), np.array([[1.0]]), 1.0
    eig, v = jacobi_eigh(a)
    d = float(np.prod(eig))
    cof = np.empty(k)
    for i in range(k):
        prod = 1.0
        for j in range(k):
            if j != i:
                prod *= eig[j]
        cof[i] = prod
    adj = (v * cof) @ v.T
    mags = np.abs(eig)
    ratio = float(mags.min() / mags.max()) if mags.max() > 0.0 else 0.0
    return d, adj, ratio
