# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled run loop: hot-kernel twin of the pure-Python core.

Implements the identical stepping algorithm (state layout, derivative math,
Gram determinant/adjugate strategy, event handling, telemetry schema) with
plain C loops.  Values agree with the Python core to floating-point noise;
cross-core tests pin the tolerance.
"""

import numpy as np

from . import _packed

from libc.math cimport exp, fabs, isfinite, sin, sqrt, tanh

cdef int C_OK = 0
cdef int C_FINITE_ESCAPE = 1
cdef int C_ROW_OVERFLOW = 2
cdef int C_EVENT_OVERFLOW = 3

STATUS_OK = 0
STATUS_FINITE_ESCAPE = 1
STATUS_ROW_OVERFLOW = 2
STATUS_EVENT_OVERFLOW = 3

DEF LAND_REL = 1e-9

cdef double ADJ_PIVOT_RATIO = 1e-6


# ---------------------------------------------------------------------------
# dense kernels on raw buffers


cdef double _lu_factor(double* lu, int k, double* ratio_out) noexcept nogil:
    """In-place LU with partial pivoting; returns det, writes pivot ratio."""
    cdef int col, row, piv, j
    cdef double best, v, inv_p, f, d, pmin, pmax
    cdef double sign = 1.0
    for col in range(k):
        piv = col
        best = fabs(lu[col * k + col])
        for row in range(col + 1, k):
            v = fabs(lu[row * k + col])
            if v > best:
                best = v
                piv = row
        if lu[piv * k + col] == 0.0:
            ratio_out[0] = 0.0
            return 0.0
        if piv != col:
            for j in range(k):
                v = lu[col * k + j]
                lu[col * k + j] = lu[piv * k + j]
                lu[piv * k + j] = v
            sign = -sign
        inv_p = 1.0 / lu[col * k + col]
        for row in range(col + 1, k):
            f = lu[row * k + col] * inv_p
            lu[row * k + col] = f
            if f != 0.0:
                for j in range(col + 1, k):
                    lu[row * k + j] -= f * lu[col * k + j]
    d = sign
    pmin = fabs(lu[0])
    pmax = pmin
    for col in range(k):
        v = lu[col * k + col]
        d *= v
        v = fabs(v)
        if v < pmin:
            pmin = v
        if v > pmax:
            pmax = v
    ratio_out[0] = pmin / pmax if pmax > 0.0 else 0.0
    return d


cdef double _det_small(double* a, int k) noexcept nogil:
    """Cofactor-expansion determinant for k <= 4."""
    cdef double md, tot
    cdef double sub[9]
    cdef int j, r, c, cc
    if k == 1:
        return a[0]
    if k == 2:
        return a[0] * a[3] - a[1] * a[2]
    if k == 3:
        return (
            a[0] * (a[4] * a[8] - a[5] * a[7])
            - a[1] * (a[3] * a[8] - a[5] * a[6])
            + a[2] * (a[3] * a[7] - a[4] * a[6])
        )
    # k == 4: expand along the first row with 3x3 minors
    tot = 0.0
    for j in range(4):
        cc = 0
        for r in range(1, 4):
            for c in range(4):
                if c == j:
                    continue
                sub[cc] = a[r * 4 + c]
                cc += 1
        md = _det_small(sub, 3)
        if j % 2 == 0:
            tot += a[j] * md
        else:
            tot -= a[j] * md
    return tot


cdef void _adj_cofactor(double* a, int k, double* adj, double* mscr) noexcept nogil:
    """Adjugate via cofactor minors; mscr holds a (k-1)^2 scratch block."""
    cdef int i, j, r, c, cc
    cdef double md, ratio
    cdef int km = k - 1
    if k == 1:
        adj[0] = 1.0
        return
    for i in range(k):
        for j in range(k):
            cc = 0
            for r in range(k):
                if r == i:
                    continue
                for c in range(k):
                    if c == j:
                        continue
                    mscr[cc] = a[r * k + c]
                    cc += 1
            if km <= 4:
                md = _det_small(mscr, km)
            else:
                md = _lu_factor(mscr, km, &ratio)
            if (i + j) % 2 == 0:
                adj[j * k + i] = md
            else:
                adj[j * k + i] = -md


cdef void _lu_inverse(double* a, int k, double* inv, double* lu, int* perm) noexcept nogil:
    """Inverse via LU with partial pivoting and triangular solves."""
    cdef int col, row, piv, j, i, rhs
    cdef double best, v, inv_p, f, s
    for i in range(k * k):
        lu[i] = a[i]
    for i in range(k):
        perm[i] = i
    for col in range(k):
        piv = col
        best = fabs(lu[col * k + col])
        for row in range(col + 1, k):
            v = fabs(lu[row * k + col])
            if v > best:
                best = v
                piv = row
        if piv != col:
            for j in range(k):
                v = lu[col * k + j]
                lu[col * k + j] = lu[piv * k + j]
                lu[piv * k + j] = v
            j = perm[col]
            perm[col] = perm[piv]
            perm[piv] = j
        inv_p = 1.0 / lu[col * k + col]
        for row in range(col + 1, k):
            f = lu[row * k + col] * inv_p
            lu[row * k + col] = f
            if f != 0.0:
                for j in range(col + 1, k):
                    lu[row * k + j] -= f * lu[col * k + j]
    for rhs in range(k):
        for i in range(k):
            s = 1.0 if perm[i] == rhs else 0.0
            for j in range(i):
                s -= lu[i * k + j] * inv[j * k + rhs]
            inv[i * k + rhs] = s
        for i in range(k - 1, -1, -1):
            s = inv[i * k + rhs]
            for j in range(i + 1, k):
                s -= lu[i * k + j] * inv[j * k + rhs]
            inv[i * k + rhs] = s / lu[i * k + i]


cdef class _Ctx:
    """Packed scenario plus every scratch buffer the step kernel touches."""

    cdef int n, m, p, big, q, L, S
    cdef int off_x, off_xref, off_phibar, off_gram, off_mix, off_theta
    cdef double l, sigma, delta_pr, rho, gamma0, gamma1
    cdef double eps_coeff, arm_ratio, adapt_trust, x_max, t0, t_end, h, t_up0
    cdef bint detector_on, immediate_reset
    cdef int basis_kind

    cdef double[::1] seg_t
    cdef double[:, :, ::1] seg_A, seg_B, seg_TH, seg_theta
    cdef double[:, ::1] a_ref, b_ref
    cdef long[::1] r_kind
    cdef double[:, ::1] r_par
    cdef long[::1] r_pw_off
    cdef double[::1] r_pw_t, r_pw_v
    cdef long[:, ::1] mono_expo
    cdef double[:, ::1] sin_par
    cdef long[::1] tab_idx, tab_off
    cdef double[::1] tab_x, tab_y

    # telemetry column offsets
    cdef int co_t, co_x, co_xref, co_u, co_th, co_om, co_de, co_eps
    cdef int co_eref, co_ttil, co_xi, co_seg, co_ihat, co_rst
    cdef int co_thr, co_armed, co_score, co_ratio, co_adapt, co_phn, co_y, co_z
    cdef int ncols

    # scratch
    cdef double[::1] psi, rsig, omega_reg, uvec, ext, phn, zbn
    cdef double[::1] lu, adj, zmat, mscr, inv
    cdef double[::1] s_mat, adj_s, m_op, y_reg
    cdef double[::1] k1, k2, k3, k4, ytmp, eig, cof, zb
    cdef int[::1] perm, comb

    def __init__(self, pk):
        lay = pk.layout
        self.n = lay.n
        self.m = lay.m
        self.p = lay.p
        self.big = lay.big
        self.q = lay.q
        self.L = lay.size
        self.S = pk.seg_t.shape[0]
        self.off_x = lay.off_x
        self.off_xref = lay.off_xref
        self.off_phibar = lay.off_phibar
        self.off_gram = lay.off_gram
        self.off_mix = lay.off_mix
        self.off_theta = lay.off_theta
        self.l = pk.l
        self.sigma = pk.sigma
        self.delta_pr = pk.delta_pr
        self.rho = pk.rho
        self.gamma0 = pk.gamma0
        self.gamma1 = pk.gamma1
        self.eps_coeff = pk.eps_coeff
        self.arm_ratio = pk.arm_ratio
        self.adapt_trust = pk.adapt_trust
        self.x_max = pk.x_max
        self.t0 = pk.t0
        self.t_end = pk.t_end
        self.h = pk.h
        self.t_up0 = pk.t_up0
        self.detector_on = pk.detector_on
        self.immediate_reset = pk.immediate_reset
        self.basis_kind = pk.basis_kind

        self.seg_t = np.ascontiguousarray(pk.seg_t)
        self.seg_A = np.ascontiguousarray(pk.seg_A)
        self.seg_B = np.ascontiguousarray(pk.seg_B)
        self.seg_TH = np.ascontiguousarray(pk.seg_TH)
        self.seg_theta = np.ascontiguousarray(pk.seg_theta)
        self.a_ref = np.ascontiguousarray(pk.a_ref)
        self.b_ref = np.ascontiguousarray(pk.b_ref)
        self.r_kind = np.ascontiguousarray(pk.r_kind)
        self.r_par = np.ascontiguousarray(pk.r_par)
        self.r_pw_off = np.ascontiguousarray(pk.r_pw_off)
        self.r_pw_t = np.ascontiguousarray(pk.r_pw_t if pk.r_pw_t.size else np.zeros(1))
        self.r_pw_v = np.ascontiguousarray(pk.r_pw_v if pk.r_pw_v.size else np.zeros(1))
        self.mono_expo = np.ascontiguousarray(
            pk.mono_expo if pk.mono_expo.size else np.zeros((1, self.n), dtype=np.int64)
        )
        self.sin_par = np.ascontiguousarray(
            pk.sin_par if pk.sin_par.size else np.zeros((1, 4))
        )
        self.tab_idx = np.ascontiguousarray(
            pk.tab_idx if pk.tab_idx.size else np.zeros(1, dtype=np.int64)
        )
        self.tab_off = np.ascontiguousarray(pk.tab_off)
        self.tab_x = np.ascontiguousarray(pk.tab_x if pk.tab_x.size else np.zeros(1))
        self.tab_y = np.ascontiguousarray(pk.tab_y if pk.tab_y.size else np.zeros(1))

        cols, ncols = _packed.telemetry_columns(lay)
        self.ncols = ncols
        self.co_t = cols["t"][0]
        self.co_x = cols["x"][0]
        self.co_xref = cols["xref"][0]
        self.co_u = cols["u"][0]
        self.co_th = cols["theta_hat"][0]
        self.co_om = cols["omega"][0]
        self.co_de = cols["delta"][0]
        self.co_eps = cols["eps_norm"][0]
        self.co_eref = cols["eref_norm"][0]
        self.co_ttil = cols["ttil_norm"][0]
        self.co_xi = cols["xi_norm"][0]
        self.co_seg = cols["seg"][0]
        self.co_ihat = cols["ihat"][0]
        self.co_rst = cols["reset_flag"][0]
        self.co_thr = cols["thr_eff"][0]
        self.co_armed = cols["armed"][0]
        self.co_score = cols["score"][0]
        self.co_ratio = cols["ratio"][0]
        self.co_adapt = cols["adapt_on"][0]
        self.co_phn = cols["phi_bar_n"][0]
        self.co_y = cols["y_reg"][0]
        self.co_z = cols["z_mix"][0]

        q = self.q
        self.psi = np.zeros(self.p)
        self.rsig = np.zeros(self.m)
        self.omega_reg = np.zeros(self.big)
        self.uvec = np.zeros(self.m)
        self.ext = np.zeros(q)
        self.phn = np.zeros(q)
        self.zbn = np.zeros(self.n)
        self.lu = np.zeros(q * q)
        self.adj = np.zeros(q * q)
        self.zmat = np.zeros(q * self.n)
        self.mscr = np.zeros((q - 1) * (q - 1) if q > 1 else 1)
        self.inv = np.zeros(q * q)
        self.s_mat = np.zeros(self.m * self.m)
        self.adj_s = np.zeros(self.m * self.m)
        self.m_op = np.zeros(self.m * self.n)
        self.y_reg = np.zeros(self.big * self.m)
        self.k1 = np.zeros(self.L)
        self.k2 = np.zeros(self.L)
        self.k3 = np.zeros(self.L)
        self.k4 = np.zeros(self.L)
        self.ytmp = np.zeros(self.L)
        self.eig = np.zeros(q)
        self.cof = np.zeros(q)
        self.perm = np.zeros(q, dtype=np.int32)
        self.zb = np.zeros(self.n * self.m)
        self.comb = np.zeros(max(self.m, 1), dtype=np.int32)


cdef void _eval_basis(_Ctx c, double* x, double* psi) noexcept nogil:
    cdef int k, j, e, idx, lo, hi
    cdef double acc, xv, x0, x1
    if c.basis_kind == 0:  # tanh
        for k in range(c.p):
            psi[k] = tanh(x[k])
    elif c.basis_kind == 1:  # monomials
        for k in range(c.p):
            acc = 1.0
            for j in range(c.n):
                for e in range(<int>c.mono_expo[k, j]):
                    acc *= x[j]
            psi[k] = acc
    elif c.basis_kind == 2:  # sinusoid
        for k in range(c.p):
            idx = <int>c.sin_par[k, 3]
            psi[k] = c.sin_par[k, 0] * sin(c.sin_par[k, 1] * x[idx] + c.sin_par[k, 2])
    else:  # piecewise-linear table
        for k in range(c.p):
            lo = <int>c.tab_off[k]
            hi = <int>c.tab_off[k + 1]
            xv = x[<int>c.tab_idx[k]]
            if xv <= c.tab_x[lo]:
                psi[k] = c.tab_y[lo]
            elif xv >= c.tab_x[hi - 1]:
                psi[k] = c.tab_y[hi - 1]
            else:
                j = lo + 1
                while c.tab_x[j] < xv:
                    j += 1
                x0 = c.tab_x[j - 1]
                x1 = c.tab_x[j]
                psi[k] = c.tab_y[j - 1] + (c.tab_y[j] - c.tab_y[j - 1]) * (xv - x0) / (x1 - x0)


cdef void _eval_ref(_Ctx c, double t, double* r) noexcept nogil:
    cdef int ch, lo, hi, j
    for ch in range(c.m):
        if c.r_kind[ch] == 0:
            r[ch] = c.r_par[ch, 0]
        elif c.r_kind[ch] == 1:
            r[ch] = c.r_par[ch, 0] * exp(-c.r_par[ch, 1] * t) + c.r_par[ch, 2]
        elif c.r_kind[ch] == 2:
            r[ch] = c.r_par[ch, 0] * sin(c.r_par[ch, 1] * t + c.r_par[ch, 2]) + c.r_par[ch, 3]
        else:
            lo = <int>c.r_pw_off[ch]
            hi = <int>c.r_pw_off[ch + 1]
            j = lo
            while j + 1 < hi and c.r_pw_t[j + 1] <= t:
                j += 1
            r[ch] = c.r_pw_v[j]


cdef void _jacobi_eigh(double* w, double* v, double* eig, int k) noexcept nogil:
    """Cyclic Jacobi with the relative off-diagonal stopping criterion.

    Keeps tiny eigenvalues of graded PSD matrices at full relative accuracy;
    w is destroyed, v receives the accumulated rotations (columns).
    """
    cdef int sweep, p, q, i
    cdef bint rotated
    cdef double apq, tau, t, cc, sn, wp, wq
    for i in range(k * k):
        v[i] = 0.0
    for i in range(k):
        v[i * k + i] = 1.0
    for sweep in range(64):
        rotated = False
        for p in range(k - 1):
            for q in range(p + 1, k):
                apq = w[p * k + q]
                if apq == 0.0:
                    continue
                if fabs(apq) <= 1e-15 * sqrt(fabs(w[p * k + p]) * fabs(w[q * k + q])):
                    continue
                rotated = True
                tau = (w[q * k + q] - w[p * k + p]) / (2.0 * apq)
                if tau != 0.0:
                    t = 1.0 if tau > 0.0 else -1.0
                else:
                    t = 1.0
                t = t / (fabs(tau) + sqrt(1.0 + tau * tau))
                cc = 1.0 / sqrt(1.0 + t * t)
                sn = t * cc
                for i in range(k):
                    wp = cc * w[i * k + p] - sn * w[i * k + q]
                    wq = sn * w[i * k + p] + cc * w[i * k + q]
                    w[i * k + p] = wp
                    w[i * k + q] = wq
                for i in range(k):
                    wp = cc * w[p * k + i] - sn * w[q * k + i]
                    wq = sn * w[p * k + i] + cc * w[q * k + i]
                    w[p * k + i] = wp
                    w[q * k + i] = wq
                for i in range(k):
                    wp = cc * v[i * k + p] - sn * v[i * k + q]
                    wq = sn * v[i * k + p] + cc * v[i * k + q]
                    v[i * k + p] = wp
                    v[i * k + q] = wq
        if not rotated:
            break
    for i in range(k):
        eig[i] = w[i * k + i]


cdef double _gram_det_adj(_Ctx c, double* w, double* adj, double* ratio_out) noexcept nogil:
    """det/adjugate of the symmetric PSD Gram via its eigensystem.

    Eigenvalue products never cancel across modes, so adj(W) @ upsilon keeps
    relative accuracy even for vanishing determinants; the eigenvalue
    magnitude ratio doubles as the detector's conditioning measure.
    """
    cdef int q = c.q
    cdef int i, j, k2
    cdef double d, prod, mmin, mmax, acc
    if q == 1:
        adj[0] = 1.0
        ratio_out[0] = 1.0
        return w[0]
    for i in range(q * q):
        c.lu[i] = w[i]
    _jacobi_eigh(&c.lu[0], &c.inv[0], &c.eig[0], q)
    d = 1.0
    for i in range(q):
        d *= c.eig[i]
    for i in range(q):
        prod = 1.0
        for j in range(q):
            if j != i:
                prod *= c.eig[j]
        c.cof[i] = prod
    # adj = V diag(cof) V^T
    for i in range(q):
        for j in range(q):
            acc = 0.0
            for k2 in range(q):
                acc += c.inv[i * q + k2] * c.cof[k2] * c.inv[j * q + k2]
            adj[i * q + j] = acc
    mmin = fabs(c.eig[0])
    mmax = mmin
    for i in range(1, q):
        prod = fabs(c.eig[i])
        if prod < mmin:
            mmin = prod
        if prod > mmax:
            mmax = prod
    ratio_out[0] = mmin / mmax if mmax > 0.0 else 0.0
    return d


cdef double _small_det_adj(_Ctx c, double* s, int k, double* adj) noexcept nogil:
    """det/adjugate of the projected regression Gram (k = m, usually tiny)."""
    cdef double d, ratio
    cdef int i
    if k == 1:
        adj[0] = 1.0
        return s[0]
    if k == 2:
        adj[0] = s[3]
        adj[1] = -s[1]
        adj[2] = -s[2]
        adj[3] = s[0]
        return s[0] * s[3] - s[1] * s[2]
    if k <= 4:
        _adj_cofactor(s, k, adj, &c.mscr[0])
        return _det_small(s, k)
    for i in range(k * k):
        c.lu[i] = s[i]
    d = _lu_factor(&c.lu[0], k, &ratio)
    if ratio > ADJ_PIVOT_RATIO:
        _lu_inverse(s, k, &c.inv[0], &c.lu[0], &c.perm[0])
        for i in range(k * k):
            adj[i] = d * c.inv[i]
    else:
        _adj_cofactor(s, k, adj, &c.mscr[0])
    return d


cdef double _gram_det_cb(_Ctx c, double* z) noexcept nogil:
    """det(z_B^T z_B) as a sum of squared minors of z_B (nonnegative)."""
    cdef int n = c.n, m = c.m
    cdef int i, j, k
    cdef double d, total, ratio
    # z_B[k, j] = z[(n + j) * n + k]
    for k in range(n):
        for j in range(m):
            c.zb[k * m + j] = z[(n + j) * n + k]
    if n == m:
        if m <= 4:
            d = _det_small(&c.zb[0], m)
        else:
            for i in range(m * m):
                c.s_mat[i] = c.zb[i]
            d = _lu_factor(&c.s_mat[0], m, &ratio)
        return d * d
    total = 0.0
    for i in range(m):
        c.comb[i] = i
    while True:
        for i in range(m):
            for j in range(m):
                c.s_mat[i * m + j] = c.zb[c.comb[i] * m + j]
        if m <= 4:
            d = _det_small(&c.s_mat[0], m)
        else:
            d = _lu_factor(&c.s_mat[0], m, &ratio)
        total += d * d
        i = m - 1
        while i >= 0 and c.comb[i] == n - m + i:
            i -= 1
        if i < 0:
            break
        c.comb[i] += 1
        for j in range(i + 1, m):
            c.comb[j] = c.comb[j - 1] + 1
    return total


cdef double _regression(_Ctx c, double* z, double delta) noexcept nogil:
    """Slice z, build the scalar regression into c.y_reg; returns Omega."""
    cdef int n = c.n, m = c.m, p = c.p
    cdef int i, j, k
    cdef double acc, omega
    # s = z_B^T z_B with z_B[k, j] = z[(n + j) * n + k]
    omega = _gram_det_cb(c, z)
    for i in range(m):
        for j in range(m):
            acc = 0.0
            for k in range(n):
                acc += z[(n + i) * n + k] * z[(n + j) * n + k]
            c.s_mat[i * m + j] = acc
    _small_det_adj(c, &c.s_mat[0], m, &c.adj_s[0])
    # m_op = adj_s @ z_B^T  (m x n)
    for i in range(m):
        for k in range(n):
            acc = 0.0
            for j in range(m):
                acc += c.adj_s[i * m + j] * z[(n + j) * n + k]
            c.m_op[i * n + k] = acc
    # rows 0..n of y_reg: (m_op @ (delta a_ref - z_A))^T, z_A[k, i] = z[i * n + k]
    for i in range(n):
        for j in range(m):
            acc = 0.0
            for k in range(n):
                acc += c.m_op[j * n + k] * (delta * c.a_ref[k, i] - z[i * n + k])
            c.y_reg[i * m + j] = acc
    # rows n..n+m: (delta m_op @ b_ref)^T
    for i in range(m):
        for j in range(m):
            acc = 0.0
            for k in range(n):
                acc += c.m_op[j * n + k] * c.b_ref[k, i]
            c.y_reg[(n + i) * m + j] = delta * acc
    # rows n+m..: (m_op @ z_Bt)^T with z_Bt[k, i] = z[(n + m + i) * n + k]
    for i in range(p):
        for j in range(m):
            acc = 0.0
            for k in range(n):
                acc += c.m_op[j * n + k] * z[(n + m + i) * n + k]
            c.y_reg[(n + m + i) * m + j] = acc
    return omega


cdef double _indicator_norms(
    _Ctx c, double delta, double* z, double* scale_out,
) noexcept nogil:
    """(|eps|_F, scale) of the switch indicator from c.phn / c.zbn / z.

    Uses |eps|_F = |phn| * |delta * zbn - z^T phn|; the scale is the natural
    magnitude of the indicator's two terms.
    """
    cdef int n = c.n, q = c.q
    cdef int i, j
    cdef double acc, vnorm2 = 0.0, phn2 = 0.0, zbn2 = 0.0, znorm2 = 0.0
    for i in range(q):
        phn2 += c.phn[i] * c.phn[i]
    for j in range(n):
        acc = delta * c.zbn[j]
        for i in range(q):
            acc -= z[i * n + j] * c.phn[i]
        vnorm2 += acc * acc
        zbn2 += c.zbn[j] * c.zbn[j]
    for i in range(q * n):
        znorm2 += z[i] * z[i]
    scale_out[0] = delta * sqrt(phn2) * sqrt(zbn2) + phn2 * sqrt(znorm2)
    return sqrt(phn2) * sqrt(vnorm2)


cdef void _deriv(_Ctx c, int si, double t_hat, double t, double* y, double* dy) noexcept nogil:
    cdef int n = c.n, m = c.m, p = c.p, big = c.big, q = c.q
    cdef int i, j, k
    cdef double acc, ns, el, wgt, delta, omega, rate, ratio, eps_norm, eps_scale
    cdef double* x = y + c.off_x
    cdef double* xref = y + c.off_xref
    cdef double* phib = y + c.off_phibar
    cdef double* wmat = y + c.off_gram
    cdef double* umat = y + c.off_mix
    cdef double* th = y + c.off_theta

    _eval_basis(c, x, &c.psi[0])
    _eval_ref(c, t, &c.rsig[0])
    for i in range(n):
        c.omega_reg[i] = x[i]
    for i in range(m):
        c.omega_reg[n + i] = c.rsig[i]
    for i in range(p):
        c.omega_reg[n + m + i] = -c.psi[i]
    # u = theta_hat^T omega_reg
    for j in range(m):
        acc = 0.0
        for i in range(big):
            acc += th[i * m + j] * c.omega_reg[i]
        c.uvec[j] = acc
    # xdot = A x + B (u + theta_unc^T psi)
    for i in range(n):
        acc = 0.0
        for j in range(n):
            acc += c.seg_A[si, i, j] * x[j]
        dy[c.off_x + i] = acc
    for j in range(m):
        acc = c.uvec[j]
        for i in range(p):
            acc += c.seg_TH[si, i, j] * c.psi[i]
        for i in range(n):
            dy[c.off_x + i] += c.seg_B[si, i, j] * acc
    # xrefdot = A_ref xref + B_ref r
    for i in range(n):
        acc = 0.0
        for j in range(n):
            acc += c.a_ref[i, j] * xref[j]
        for j in range(m):
            acc += c.b_ref[i, j] * c.rsig[j]
        dy[c.off_xref + i] = acc
    # filtered regressor: phibdot = -l phib + [x; u; psi]
    for i in range(n):
        dy[c.off_phibar + i] = -c.l * phib[i] + x[i]
    for i in range(m):
        dy[c.off_phibar + n + i] = -c.l * phib[n + i] + c.uvec[i]
    for i in range(p):
        dy[c.off_phibar + n + m + i] = -c.l * phib[n + m + i] + c.psi[i]
    # normalized extension and regressand
    el = exp(-c.l * (t - t_hat))
    acc = el * el
    for i in range(big):
        c.ext[i] = phib[i]
        acc += phib[i] * phib[i]
    c.ext[big] = el
    ns = 1.0 / (1.0 + acc)
    for i in range(q):
        c.phn[i] = ns * c.ext[i]
    for i in range(n):
        c.zbn[i] = ns * (x[i] - c.l * phib[i])
    wgt = exp(-c.sigma * (t - t_hat))
    for i in range(q):
        for j in range(q):
            dy[c.off_gram + i * q + j] = wgt * c.phn[i] * c.phn[j]
        for j in range(n):
            dy[c.off_mix + i * n + j] = wgt * c.phn[i] * c.zbn[j]
    # adaptation
    delta = _gram_det_adj(c, wmat, &c.adj[0], &ratio)
    for i in range(q):
        for j in range(n):
            acc = 0.0
            for k in range(q):
                acc += c.adj[i * q + k] * umat[k * n + j]
            c.zmat[i * n + j] = acc
    omega = _regression(c, &c.zmat[0], delta)
    eps_norm = _indicator_norms(c, delta, &c.zmat[0], &eps_scale)
    if omega > c.rho and eps_scale > 0.0 and eps_norm <= c.adapt_trust * eps_scale:
        rate = c.gamma1
        for i in range(big):
            rate += c.gamma0 * c.omega_reg[i] * c.omega_reg[i]
        for i in range(big * m):
            dy[c.off_theta + i] = -rate * (th[i] - c.y_reg[i] / omega)
    else:
        for i in range(big * m):
            dy[c.off_theta + i] = 0.0


cdef void _rk4(_Ctx c, int si, double t_hat, double t, double h, double* y) noexcept nogil:
    cdef int i
    cdef int L = c.L
    _deriv(c, si, t_hat, t, y, &c.k1[0])
    for i in range(L):
        c.ytmp[i] = y[i] + 0.5 * h * c.k1[i]
    _deriv(c, si, t_hat, t + 0.5 * h, &c.ytmp[0], &c.k2[0])
    for i in range(L):
        c.ytmp[i] = y[i] + 0.5 * h * c.k2[i]
    _deriv(c, si, t_hat, t + 0.5 * h, &c.ytmp[0], &c.k3[0])
    for i in range(L):
        c.ytmp[i] = y[i] + h * c.k3[i]
    _deriv(c, si, t_hat, t + h, &c.ytmp[0], &c.k4[0])
    for i in range(L):
        y[i] = y[i] + (h / 6.0) * (c.k1[i] + 2.0 * c.k2[i] + 2.0 * c.k3[i] + c.k4[i])


cdef double _signals(
    _Ctx c, double t_hat, double t, double* y,
    double* delta_out, double* omega_out, double* eps_scale_out,
    double* ratio_out, double* znorm_out, double* adapt_out,
) noexcept nogil:
    """Step-end observables; fills uvec/phn/zbn/zmat/y_reg; returns |eps|_F."""
    cdef int n = c.n, m = c.m, p = c.p, big = c.big, q = c.q
    cdef int i, j, k
    cdef double acc, ns, el, delta, omega, eps_norm, znorm
    cdef double* x = y + c.off_x
    cdef double* phib = y + c.off_phibar
    cdef double* wmat = y + c.off_gram
    cdef double* umat = y + c.off_mix
    cdef double* th = y + c.off_theta

    _eval_basis(c, x, &c.psi[0])
    _eval_ref(c, t, &c.rsig[0])
    for i in range(n):
        c.omega_reg[i] = x[i]
    for i in range(m):
        c.omega_reg[n + i] = c.rsig[i]
    for i in range(p):
        c.omega_reg[n + m + i] = -c.psi[i]
    for j in range(m):
        acc = 0.0
        for i in range(big):
            acc += th[i * m + j] * c.omega_reg[i]
        c.uvec[j] = acc
    el = exp(-c.l * (t - t_hat))
    acc = el * el
    for i in range(big):
        c.ext[i] = phib[i]
        acc += phib[i] * phib[i]
    c.ext[big] = el
    ns = 1.0 / (1.0 + acc)
    for i in range(q):
        c.phn[i] = ns * c.ext[i]
    for i in range(n):
        c.zbn[i] = ns * (x[i] - c.l * phib[i])
    delta = _gram_det_adj(c, wmat, &c.adj[0], ratio_out)
    for i in range(q):
        for j in range(n):
            acc = 0.0
            for k in range(q):
                acc += c.adj[i * q + k] * umat[k * n + j]
            c.zmat[i * n + j] = acc
    omega = _regression(c, &c.zmat[0], delta)
    delta_out[0] = delta
    omega_out[0] = omega
    eps_norm = _indicator_norms(c, delta, &c.zmat[0], eps_scale_out)
    znorm = 0.0
    for i in range(q * n):
        znorm += c.zmat[i] * c.zmat[i]
    znorm_out[0] = sqrt(znorm)
    if (omega > c.rho and eps_scale_out[0] > 0.0
            and eps_norm <= c.adapt_trust * eps_scale_out[0]):
        adapt_out[0] = 1.0
    else:
        adapt_out[0] = 0.0
    return eps_norm


cdef int _observe(
    _Ctx c, double* y, double t, int seg_idx, double t_hat, double reset_flag,
    int det_i, double thr, double armed, double score, double eps_norm,
    double delta, double omega, double ratio, double adapt_on,
    double[:, ::1] telem, int row,
) noexcept nogil:
    """Write one telemetry row; returns nonzero on buffer overflow/abort."""
    cdef int n = c.n, m = c.m, big = c.big, q = c.q
    cdef int i
    cdef double eref2 = 0.0, tt2 = 0.0, d, xnorm2 = 0.0
    if row >= telem.shape[0]:
        return C_ROW_OVERFLOW
    for i in range(c.L):
        if not isfinite(y[i]):
            return C_FINITE_ESCAPE
    for i in range(n):
        xnorm2 += y[c.off_x + i] * y[c.off_x + i]
    if sqrt(xnorm2) > c.x_max:
        return C_FINITE_ESCAPE
    telem[row, c.co_t] = t
    for i in range(n):
        telem[row, c.co_x + i] = y[c.off_x + i]
        telem[row, c.co_xref + i] = y[c.off_xref + i]
        d = y[c.off_x + i] - y[c.off_xref + i]
        eref2 += d * d
    for i in range(m):
        telem[row, c.co_u + i] = c.uvec[i]
    for i in range(big * m):
        telem[row, c.co_th + i] = y[c.off_theta + i]
        d = y[c.off_theta + i] - c.seg_theta[seg_idx, i // m, i % m]
        tt2 += d * d
    telem[row, c.co_om] = omega
    telem[row, c.co_de] = delta
    telem[row, c.co_eps] = eps_norm
    telem[row, c.co_eref] = sqrt(eref2)
    telem[row, c.co_ttil] = sqrt(tt2)
    telem[row, c.co_xi] = sqrt(eref2 + tt2)
    telem[row, c.co_seg] = seg_idx
    telem[row, c.co_ihat] = det_i
    telem[row, c.co_rst] = reset_flag
    telem[row, c.co_thr] = thr
    telem[row, c.co_armed] = armed
    telem[row, c.co_score] = score
    telem[row, c.co_ratio] = ratio
    telem[row, c.co_adapt] = adapt_on
    for i in range(q):
        telem[row, c.co_phn + i] = c.phn[i]
    for i in range(big * m):
        telem[row, c.co_y + i] = c.y_reg[i]
    for i in range(q * n):
        telem[row, c.co_z + i] = c.zmat[i]
    return -1


def run_core(pk, y0, double[:, ::1] telem, double[:, ::1] events):
    """Integrate the scenario; same contract as the Python core's run_core."""
    cdef _Ctx c = _Ctx(pk)
    if telem.shape[1] != c.ncols:
        raise ValueError("telemetry buffer has the wrong column count")
    arr = np.asarray(y0, dtype=float).copy()
    cdef double[::1] yv = arr
    cdef double* y = &yv[0]

    cdef int row = 0, n_events = 0, seg_idx = 0, det_i = 1
    cdef double t = c.t0, t_hat = c.t0, det_t_up = c.t_up0
    cdef double pending = 0.0
    cdef bint have_pending = False
    cdef double z_max = 0.0
    cdef double tiny = LAND_REL * c.h
    cdef double stop, span_start, remaining, hs
    cdef bint landing
    cdef long k_step
    cdef int status = STATUS_OK
    cdef int sw_next = 1  # index into seg_t of the next switch
    cdef int rc
    cdef double delta, omega, eps_scale, ratio, znorm, eps_norm, adapt_on
    cdef double thr, armed, score, reset_flag

    # --- initial observation at t0
    eps_norm = _signals(c, t_hat, t, y, &delta, &omega, &eps_scale, &ratio, &znorm, &adapt_on)
    if znorm > z_max:
        z_max = znorm
    armed = 1.0 if ratio >= c.arm_ratio else 0.0
    thr = c.eps_coeff * eps_scale
    score = eps_norm / eps_scale if eps_scale > 0.0 else 0.0
    rc = _observe(c, y, t, seg_idx, t_hat, 0.0, det_i, thr, armed, score,
                  eps_norm, delta, omega, ratio, adapt_on, telem, row)
    if rc >= 0:
        return {"status": rc, "rows": row, "n_events": n_events,
                "t_final": t, "abort_t": t, "z_max": z_max}
    row += 1

    while t < c.t_end - tiny:
        stop = c.t_end
        if sw_next < c.S and c.seg_t[sw_next] < stop:
            stop = c.seg_t[sw_next]
        if have_pending and pending < stop:
            stop = pending
        span_start = t
        k_step = 0
        while t < stop - tiny:
            remaining = stop - t
            landing = remaining <= c.h * (1.0 + LAND_REL)
            hs = remaining if landing else c.h
            _rk4(c, seg_idx, t_hat, t, hs, y)
            k_step += 1
            t = stop if landing else span_start + k_step * c.h
            reset_flag = 0.0
            if landing:
                if have_pending and stop == pending:
                    for rc in range(c.off_phibar, c.off_theta):
                        y[rc] = 0.0
                    t_hat = t
                    have_pending = False
                    reset_flag = 1.0
                if sw_next < c.S and stop == c.seg_t[sw_next]:
                    sw_next += 1
                    seg_idx += 1
            # observation, detector, telemetry
            eps_norm = _signals(c, t_hat, t, y, &delta, &omega, &eps_scale, &ratio, &znorm, &adapt_on)
            if znorm > z_max:
                z_max = znorm
            armed = 1.0 if ratio >= c.arm_ratio else 0.0
            thr = c.eps_coeff * eps_scale
            score = eps_norm / eps_scale if eps_scale > 0.0 else 0.0
            if (c.detector_on and armed > 0.0 and thr > 0.0
                    and t - det_t_up >= c.delta_pr and eps_norm > thr):
                det_t_up = t
                det_i += 1
                if n_events >= events.shape[0]:
                    return {"status": STATUS_EVENT_OVERFLOW, "rows": row,
                            "n_events": n_events, "t_final": t, "abort_t": t,
                            "z_max": z_max}
                if c.immediate_reset:
                    events[n_events, 0] = t
                    events[n_events, 1] = t
                    events[n_events, 2] = det_i
                    n_events += 1
                    for rc in range(c.off_phibar, c.off_theta):
                        y[rc] = 0.0
                    t_hat = t
                    reset_flag = 1.0
                    eps_norm = _signals(c, t_hat, t, y, &delta, &omega,
                                        &eps_scale, &ratio, &znorm, &adapt_on)
                    armed = 1.0 if ratio >= c.arm_ratio else 0.0
                    thr = c.eps_coeff * eps_scale
                    score = eps_norm / eps_scale if eps_scale > 0.0 else 0.0
                else:
                    pending = t + c.delta_pr
                    have_pending = True
                    events[n_events, 0] = t
                    events[n_events, 1] = pending
                    events[n_events, 2] = det_i
                    n_events += 1
            rc = _observe(c, y, t, seg_idx, t_hat, reset_flag, det_i, thr, armed,
                          score, eps_norm, delta, omega, ratio, adapt_on, telem, row)
            if rc >= 0:
                return {"status": rc, "rows": row, "n_events": n_events,
                        "t_final": t, "abort_t": t, "z_max": z_max}
            row += 1
            if have_pending and pending < stop:
                stop = pending

    return {"status": STATUS_OK, "rows": row, "n_events": n_events,
            "t_final": t, "abort_t": None, "z_max": z_max}


def debug_deriv(pk, int si, double t_hat, double t, y):
    """Single derivative evaluation (cross-core equivalence tests)."""
    cdef _Ctx c = _Ctx(pk)
    arr = np.asarray(y, dtype=float).copy()
    out = np.zeros_like(arr)
    cdef double[::1] yv = arr
    cdef double[::1] dv = out
    _deriv(c, si, t_hat, t, &yv[0], &dv[0])
    return out


def debug_signals(pk, double t_hat, double t, y):
    """Step-end observables on one state (cross-core equivalence tests)."""
    cdef _Ctx c = _Ctx(pk)
    arr = np.asarray(y, dtype=float).copy()
    cdef double[::1] yv = arr
    cdef double delta = 0.0, omega = 0.0, eps_scale = 0.0, ratio = 0.0, znorm = 0.0
    cdef double eps_norm, adapt_on = 0.0
    eps_norm = _signals(c, t_hat, t, &yv[0], &delta, &omega, &eps_scale, &ratio, &znorm, &adapt_on)
    return {
        "u": np.asarray(c.uvec).copy(),
        "phi_bar_n": np.asarray(c.phn).copy(),
        "z_bar_n": np.asarray(c.zbn).copy(),
        "z": np.asarray(c.zmat).copy().reshape(c.q, c.n),
        "y_reg": np.asarray(c.y_reg).copy().reshape(c.big, c.m),
        "delta": delta, "omega": omega, "eps_norm": eps_norm,
        "eps_scale": eps_scale, "ratio": ratio, "z_norm": znorm,
        "adapt_on": adapt_on,
    }
