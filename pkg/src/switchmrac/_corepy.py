"""Pure-Python run loop: the fallback twin of the compiled core.

Semantics here are the contract; the compiled core reproduces them with the
same algorithm and operation ordering.  One call integrates the whole
scenario with classical fixed-step RK4, splitting steps so plant switches and
scheduled filter resets land exactly on step boundaries, and writes one
telemetry row per step.
"""

import itertools

import numpy as np

from . import _packed
from .matkernel import det_adj

STATUS_OK = 0
STATUS_FINITE_ESCAPE = 1
STATUS_ROW_OVERFLOW = 2
STATUS_EVENT_OVERFLOW = 3

_LAND_REL = 1e-9  # snap-to-event tolerance, relative to h


def eval_basis(pk, x):
    """Basis functions psi(x) from the packed tables."""
    if pk.basis_kind == _packed.BASIS_TANH:
        return np.tanh(x)
    if pk.basis_kind == _packed.BASIS_MONOMIALS:
        return np.prod(x[None, :] ** pk.mono_expo, axis=1)
    if pk.basis_kind == _packed.BASIS_SINUSOID:
        amp = pk.sin_par[:, 0]
        freq = pk.sin_par[:, 1]
        phase = pk.sin_par[:, 2]
        idx = pk.sin_par[:, 3].astype(np.int64)
        return amp * np.sin(freq * x[idx] + phase)
    out = np.empty(pk.tab_idx.shape[0])
    for k in range(out.shape[0]):
        lo, hi = pk.tab_off[k], pk.tab_off[k + 1]
        out[k] = np.interp(x[pk.tab_idx[k]], pk.tab_x[lo:hi], pk.tab_y[lo:hi])
    return out


def eval_reference(pk, t):
    """Reference signal r(t) from the packed tables."""
    out = np.empty(pk.m)
    for c in range(pk.m):
        kind = pk.r_kind[c]
        if kind == _packed.REF_CONSTANT:
            out[c] = pk.r_par[c, 0]
        elif kind == _packed.REF_EXP_DECAY:
            out[c] = pk.r_par[c, 0] * np.exp(-pk.r_par[c, 1] * t) + pk.r_par[c, 2]
        elif kind == _packed.REF_SINUSOID:
            out[c] = pk.r_par[c, 0] * np.sin(pk.r_par[c, 1] * t + pk.r_par[c, 2]) + pk.r_par[c, 3]
        else:
            lo, hi = pk.r_pw_off[c], pk.r_pw_off[c + 1]
            j = int(np.searchsorted(pk.r_pw_t[lo:hi], t, side="right")) - 1
            out[c] = pk.r_pw_v[lo + max(j, 0)]
    return out


def gram_det_adj(w):
    """(det, adj, eig_ratio) of the symmetric PSD Gram via its eigensystem.

    Same construction as matkernel.psd_det_adj (LAPACK eigh stands in for the
    Jacobi sweep): eigenvalue products never cancel across modes, which keeps
    adj(W) @ upsilon accurate even when det(W) is far below underflow-of-
    squares territory.  The eigenvalue magnitude ratio doubles as the
    conditioning measure the detector arms on.
    """
    q = w.shape[0]
    if q == 1:
        return float(w[0, 0]), np.array([[1.0]]), 1.0
    eig, v = np.linalg.eigh(w)
    d = float(np.prod(eig))
    cof = np.empty(q)
    for i in range(q):
        prod = 1.0
        for j in range(q):
            if j != i:
                prod *= eig[j]
        cof[i] = prod
    adj = (v * cof) @ v.T
    mags = np.abs(eig)
    mx = mags.max()
    ratio = float(mags.min() / mx) if mx > 0.0 else 0.0
    return d, adj, ratio


def _gram_det(zb):
    """det(z_B^T z_B) as a sum of squared minors (Cauchy-Binet), >= 0."""
    n, m = zb.shape
    if n == m:
        d = np.linalg.det(zb) if m > 2 else (
            zb[0, 0] * zb[1, 1] - zb[0, 1] * zb[1, 0] if m == 2 else zb[0, 0]
        )
        return float(d * d)
    total = 0.0
    for rows in itertools.combinations(range(n), m):
        sub = zb[list(rows), :]
        d = np.linalg.det(sub) if m > 2 else (
            sub[0, 0] * sub[1, 1] - sub[0, 1] * sub[1, 0] if m == 2 else sub[0, 0]
        )
        total += float(d * d)
    return total


def _det_adj_small(s):
    """det and adjugate of the (usually tiny) projected regression Gram."""
    k = s.shape[0]
    if k == 1:
        return float(s[0, 0]), np.array([[1.0]])
    if k == 2:
        d = s[0, 0] * s[1, 1] - s[0, 1] * s[1, 0]
        return float(d), np.array([[s[1, 1], -s[0, 1]], [-s[1, 0], s[0, 0]]])
    return det_adj(s)


class _Work:
    """Per-run scratch plus packed views; keeps the step functions lean."""

    def __init__(self, pk):
        self.pk = pk
        lay = pk.layout
        self.lay = lay
        self.cols, self.ncols = _packed.telemetry_columns(lay)
        self.k1 = np.empty(lay.size)
        self.k2 = np.empty(lay.size)
        self.k3 = np.empty(lay.size)
        self.k4 = np.empty(lay.size)
        self.ytmp = np.empty(lay.size)


def _indicator_norms(delta, phn, zbn, z):
    """(|eps|_F, scale) of the switch indicator eps = outer(phn, v).

    Uses the rank-1 identity |eps|_F = |phn| * |v| with
    v = delta * zbn - z^T phn; the scale is the natural magnitude of the
    indicator's two terms, making eps_norm / scale a dimensionless
    self-consistency score for the mixer outputs.
    """
    v = delta * zbn - z.T @ phn
    phn_nrm = float(np.sqrt(phn @ phn))
    eps_norm = phn_nrm * float(np.sqrt(v @ v))
    scale = delta * phn_nrm * float(np.sqrt(zbn @ zbn)) + (
        phn_nrm * phn_nrm
    ) * float(np.sqrt(np.sum(z * z)))
    return eps_norm, scale


def _consistent(pk, delta, phn, zbn, z):
    """Trust gate: the mixer outputs self-verify to within adapt_trust."""
    eps_norm, scale = _indicator_norms(delta, phn, zbn, z)
    return scale > 0.0 and eps_norm <= pk.adapt_trust * scale


def _signals(pk, si, t_hat, t, y):
    """Everything observable at (t, y): controls, mixer outputs, indicator.

    Returns (u, r, psi, phi_bar_n, z_bar_n, z, delta, omega, y_reg, eps_norm,
    ratio, omega_reg, eps_scale, adapt_on).
    """
    lay = pk.layout
    n, m, p = lay.n, lay.m, lay.p
    x = y[: n]
    phib = y[lay.off_phibar : lay.off_phibar + lay.big]
    w_mat = y[lay.off_gram : lay.off_gram + lay.q * lay.q].reshape(lay.q, lay.q)
    u_mat = y[lay.off_mix : lay.off_mix + lay.q * n].reshape(lay.q, n)
    th = y[lay.off_theta :].reshape(lay.big, m)

    psi = eval_basis(pk, x)
    r = eval_reference(pk, t)
    omega_reg = np.concatenate([x, r, -psi])
    u = th.T @ omega_reg

    ext = np.concatenate([phib, [np.exp(-pk.l * (t - t_hat))]])
    ns = 1.0 / (1.0 + ext @ ext)
    phn = ns * ext
    zbn = ns * (x - pk.l * phib[:n])

    delta, adj, ratio = gram_det_adj(w_mat)
    z = adj @ u_mat
    zt = z.T
    z_b = zt[:, n : n + m]
    omega = _gram_det(z_b)
    _, adj_s = _det_adj_small(z_b.T @ z_b)
    m_op = adj_s @ z_b.T
    y_reg = np.vstack(
        [
            (m_op @ (delta * pk.a_ref - zt[:, :n])).T,
            (delta * (m_op @ pk.b_ref)).T,
            (m_op @ zt[:, n + m : n + m + p]).T,
        ]
    )
    eps_norm, eps_scale = _indicator_norms(delta, phn, zbn, z)
    adapt_on = 1.0 if (
        omega > pk.rho
        and eps_scale > 0.0
        and eps_norm <= pk.adapt_trust * eps_scale
    ) else 0.0
    return (u, r, psi, phn, zbn, z, delta, omega, y_reg, eps_norm, ratio,
            omega_reg, eps_scale, adapt_on)


def _deriv(pk, si, t_hat, t, y, dy):
    lay = pk.layout
    n, m, p = lay.n, lay.m, lay.p
    x = y[:n]
    xref = y[n : 2 * n]
    phib = y[lay.off_phibar : lay.off_phibar + lay.big]
    w_mat = y[lay.off_gram : lay.off_gram + lay.q * lay.q].reshape(lay.q, lay.q)
    u_mat = y[lay.off_mix : lay.off_mix + lay.q * n].reshape(lay.q, n)
    th = y[lay.off_theta :].reshape(lay.big, m)

    psi = eval_basis(pk, x)
    r = eval_reference(pk, t)
    omega_reg = np.concatenate([x, r, -psi])
    u = th.T @ omega_reg

    a_seg = pk.seg_A[si]
    b_seg = pk.seg_B[si]
    th_seg = pk.seg_TH[si]
    dy[:n] = a_seg @ x + b_seg @ (u + th_seg.T @ psi)
    dy[n : 2 * n] = pk.a_ref @ xref + pk.b_ref @ r
    dy[lay.off_phibar : lay.off_phibar + lay.big] = -pk.l * phib + np.concatenate([x, u, psi])

    ext = np.concatenate([phib, [np.exp(-pk.l * (t - t_hat))]])
    ns = 1.0 / (1.0 + ext @ ext)
    phn = ns * ext
    zbn = ns * (x - pk.l * phib[:n])
    wgt = np.exp(-pk.sigma * (t - t_hat))
    dy[lay.off_gram : lay.off_gram + lay.q * lay.q] = (wgt * np.outer(phn, phn)).ravel()
    dy[lay.off_mix : lay.off_mix + lay.q * n] = (wgt * np.outer(phn, zbn)).ravel()

    delta, adj, _ = gram_det_adj(w_mat)
    z = adj @ u_mat
    zt = z.T
    z_b = zt[:, n : n + m]
    omega = _gram_det(z_b)
    _, adj_s = _det_adj_small(z_b.T @ z_b)
    if omega > pk.rho and _consistent(pk, delta, phn, zbn, z):
        m_op = adj_s @ z_b.T
        y_reg = np.vstack(
            [
                (m_op @ (delta * pk.a_ref - zt[:, :n])).T,
                (delta * (m_op @ pk.b_ref)).T,
                (m_op @ zt[:, n + m : n + m + p]).T,
            ]
        )
        rate = pk.gamma0 * float(omega_reg @ omega_reg) + pk.gamma1
        dy[lay.off_theta :] = (-rate * (th - y_reg / omega)).ravel()
    else:
        dy[lay.off_theta :] = 0.0


def rk4_step(pk, si, t_hat, t, h, y, work=None):
    """One classical RK4 step of the packed closed-loop state."""
    w = work or _Work(pk)
    _deriv(pk, si, t_hat, t, y, w.k1)
    np.multiply(w.k1, 0.5 * h, out=w.ytmp)
    w.ytmp += y
    _deriv(pk, si, t_hat, t + 0.5 * h, w.ytmp, w.k2)
    np.multiply(w.k2, 0.5 * h, out=w.ytmp)
    w.ytmp += y
    _deriv(pk, si, t_hat, t + 0.5 * h, w.ytmp, w.k3)
    np.multiply(w.k3, h, out=w.ytmp)
    w.ytmp += y
    _deriv(pk, si, t_hat, t + h, w.ytmp, w.k4)
    return y + (h / 6.0) * (w.k1 + 2.0 * w.k2 + 2.0 * w.k3 + w.k4)


def _write_row(work, telem, row, t, y, sig, seg_idx, det_i, reset_flag, thr, armed, tt_norm):
    pk = work.pk
    lay = work.lay
    cols = work.cols
    (u, r, psi, phn, zbn, z, delta, omega, y_reg, eps_norm, ratio,
     omega_reg, eps_scale, adapt_on) = sig
    n, m = lay.n, lay.m
    x = y[:n]
    xref = y[n : 2 * n]
    eref = x - xref
    eref_norm = float(np.sqrt(eref @ eref))
    xi_norm = float(np.sqrt(eref_norm * eref_norm + tt_norm * tt_norm))
    out = telem[row]
    out[cols["t"][0]] = t
    out[cols["x"][0] : cols["x"][0] + n] = x
    out[cols["xref"][0] : cols["xref"][0] + n] = xref
    out[cols["u"][0] : cols["u"][0] + m] = u
    o = cols["theta_hat"][0]
    out[o : o + lay.big * m] = y[lay.off_theta :]
    out[cols["omega"][0]] = omega
    out[cols["delta"][0]] = delta
    out[cols["eps_norm"][0]] = eps_norm
    out[cols["eref_norm"][0]] = eref_norm
    out[cols["ttil_norm"][0]] = tt_norm
    out[cols["xi_norm"][0]] = xi_norm
    out[cols["seg"][0]] = seg_idx
    out[cols["ihat"][0]] = det_i
    out[cols["reset_flag"][0]] = reset_flag
    out[cols["thr_eff"][0]] = thr
    out[cols["armed"][0]] = armed
    out[cols["score"][0]] = eps_norm / eps_scale if eps_scale > 0.0 else 0.0
    out[cols["ratio"][0]] = ratio
    out[cols["adapt_on"][0]] = adapt_on
    o = cols["phi_bar_n"][0]
    out[o : o + lay.q] = phn
    o = cols["y_reg"][0]
    out[o : o + lay.big * m] = y_reg.ravel()
    o = cols["z_mix"][0]
    out[o : o + lay.q * lay.n] = z.ravel()


def run_core(pk, y0, telem, events):
    """Integrate the scenario, filling telemetry and detection events.

    Returns a dict with keys status, rows, n_events, t_final, abort_t, z_max.
    """
    work = _Work(pk)
    lay = pk.layout
    n = lay.n
    y = np.asarray(y0, dtype=float).copy()
    t = pk.t0
    t_hat = pk.t0
    seg_idx = 0
    det_t_up = pk.t_up0
    det_i = 1
    pending = None
    z_max = 0.0
    n_events = 0
    row = 0
    switches = list(pk.seg_t[1:])

    def theta_tilde_norm(si):
        diff = y[lay.off_theta :] - pk.seg_theta[si].ravel()
        return float(np.sqrt(diff @ diff))

    def observe_and_log(reset_flag):
        """Signals, running max, detector, divergence guard, telemetry."""
        nonlocal z_max, det_t_up, det_i, pending, n_events, row, t_hat, y
        sig = _signals(pk, seg_idx, t_hat, t, y)
        z = sig[5]
        znorm = float(np.sqrt(np.sum(z * z)))
        if znorm > z_max:
            z_max = znorm
        armed = 1.0 if sig[10] >= pk.arm_ratio else 0.0
        thr = pk.eps_coeff * sig[12]
        if (
            pk.detector_on
            and armed > 0.0
            and thr > 0.0
            and t - det_t_up >= pk.delta_pr
            and sig[9] > thr
        ):
            det_t_up = t
            det_i += 1
            if n_events >= events.shape[0]:
                return STATUS_EVENT_OVERFLOW
            if pk.immediate_reset:
                events[n_events] = (t, t, det_i)
                n_events += 1
                y[lay.off_phibar : lay.off_theta] = 0.0
                t_hat = t
                reset_flag = 1.0
                sig = _signals(pk, seg_idx, t_hat, t, y)
            else:
                pending = t + pk.delta_pr
                events[n_events] = (t, pending, det_i)
                n_events += 1
        if not np.all(np.isfinite(y)) or float(np.sqrt(y[:n] @ y[:n])) > pk.x_max:
            return STATUS_FINITE_ESCAPE
        if row >= telem.shape[0]:
            return STATUS_ROW_OVERFLOW
        _write_row(
            work, telem, row, t, y, sig, seg_idx, det_i, reset_flag, thr, armed,
            theta_tilde_norm(seg_idx),
        )
        row += 1
        return None

    status = observe_and_log(0.0)
    if status is not None:
        return {
            "status": status, "rows": row, "n_events": n_events,
            "t_final": t, "abort_t": t, "z_max": z_max,
        }

    tiny = _LAND_REL * pk.h
    while t < pk.t_end - tiny:
        stop = pk.t_end
        if switches and switches[0] < stop:
            stop = switches[0]
        if pending is not None and pending < stop:
            stop = pending
        span_start = t
        k = 0
        while t < stop - tiny:
            remaining = stop - t
            landing = remaining <= pk.h * (1.0 + _LAND_REL)
            hs = remaining if landing else pk.h
            y = rk4_step(pk, seg_idx, t_hat, t, hs, y, work)
            k += 1
            t = stop if landing else span_start + k * pk.h
            reset_flag = 0.0
            if landing:
                if pending is not None and stop == pending:
                    y[lay.off_phibar : lay.off_theta] = 0.0
                    t_hat = t
                    pending = None
                    reset_flag = 1.0
                if switches and stop == switches[0]:
                    switches.pop(0)
                    seg_idx += 1
            status = observe_and_log(reset_flag)
            if status is not None:
                return {
                    "status": status, "rows": row, "n_events": n_events,
                    "t_final": t, "abort_t": t, "z_max": z_max,
                }
            if pending is not None and pending < stop:
                stop = pending

    return {
        "status": STATUS_OK, "rows": row, "n_events": n_events,
        "t_final": t, "abort_t": None, "z_max": z_max,
    }
