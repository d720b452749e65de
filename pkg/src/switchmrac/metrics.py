"""Post-run verification: decay fitting, monotonicity, residuals, excitation.

All metrics are pure functions of telemetry plus ground truth; rerunning them
never mutates a run.  Windows are delimited by the true switch instants (known
to the harness) and the filter-reset events; the "active" part of a window
starts at the first instant the adaptation gate stays open for ten
consecutive steps, standing in for the unobservable end of the excitation
interval.
"""

from dataclasses import dataclass

import numpy as np

from .matkernel import det, sym_eig_extremes

SUSTAIN_STEPS = 10


@dataclass
class WindowReport:
    """Per-window verification summary."""

    index: int
    t_start: float            # true switch instant opening the window
    t_end: float
    t_reset: float = None     # filter reset serving this window
    t_active: float = None    # first sustained adaptation instant
    detection_delay: float = None
    c1: float = 0.0
    c2: float = 0.0
    mono_violations: int = 0
    mono_max_step: float = 0.0
    residual_max: float = 0.0         # literal normalized residual
    residual_scaled_max: float = 0.0  # scale-aware variant
    omega_lb: float = 0.0
    omega_ub: float = 0.0
    omega_sustained: bool = False
    fe_alpha: float = 0.0
    xi_start: float = 0.0
    xi_end: float = 0.0
    xi_max: float = 0.0
    envelope_excess: float = 0.0      # max sample / fitted envelope - 1
    identity_z_max: float = 0.0       # max rel error of z vs delta * Theta_bar
    identity_omega_max: float = 0.0   # max rel error of Omega vs delta^2m det(B^T B)
    eps_clean_max: float = 0.0        # max |eps| on the settled no-switch span
    z_norm_max: float = 0.0

    def summary(self):
        dd = f"{self.detection_delay:.4f}s" if self.detection_delay is not None else "-"
        act = f"{self.t_active:.4f}" if self.t_active is not None else "never"
        return (
            f"window {self.index} [{self.t_start:g}, {self.t_end:g}): "
            f"delay={dd} active@{act} c2={self.c2:.3f} "
            f"mono_viol={self.mono_violations} resid={self.residual_max:.2e} "
            f"resid_scaled={self.residual_scaled_max:.2e} "
            f"Omega=[{self.omega_lb:.2e},{self.omega_ub:.2e}] "
            f"sustained={self.omega_sustained} "
            f"xi {self.xi_start:.3g}->{self.xi_end:.3g} "
            f"idz={self.identity_z_max:.2e} idom={self.identity_omega_max:.2e} "
            f"fe_alpha={self.fe_alpha:.2e}"
        )


def fit_decay(times, xi, t_start=None):
    """Least-squares exponential fit |xi(t)| ~ c1 * exp(-c2 (t - t_start)).

    Zero samples are dropped; all-zero input returns (0, inf).
    """
    times = np.asarray(times, dtype=float)
    xi = np.asarray(xi, dtype=float)
    keep = xi > 0.0
    if not np.any(keep):
        return 0.0, np.inf
    if t_start is None:
        t_start = times[0]
    tt = times[keep] - t_start
    ly = np.log(xi[keep])
    a = np.vstack([np.ones_like(tt), -tt]).T
    coef, *_ = np.linalg.lstsq(a, ly, rcond=None)
    return float(np.exp(coef[0])), float(coef[1])


def check_monotonicity(times, theta_hat_rows, theta_true, slack=1e-9):
    """Count per-component increases of |theta_hat - theta_true| beyond slack.

    ``theta_hat_rows`` has one flattened estimate per sample.  Returns
    (violation_count, max_increase).
    """
    th = np.asarray(theta_hat_rows, dtype=float)
    tt = np.abs(th - np.asarray(theta_true, dtype=float).ravel()[None, :])
    if tt.shape[0] < 2:
        return 0, 0.0
    inc = np.diff(tt, axis=0)
    count = int(np.count_nonzero(inc > slack))
    return count, float(inc.max())


def regression_residual(y_rows, omega, theta_true):
    """Max literal normalized residual |Y - Omega theta| / (1 + Omega |theta|)."""
    y = np.asarray(y_rows, dtype=float)
    om = np.asarray(omega, dtype=float)
    if om.size == 0:
        return 0.0
    th = np.asarray(theta_true, dtype=float).ravel()
    th_norm = float(np.sqrt(th @ th))
    err = np.sqrt(np.sum((y - om[:, None] * th[None, :]) ** 2, axis=1))
    return float(np.max(err / (1.0 + om * th_norm)))


def regression_residual_scaled(y_rows, omega, theta_true, omega_scale=None):
    """Max scale-aware residual |Y - Omega theta| / (Omega_scale (1 + |theta|)).

    The literal residual is vacuous when Omega sits far below unit scale
    (both sides shrink together); normalizing by the window's largest
    regressor keeps the measure dimensionless and sensitive, which the
    reset-ablation check relies on.
    """
    y = np.asarray(y_rows, dtype=float)
    om = np.asarray(omega, dtype=float)
    if om.size == 0:
        return 0.0
    th = np.asarray(theta_true, dtype=float).ravel()
    th_norm = float(np.sqrt(th @ th))
    if omega_scale is None:
        omega_scale = float(np.max(om))
    if omega_scale <= 0.0:
        return 0.0
    err = np.sqrt(np.sum((y - om[:, None] * th[None, :]) ** 2, axis=1))
    return float(np.max(err / (omega_scale * (1.0 + th_norm))))


def fe_level(times, phi_rows):
    """Excitation level: lambda_min of the windowed Gram of the regressor rows.

    Trapezoidal accumulation of outer products over the window.
    """
    times = np.asarray(times, dtype=float)
    phi = np.asarray(phi_rows, dtype=float)
    if phi.shape[0] < 2:
        return 0.0
    outer = phi[:, :, None] * phi[:, None, :]
    dt = np.diff(times)
    gram = 0.5 * np.sum((outer[:-1] + outer[1:]) * dt[:, None, None], axis=0)
    lo, _ = sym_eig_extremes(gram)
    return float(lo)


def theta_bar(scn, seg_idx, x_reset):
    """Stacked plant parameters extended with the reset-state row."""
    seg = scn.plant.segments[seg_idx]
    return np.vstack(
        [seg.A.T, seg.B.T, (seg.B @ seg.theta_unc.T).T,
         np.asarray(x_reset, dtype=float)[None, :]]
    )


def _first_sustained(mask, steps=SUSTAIN_STEPS):
    run = 0
    for k, v in enumerate(mask):
        run = run + 1 if v else 0
        if run >= steps:
            return k - steps + 1
    return None


def build_reports(result, slack=1e-9, guard_steps=SUSTAIN_STEPS,
                  active_score=1e-9, active_ratio=3e-9):
    """One WindowReport per plant segment of a completed run.

    The active part of a window begins at the first run of SUSTAIN_STEPS
    samples that are adaptation-enabled, self-consistent to ``active_score``,
    and whose Gram has matured to eigenvalue ratio ``active_ratio``.  That is
    the observable stand-in for the end of the excitation interval: the
    regression is fully formed and numerically resolved, so the
    exponential-decay and monotonicity claims apply from there on.
    """
    scn = result.scenario
    tab = result.telemetry
    t = tab.t
    h = scn.h
    thetas = scn.ideal_thetas
    seg_starts = [s.t_start for s in scn.plant.segments]
    seg_ends = seg_starts[1:] + [scn.t_end]
    resets = {0: scn.plant.t0}
    for ev in result.events:
        seg = int(np.searchsorted(seg_starts, ev.t_reset, side="right")) - 1
        resets.setdefault(seg, ev.t_reset)

    omega = tab.column("omega")
    delta = tab.column("delta")
    eps = tab.column("eps_norm")
    adapt = tab.column("adapt_on")
    score = tab.column("score")
    ratio_col = tab.column("ratio")
    xi = tab.column("xi_norm")
    rst = tab.column("reset_flag")
    x = tab.column("x")
    th_off, th_w = tab.cols["theta_hat"]
    y_off, y_w = tab.cols["y_reg"]
    phn_off, phn_w = tab.cols["phi_bar_n"]
    z_off, z_w = tab.cols["z_mix"]
    lay = tab.layout

    reports = []
    for i, (lo, hi) in enumerate(zip(seg_starts, seg_ends)):
        rep = WindowReport(index=i, t_start=lo, t_end=hi)
        t_reset = resets.get(i)
        rep.t_reset = t_reset
        if t_reset is not None and i > 0:
            rep.detection_delay = t_reset - lo
        msk = (t >= lo) & (t < hi) if hi < scn.t_end else (t >= lo)
        if not np.any(msk):
            reports.append(rep)
            continue
        idx = np.flatnonzero(msk)
        rep.omega_lb = float(np.min(omega[idx]))
        rep.omega_ub = float(np.max(omega[idx]))
        rep.xi_max = float(np.max(xi[idx]))

        # settled sub-window: from the reset plus a short guard to window end
        ridx = np.array([], dtype=int)
        if t_reset is not None:
            ridx = idx[t[idx] >= t_reset + guard_steps * h]
            if ridx.size:
                yr = tab.data[np.ix_(ridx, np.arange(y_off, y_off + y_w))]
                rep.residual_max = regression_residual(yr, omega[ridx], thetas[i])
                rep.residual_scaled_max = regression_residual_scaled(
                    yr, omega[ridx], thetas[i]
                )
                rep.eps_clean_max = float(np.max(eps[ridx]))
                zr = tab.data[np.ix_(ridx, np.arange(z_off, z_off + z_w))]
                rep.z_norm_max = float(np.max(np.sqrt(np.sum(zr * zr, axis=1))))

        # active part: first sustained, tightly self-consistent adaptation
        post = ridx if ridx.size else idx
        engaged = (
            (adapt[post] > 0)
            & (score[post] <= active_score)
            & (ratio_col[post] >= active_ratio)
        )
        k0 = _first_sustained(engaged)
        if k0 is not None:
            aidx = post[k0:]
            rep.t_active = float(t[aidx[0]])
            rep.xi_start = float(xi[aidx[0]])
            rep.xi_end = float(xi[aidx[-1]])
            rep.omega_sustained = bool(np.all(omega[aidx] > result.rho))
            rep.c1, rep.c2 = fit_decay(t[aidx], xi[aidx], t_start=rep.t_active)
            if np.isfinite(rep.c2) and rep.c1 > 0.0:
                env = rep.c1 * np.exp(-rep.c2 * (t[aidx] - rep.t_active))
                pos = env > 0.0
                if np.any(pos):
                    rep.envelope_excess = float(
                        np.max(xi[aidx][pos] / env[pos]) - 1.0
                    )
            th_rows = tab.data[np.ix_(aidx, np.arange(th_off, th_off + th_w))]
            rep.mono_violations, rep.mono_max_step = check_monotonicity(
                t[aidx], th_rows, thetas[i], slack=slack
            )
            phn_rows = tab.data[np.ix_(idx, np.arange(phn_off, phn_off + phn_w))]
            rep.fe_alpha = fe_level(t[idx], phn_rows)

            # mixer identities over the settled active span
            rrows = np.flatnonzero((rst > 0) & (t <= t[aidx[0]]))
            x_reset = x[rrows[-1]] if rrows.size else scn.plant.x0
            tbar = theta_bar(scn, i, x_reset)
            tb_norm = float(np.linalg.norm(tbar))
            zt = tab.data[np.ix_(aidx, np.arange(z_off, z_off + z_w))]
            diff = zt - delta[aidx][:, None] * tbar.ravel()[None, :]
            dscale = np.abs(delta[aidx]) * tb_norm
            ok = dscale > 0.0
            if np.any(ok):
                rep.identity_z_max = float(np.max(
                    np.sqrt(np.sum(diff[ok] ** 2, axis=1)) / dscale[ok]
                ))
            seg = scn.plant.segments[i]
            om_pred = delta[aidx] ** (2 * lay.m) * det(seg.B.T @ seg.B)
            ok = om_pred > 0.0
            if np.any(ok):
                rep.identity_omega_max = float(np.max(
                    np.abs(omega[aidx][ok] - om_pred[ok]) / om_pred[ok]
                ))
        reports.append(rep)
    return reports
