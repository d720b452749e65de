"""Closed-loop fixed-step integration with event-aligned switches and resets.

``run_scenario`` validates the scenario, optionally calibrates the dead-zone
level from a short detector-off pre-run, then hands the whole horizon to one
of two interchangeable cores: a compiled extension (preferred) or the pure
Python fallback.  Telemetry is captured every step; plant switches and
scheduled filter resets always land exactly on step boundaries.
"""

import os
import time
from dataclasses import dataclass, field

import numpy as np

from . import _corepy, _packed
from .detector import DetectorState
from .dynamics import active_segment, ideal_parameters
from .errors import ConfigError, FiniteEscapeError
from .parameterization import FilterBankState

try:
    from . import _corecy
except ImportError:
    _corecy = None

_CORES = {"python": _corepy}
if _corecy is not None:
    _CORES["compiled"] = _corecy

DEFAULT_CORE = "compiled" if _corecy is not None else "python"


def available_cores():
    return sorted(_CORES)


def _select_core(name):
    if name is None:
        name = os.environ.get("SWITCHMRAC_CORE") or DEFAULT_CORE
    if name not in _CORES:
        raise ConfigError(
            f"core {name!r} is not available (have: {', '.join(available_cores())})"
        )
    return name, _CORES[name]


@dataclass(frozen=True)
class Scenario:
    """Validated simulation scenario (plant + reference model + gains + grid)."""

    plant: object                 # SwitchedPlantSpec
    rm: object                    # ReferenceModelSpec
    theta_hat0: np.ndarray        # (n+m+p, m)
    l: float
    sigma: float
    delta_pr: float
    rho: float                    # explicit dead-zone level, or None for auto
    rho_auto_scale: float = 1e-120
    rho_auto_horizon: float = 2.0
    gamma0: float = 1.0
    gamma1: float = 1.0
    eps_threshold: float = 1e-4   # indicator score threshold (normalized, scale-free)
    arm_ratio: float = 1e-11      # Gram eigenvalue ratio required before the detector arms
    adapt_trust: float = 1e-2     # indicator score below which the regression is trusted
    immediate_reset: bool = False
    detector_on: bool = True
    h: float = 1e-4
    t_end: float = 15.0
    x_max: float = 1e6
    name: str = "scenario"

    def __post_init__(self):
        if self.h <= 0.0:
            raise ConfigError("integrator step h must be positive", path="integrator.h")
        if self.t_end <= self.plant.t0:
            raise ConfigError("t_end must exceed the initial instant", path="integrator.t_end")
        if self.delta_pr <= 0.0:
            raise ConfigError("delta_pr must be positive", path="gains.delta_pr")
        for g, key in ((self.l, "l"), (self.sigma, "sigma")):
            if g <= 0.0:
                raise ConfigError(f"{key} must be positive", path=f"gains.{key}")
        if self.gamma0 < 1.0:
            raise ConfigError("gamma0 must be >= 1", path="gains.gamma0")
        if self.gamma1 < 0.0:
            raise ConfigError("gamma1 must be nonnegative", path="gains.gamma1")
        th0 = np.asarray(self.theta_hat0, dtype=float)
        n, m, p = self.dims
        if th0.shape != (n + m + p, m):
            raise ConfigError(
                f"theta_hat0 must be {(n + m + p, m)}, got {th0.shape}",
                path="controller.theta_hat0",
            )
        object.__setattr__(self, "theta_hat0", th0)

    @property
    def dims(self):
        seg = self.plant.segments[0]
        return seg.n, seg.m, seg.p

    @property
    def ideal_thetas(self):
        """Ground-truth controller parameters per segment (harness side only)."""
        return [ideal_parameters(s, self.rm).theta for s in self.plant.segments]


@dataclass
class TelemetryTable:
    """Per-step record of every signal the metrics and CSV export need."""

    data: np.ndarray
    cols: dict
    layout: _packed.StateLayout

    def column(self, name):
        off, width = self.cols[name]
        if width == 1:
            return self.data[:, off]
        return self.data[:, off : off + width]

    @property
    def t(self):
        return self.column("t")

    @property
    def rows(self):
        return self.data.shape[0]

    def theta_hat(self, row):
        off, width = self.cols["theta_hat"]
        return self.data[row, off : off + width].reshape(self.layout.big, self.layout.m)

    def y_reg(self, row):
        off, width = self.cols["y_reg"]
        return self.data[row, off : off + width].reshape(self.layout.big, self.layout.m)

    CSV_NORM_COLS = (
        "Omega", "Delta", "eps_norm", "eref_norm", "thetatilde_norm", "xi_norm",
        "seg", "ihat", "reset_flag",
    )

    def csv_header(self):
        lay = self.layout
        names = ["t"]
        names += [f"x{i + 1}" for i in range(lay.n)]
        names += [f"xref{i + 1}" for i in range(lay.n)]
        names += [f"u{i + 1}" for i in range(lay.m)]
        names += [
            f"that_{r + 1}{c + 1}" for r in range(lay.big) for c in range(lay.m)
        ]
        names += list(self.CSV_NORM_COLS)
        return names

    def write_csv(self, path, decimate=1):
        lay = self.layout
        idx = np.arange(0, self.rows, max(int(decimate), 1))
        sel = []
        for name in ("t", "x", "xref", "u", "theta_hat", "omega", "delta",
                     "eps_norm", "eref_norm", "ttil_norm", "xi_norm", "seg",
                     "ihat", "reset_flag"):
            off, width = self.cols[name]
            sel.extend(range(off, off + width))
        block = self.data[np.ix_(idx, np.array(sel))]
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(",".join(self.csv_header()) + "\n")
            for r in range(block.shape[0]):
                fh.write(",".join(f"{v:.17g}" for v in block[r]) + "\n")
        return block.shape[0]


@dataclass(frozen=True)
class DetectionEvent:
    t_detect: float
    t_reset: float
    counter: int


@dataclass
class RunResult:
    scenario: Scenario
    telemetry: TelemetryTable
    events: list
    rho: float
    z_max: float
    runtime: float
    core: str
    calib_omega_max: float = 0.0
    aborted: bool = False
    abort_t: float = None

    @property
    def reset_times(self):
        return [e.t_reset for e in self.events]


@dataclass(frozen=True)
class SimState:
    """Unpacked view of one integration state (mostly for tests and stepping)."""

    t: float
    x: np.ndarray
    x_ref: np.ndarray
    filters: FilterBankState
    theta_hat: np.ndarray
    detector: DetectorState


def pack_scenario(scn, rho, detector_on=None, t_end=None):
    """Lower a Scenario to the flat numeric form the cores consume."""
    n, m, p = scn.dims
    segs = scn.plant.segments
    thetas = scn.ideal_thetas
    kind, mono, sin_par, tab_idx, tab_off, tab_x, tab_y = _packed.pack_basis(
        scn.plant.basis
    )
    r_kind, r_par, r_off, r_t, r_v = _packed.pack_reference(scn.rm.r)
    return _packed.PackedScenario(
        n=n, m=m, p=p,
        seg_t=np.array([s.t_start for s in segs]),
        seg_A=np.stack([s.A for s in segs]),
        seg_B=np.stack([s.B for s in segs]),
        seg_TH=np.stack([s.theta_unc for s in segs]),
        seg_theta=np.stack(thetas),
        a_ref=scn.rm.A_ref.copy(),
        b_ref=scn.rm.B_ref.copy(),
        r_kind=r_kind, r_par=r_par, r_pw_off=r_off, r_pw_t=r_t, r_pw_v=r_v,
        basis_kind=kind, mono_expo=mono, sin_par=sin_par,
        tab_idx=tab_idx, tab_off=tab_off, tab_x=tab_x, tab_y=tab_y,
        l=scn.l, sigma=scn.sigma, delta_pr=scn.delta_pr, rho=rho,
        gamma0=scn.gamma0, gamma1=scn.gamma1,
        eps_coeff=scn.eps_threshold, arm_ratio=scn.arm_ratio,
        adapt_trust=scn.adapt_trust,
        detector_on=scn.detector_on if detector_on is None else detector_on,
        immediate_reset=scn.immediate_reset,
        x_max=scn.x_max,
        t0=scn.plant.t0,
        t_end=scn.t_end if t_end is None else t_end,
        h=scn.h,
        t_up0=scn.plant.t0 + scn.delta_pr,
    )


def initial_state(scn):
    """Packed initial ODE vector: plant/reference states set, filters zeroed."""
    n, m, p = scn.dims
    lay = _packed.StateLayout(n, m, p)
    y0 = np.zeros(lay.size)
    y0[:n] = scn.plant.x0
    y0[n : 2 * n] = scn.rm.x0_ref
    y0[lay.off_theta :] = scn.theta_hat0.ravel()
    return y0


def _row_capacity(pk):
    spans = int(np.ceil((pk.t_end - pk.t0) / pk.h))
    return spans + 16 + 8 * (pk.seg_t.shape[0] + 64)


def _run_packed(pk, y0, core_mod):
    cols, ncols = _packed.telemetry_columns(pk.layout)
    telem = np.zeros((_row_capacity(pk), ncols))
    events = np.zeros((256, 3))
    res = core_mod.run_core(pk, y0, telem, events)
    if res["status"] == _corepy.STATUS_ROW_OVERFLOW:
        raise RuntimeError("telemetry row capacity exceeded (runaway event splitting?)")
    if res["status"] == _corepy.STATUS_EVENT_OVERFLOW:
        raise RuntimeError("more than 256 detector events; scenario is misconfigured")
    table = TelemetryTable(
        data=telem[: res["rows"]], cols=cols, layout=pk.layout
    )
    ev = [
        DetectionEvent(t_detect=events[k, 0], t_reset=events[k, 1], counter=int(events[k, 2]))
        for k in range(res["n_events"])
    ]
    return res, table, ev


def calibrate_rho(scn, core=None):
    """Dead-zone level from a short detector-off, adaptation-frozen pre-run.

    The level is ``rho_auto_scale`` times the largest scalar regressor seen
    over the calibration horizon with the estimate frozen (rho = +inf, which
    breaks the circular dependence of the estimator on its own dead zone).
    The frozen trajectory bounds the pre-engagement excitation of the real
    run from above, so the scaled-down level is always reachable.
    """
    _, core_mod = _select_core(core)
    horizon = min(scn.plant.t0 + scn.rho_auto_horizon, scn.t_end)
    pk = pack_scenario(scn, rho=np.inf, detector_on=False, t_end=horizon)
    res, table, _ = _run_packed(pk, initial_state(scn), core_mod)
    if res["status"] == _corepy.STATUS_FINITE_ESCAPE:
        raise FiniteEscapeError(
            f"calibration pre-run diverged at t={res['abort_t']:.6f}",
            t_abort=res["abort_t"],
        )
    omega_max = float(np.max(table.column("omega")))
    if omega_max <= 0.0:
        raise ConfigError(
            "calibration run produced no excitation (max Omega == 0); "
            "cannot auto-select rho",
            path="gains.rho",
        )
    return scn.rho_auto_scale * omega_max, omega_max


def run_scenario(scn, core=None, allow_escape=False):
    """Integrate the full scenario and return telemetry plus detection events.

    A finite-escape abort raises unless ``allow_escape`` is set, in which case
    the partial result is returned with ``aborted=True``.
    """
    core_name, core_mod = _select_core(core)
    t_start = time.perf_counter()
    calib_max = 0.0
    rho = scn.rho
    if rho is None:
        rho, calib_max = calibrate_rho(scn, core=core_name)
    pk = pack_scenario(scn, rho=rho)
    res, table, events = _run_packed(pk, initial_state(scn), core_mod)
    runtime = time.perf_counter() - t_start
    escaped = res["status"] == _corepy.STATUS_FINITE_ESCAPE
    if escaped and not allow_escape:
        raise FiniteEscapeError(
            f"finite-escape guard tripped at t={res['abort_t']:.6f} "
            f"(|x| exceeded {scn.x_max:g} or went non-finite)",
            t_abort=res["abort_t"],
        )
    return RunResult(
        scenario=scn, telemetry=table, events=events, rho=rho,
        z_max=res["z_max"], runtime=runtime, core=core_name,
        calib_omega_max=calib_max,
        aborted=escaped, abort_t=res["abort_t"] if escaped else None,
    )


# ---------------------------------------------------------------------------
# single-step interface (tests, exploratory use)


def rk4_step(state, h, scn, core=None):
    """Advance one SimState by a single RK4 step (no event handling inside)."""
    if h <= 0.0:
        raise ConfigError("step size must be positive", path="integrator.h")
    n, m, p = scn.dims
    lay = _packed.StateLayout(n, m, p)
    pk = pack_scenario(scn, rho=scn.rho if scn.rho is not None else np.inf)
    y = np.zeros(lay.size)
    y[:n] = state.x
    y[n : 2 * n] = state.x_ref
    y[lay.off_phibar : lay.off_phibar + lay.big] = state.filters.phi_bar
    y[lay.off_gram : lay.off_gram + lay.q * lay.q] = state.filters.omega_ext.ravel()
    y[lay.off_mix : lay.off_mix + lay.q * n] = state.filters.upsilon.ravel()
    y[lay.off_theta :] = np.asarray(state.theta_hat, dtype=float).ravel()
    si = active_segment(state.t, scn.plant)
    y1 = _corepy.rk4_step(pk, si, state.filters.t_hat, state.t, h, y)
    filters = FilterBankState(
        phi_bar=y1[lay.off_phibar : lay.off_phibar + lay.big].copy(),
        omega_ext=y1[lay.off_gram : lay.off_gram + lay.q * lay.q].reshape(lay.q, lay.q).copy(),
        upsilon=y1[lay.off_mix : lay.off_mix + lay.q * n].reshape(lay.q, n).copy(),
        t_hat=state.filters.t_hat,
    )
    return SimState(
        t=state.t + h,
        x=y1[:n].copy(),
        x_ref=y1[n : 2 * n].copy(),
        filters=filters,
        theta_hat=y1[lay.off_theta :].reshape(lay.big, m).copy(),
        detector=state.detector,
    )
