"""Flat numeric encoding of a scenario, shared by the compiled and Python cores.

The closed-loop ODE state is packed into one contiguous vector so a single
fixed-step integrator advances plant, reference model, filters and estimate
together.  Basis functions and reference signals are lowered to small numeric
tables so the compiled core never calls back into Python.
"""

from dataclasses import dataclass, field

import numpy as np

BASIS_TANH = 0
BASIS_MONOMIALS = 1
BASIS_SINUSOID = 2
BASIS_TABLE = 3

REF_CONSTANT = 0
REF_EXP_DECAY = 1
REF_SINUSOID = 2
REF_PIECEWISE = 3


@dataclass(frozen=True)
class StateLayout:
    """Offsets of each block inside the packed ODE state vector."""

    n: int
    m: int
    p: int

    @property
    def big(self):
        # regressor dimension n + m + p
        return self.n + self.m + self.p

    @property
    def q(self):
        return self.big + 1

    @property
    def off_x(self):
        return 0

    @property
    def off_xref(self):
        return self.n

    @property
    def off_phibar(self):
        return 2 * self.n

    @property
    def off_gram(self):
        return 2 * self.n + self.big

    @property
    def off_mix(self):
        return self.off_gram + self.q * self.q

    @property
    def off_theta(self):
        return self.off_mix + self.q * self.n

    @property
    def size(self):
        return self.off_theta + self.big * self.m


# in-memory telemetry column map (the CSV schema is a documented subset)
def telemetry_columns(layout):
    n, m, big, q = layout.n, layout.m, layout.big, layout.q
    cols = {}
    pos = 0

    def block(name, width):
        nonlocal pos
        cols[name] = (pos, width)
        pos += width

    block("t", 1)
    block("x", n)
    block("xref", n)
    block("u", m)
    block("theta_hat", big * m)
    block("omega", 1)
    block("delta", 1)
    block("eps_norm", 1)
    block("eref_norm", 1)
    block("ttil_norm", 1)
    block("xi_norm", 1)
    block("seg", 1)
    block("ihat", 1)
    block("reset_flag", 1)
    block("thr_eff", 1)
    block("armed", 1)
    block("score", 1)
    block("ratio", 1)
    block("adapt_on", 1)
    block("phi_bar_n", q)
    block("y_reg", big * m)
    block("z_mix", q * n)
    return cols, pos


@dataclass
class PackedScenario:
    """Everything a core needs, as plain arrays and scalars."""

    n: int
    m: int
    p: int
    # plant segments
    seg_t: np.ndarray        # (S,)
    seg_A: np.ndarray        # (S, n, n)
    seg_B: np.ndarray        # (S, n, m)
    seg_TH: np.ndarray       # (S, p, m)
    seg_theta: np.ndarray    # (S, n+m+p, m) ground-truth controller params
    # reference model
    a_ref: np.ndarray        # (n, n)
    b_ref: np.ndarray        # (n, m)
    # reference signal tables
    r_kind: np.ndarray       # (m,) int64
    r_par: np.ndarray        # (m, 4) float
    r_pw_off: np.ndarray     # (m+1,) int64 offsets into the piecewise tables
    r_pw_t: np.ndarray       # (K,) float
    r_pw_v: np.ndarray       # (K,) float
    # basis tables
    basis_kind: int
    mono_expo: np.ndarray    # (p, n) int64 for monomials, else (0, n)
    sin_par: np.ndarray      # (p, 4) amp,freq,phase,index for sinusoid, else (0, 4)
    tab_idx: np.ndarray      # (p,) int64 for table basis, else (0,)
    tab_off: np.ndarray      # (p+1,) int64
    tab_x: np.ndarray        # (K,)
    tab_y: np.ndarray        # (K,)
    # gains
    l: float = 0.0
    sigma: float = 0.0
    delta_pr: float = 0.1
    rho: float = np.inf
    gamma0: float = 1.0
    gamma1: float = 0.0
    eps_coeff: float = 1e-8
    arm_ratio: float = 1e-6
    adapt_trust: float = 1e-2
    detector_on: bool = True
    immediate_reset: bool = False
    x_max: float = 1e6
    # grid
    t0: float = 0.0
    t_end: float = 0.0
    h: float = 1e-4
    t_up0: float = 0.0
    layout: StateLayout = field(default=None)

    def __post_init__(self):
        if self.layout is None:
            self.layout = StateLayout(self.n, self.m, self.p)


def pack_basis(basis):
    """Lower a BasisSpec to the numeric tables the cores evaluate."""
    n = basis.n
    mono = np.zeros((0, n), dtype=np.int64)
    sin_par = np.zeros((0, 4))
    tab_idx = np.zeros(0, dtype=np.int64)
    tab_off = np.zeros(1, dtype=np.int64)
    tab_x = np.zeros(0)
    tab_y = np.zeros(0)
    if basis.kind == "tanh":
        kind = BASIS_TANH
    elif basis.kind == "monomials":
        kind = BASIS_MONOMIALS
        mono = basis.monomial_exponents()
    elif basis.kind == "sinusoid":
        kind = BASIS_SINUSOID
        sin_par = np.array(
            [
                [
                    float(t["amp"]),
                    float(t["freq"]),
                    float(t.get("phase", 0.0)),
                    float(int(t["index"])),
                ]
                for t in basis.params["terms"]
            ]
        )
    else:
        kind = BASIS_TABLE
        entries = basis.params["entries"]
        tab_idx = np.array([int(e["index"]) for e in entries], dtype=np.int64)
        offs = [0]
        xs, ys = [], []
        for e in entries:
            xs.extend(float(v) for v in e["x"])
            ys.extend(float(v) for v in e["y"])
            offs.append(len(xs))
        tab_off = np.array(offs, dtype=np.int64)
        tab_x = np.array(xs)
        tab_y = np.array(ys)
    return kind, mono, sin_par, tab_idx, tab_off, tab_x, tab_y


def pack_reference(rsig):
    """Lower a ReferenceSignalSpec to numeric tables."""
    m = rsig.m
    kinds = np.zeros(m, dtype=np.int64)
    par = np.zeros((m, 4))
    offs = [0]
    pts, pvs = [], []
    for c, ch in enumerate(rsig.channels):
        kind = ch["kind"]
        if kind == "constant":
            kinds[c] = REF_CONSTANT
            par[c, 0] = float(ch["value"])
        elif kind == "exp_decay":
            kinds[c] = REF_EXP_DECAY
            par[c, :3] = [float(ch["a"]), float(ch["b"]), float(ch["c"])]
        elif kind == "sinusoid":
            kinds[c] = REF_SINUSOID
            par[c, :4] = [
                float(ch["amp"]),
                float(ch["freq"]),
                float(ch.get("phase", 0.0)),
                float(ch.get("offset", 0.0)),
            ]
        else:
            kinds[c] = REF_PIECEWISE
            pts.extend(float(v) for v in ch["times"])
            pvs.extend(float(v) for v in ch["values"])
        offs.append(len(pts))
    return kinds, par, np.array(offs, dtype=np.int64), np.array(pts), np.array(pvs)
