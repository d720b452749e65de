"""Switched plant, reference model, control law, and ground-truth ideal gains.

The plant is piecewise linear-in-parameters with a matched nonlinearity:
``xdot = A_i x + B_i (u + theta_unc_i^T psi(x))`` on half-open segments, and
should follow a Hurwitz reference model ``xrefdot = A_ref xref + B_ref r``.
The ideal-gain solver lives here as the verification oracle; simulated
controllers never see it.
"""

import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ConfigError,
    DimensionError,
    MatchingConditionError,
    TemporalOrderError,
)
from .matkernel import det, det_adj, invert


# ---------------------------------------------------------------------------
# basis functions


@dataclass(frozen=True)
class BasisSpec:
    """Catalog of known basis functions psi(x) with fixed output dimension."""

    kind: str
    n: int
    params: dict = field(default_factory=dict)

    KINDS = ("tanh", "monomials", "sinusoid", "table")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ConfigError(f"unknown basis kind {self.kind!r}", path="basis.kind")
        if self.kind == "monomials":
            deg = int(self.params.get("degree", 0))
            if deg < 1:
                raise ConfigError("monomials basis needs degree >= 1", path="basis.degree")
        if self.kind == "sinusoid":
            if not self.params.get("terms"):
                raise ConfigError("sinusoid basis needs a terms list", path="basis.terms")
        if self.kind == "table":
            entries = self.params.get("entries")
            if not entries:
                raise ConfigError("table basis needs an entries list", path="basis.entries")
            for e in entries:
                xs = np.asarray(e["x"], dtype=float)
                if xs.size < 2 or np.any(np.diff(xs) <= 0):
                    raise ConfigError(
                        "table breakpoints must be strictly increasing, >= 2 knots",
                        path="basis.entries",
                    )
                if len(e["y"]) != xs.size:
                    raise ConfigError("table x/y lengths differ", path="basis.entries")

    @property
    def p(self):
        """Output dimension of psi."""
        if self.kind == "tanh":
            return self.n
        if self.kind == "monomials":
            deg = int(self.params["degree"])
            return sum(
                1
                for g in range(1, deg + 1)
                for _ in itertools.combinations_with_replacement(range(self.n), g)
            )
        if self.kind == "sinusoid":
            return len(self.params["terms"])
        return len(self.params["entries"])

    def monomial_exponents(self):
        """Exponent matrix (p, n) for the monomial catalog, degree-graded order."""
        deg = int(self.params["degree"])
        rows = []
        for g in range(1, deg + 1):
            for combo in itertools.combinations_with_replacement(range(self.n), g):
                e = np.zeros(self.n, dtype=np.int64)
                for i in combo:
                    e[i] += 1
                rows.append(e)
        return np.array(rows, dtype=np.int64)

    def evaluate(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape != (self.n,):
            raise DimensionError(f"basis expects an {self.n}-vector, got shape {x.shape}")
        if self.kind == "tanh":
            return np.tanh(x)
        if self.kind == "monomials":
            expo = self.monomial_exponents()
            return np.prod(x[None, :] ** expo, axis=1)
        if self.kind == "sinusoid":
            out = np.empty(self.p)
            for k, term in enumerate(self.params["terms"]):
                amp, freq, phase, idx = (
                    float(term["amp"]),
                    float(term["freq"]),
                    float(term.get("phase", 0.0)),
                    int(term["index"]),
                )
                out[k] = amp * np.sin(freq * x[idx] + phase)
            return out
        out = np.empty(self.p)
        for k, e in enumerate(self.params["entries"]):
            xs = np.asarray(e["x"], dtype=float)
            ys = np.asarray(e["y"], dtype=float)
            out[k] = np.interp(x[int(e["index"])], xs, ys)
        return out


# ---------------------------------------------------------------------------
# reference signal


@dataclass(frozen=True)
class ReferenceSignalSpec:
    """Per-channel reference signal catalog, evaluable at any t >= t0."""

    channels: tuple

    KINDS = ("constant", "exp_decay", "sinusoid", "piecewise_constant")

    def __post_init__(self):
        for c, ch in enumerate(self.channels):
            if ch.get("kind") not in self.KINDS:
                raise ConfigError(
                    f"unknown reference kind {ch.get('kind')!r}",
                    path=f"reference_model.r[{c}].kind",
                )
            if ch["kind"] == "piecewise_constant":
                times = np.asarray(ch["times"], dtype=float)
                if times.size == 0 or np.any(np.diff(times) <= 0):
                    raise ConfigError(
                        "piecewise_constant needs strictly increasing times",
                        path=f"reference_model.r[{c}].times",
                    )
                if len(ch["values"]) != times.size:
                    raise ConfigError(
                        "piecewise_constant times/values lengths differ",
                        path=f"reference_model.r[{c}].values",
                    )

    @property
    def m(self):
        return len(self.channels)

    def evaluate(self, t):
        out = np.empty(self.m)
        for c, ch in enumerate(self.channels):
            kind = ch["kind"]
            if kind == "constant":
                out[c] = float(ch["value"])
            elif kind == "exp_decay":
                out[c] = float(ch["a"]) * np.exp(-float(ch["b"]) * t) + float(ch["c"])
            elif kind == "sinusoid":
                out[c] = float(ch["amp"]) * np.sin(
                    float(ch["freq"]) * t + float(ch.get("phase", 0.0))
                ) + float(ch.get("offset", 0.0))
            else:
                times = np.asarray(ch["times"], dtype=float)
                j = int(np.searchsorted(times, t, side="right")) - 1
                out[c] = float(ch["values"][max(j, 0)])
        return out


# ---------------------------------------------------------------------------
# plant / reference model specs


@dataclass(frozen=True)
class PlantSegment:
    """One constant-parameter span of the switched plant."""

    A: np.ndarray
    B: np.ndarray
    theta_unc: np.ndarray  # (p, m) coefficients of the matched uncertainty
    t_start: float

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float)
        B = np.asarray(self.B, dtype=float)
        th = np.asarray(self.theta_unc, dtype=float)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "theta_unc", th)
        n = A.shape[0]
        if A.shape != (n, n):
            raise DimensionError(f"segment A must be square, got {A.shape}")
        if B.ndim != 2 or B.shape[0] != n:
            raise DimensionError(f"segment B must be {n}xm, got {B.shape}")
        if B.shape[1] > n:
            raise DimensionError("segment B must have at least as many rows as columns")
        if th.shape[1] != B.shape[1]:
            raise DimensionError(
                f"theta_unc must be pxm with m={B.shape[1]}, got {th.shape}"
            )
        if abs(det(B.T @ B)) < 1e-12:
            raise MatchingConditionError(
                "segment B is column-rank deficient (det(B^T B) ~ 0)"
            )

    @property
    def n(self):
        return self.A.shape[0]

    @property
    def m(self):
        return self.B.shape[1]

    @property
    def p(self):
        return self.theta_unc.shape[0]


@dataclass(frozen=True)
class SwitchedPlantSpec:
    """Ordered plant segments with switch instants; ground truth for the harness."""

    segments: tuple
    x0: np.ndarray
    basis: BasisSpec

    def __post_init__(self):
        object.__setattr__(self, "x0", np.asarray(self.x0, dtype=float))
        if not self.segments:
            raise ConfigError("at least one plant segment is required", path="plant.segments")
        starts = [s.t_start for s in self.segments]
        if any(b <= a for a, b in zip(starts, starts[1:])):
            raise ConfigError(
                "segment t_start values must be strictly increasing",
                path="plant.segments",
            )
        n = self.segments[0].n
        m = self.segments[0].m
        p = self.segments[0].p
        for i, s in enumerate(self.segments):
            if (s.n, s.m, s.p) != (n, m, p):
                raise DimensionError(f"segment {i} dimensions differ from segment 0")
        if self.x0.shape != (n,):
            raise DimensionError(f"x0 must be an {n}-vector, got {self.x0.shape}")
        if self.basis.n != n:
            raise DimensionError("basis state dimension differs from the plant's")
        if self.basis.p != p:
            raise DimensionError(
                f"basis output dimension {self.basis.p} != theta_unc rows {p}"
            )

    @property
    def t0(self):
        return self.segments[0].t_start

    @property
    def switch_times(self):
        return [s.t_start for s in self.segments[1:]]


def hurwitz_margin(a):
    """Routh test on the characteristic polynomial; > 0 iff strictly Hurwitz.

    Returns the smallest first-column Routh entry (normalized); eigenvalue
    computations are avoided entirely, so complex pairs are handled exactly.
    """
    a = np.asarray(a, dtype=float)
    n = a.shape[0]
    # characteristic polynomial by the Faddeev-LeVerrier recursion
    coeffs = np.empty(n + 1)
    coeffs[0] = 1.0
    mk = np.eye(n)
    for k in range(1, n + 1):
        ak = a @ mk
        c = -np.trace(ak) / k
        coeffs[k] = c
        mk = ak + c * np.eye(n)
    scale = max(1.0, float(np.max(np.abs(coeffs))))
    if np.any(coeffs[1:] <= 1e-12 * scale):
        # a non-positive coefficient already rules out strict Hurwitz
        return float(np.min(coeffs[1:]) / scale)
    width = n // 2 + 1
    top = np.zeros(width)
    bot = np.zeros(width)
    top[: coeffs[0::2].size] = coeffs[0::2]
    bot[: coeffs[1::2].size] = coeffs[1::2]
    first_col = [top[0], bot[0]]
    for _ in range(n - 1):
        if bot[0] == 0.0:
            return -1.0
        new = np.zeros(width)
        new[:-1] = (bot[0] * top[1:] - top[0] * bot[1:]) / bot[0]
        top, bot = bot, new
        first_col.append(new[0])
    return float(min(first_col) / scale)


@dataclass(frozen=True)
class ReferenceModelSpec:
    """Hurwitz reference model plus the reference signal driving it."""

    A_ref: np.ndarray
    B_ref: np.ndarray
    x0_ref: np.ndarray
    r: ReferenceSignalSpec

    def __post_init__(self):
        A = np.asarray(self.A_ref, dtype=float)
        B = np.asarray(self.B_ref, dtype=float)
        x0 = np.asarray(self.x0_ref, dtype=float)
        object.__setattr__(self, "A_ref", A)
        object.__setattr__(self, "B_ref", B)
        object.__setattr__(self, "x0_ref", x0)
        n = A.shape[0]
        if A.shape != (n, n):
            raise DimensionError(f"A_ref must be square, got {A.shape}")
        if B.shape[0] != n:
            raise DimensionError(f"B_ref must have {n} rows, got {B.shape}")
        if x0.shape != (n,):
            raise DimensionError(f"x0_ref must be an {n}-vector")
        if self.r.m != B.shape[1]:
            raise DimensionError("reference signal channel count != B_ref columns")
        if hurwitz_margin(A) <= 0.0:
            raise ConfigError(
                "A_ref is not strictly Hurwitz (Routh test failed)",
                path="reference_model.A_ref",
            )

    @property
    def n(self):
        return self.A_ref.shape[0]

    @property
    def m(self):
        return self.B_ref.shape[1]


@dataclass(frozen=True)
class IdealParameters:
    """Stacked ideal controller parameters [Kx; Kr; theta_unc^T]^T, (n+m+p) x m."""

    theta: np.ndarray
    Kx: np.ndarray
    Kr: np.ndarray


# ---------------------------------------------------------------------------
# operations


def active_segment(t, spec):
    """Index of the segment owning time t (switch instants belong to the new one)."""
    if t < spec.t0:
        raise TemporalOrderError(f"t={t} precedes the initial instant {spec.t0}")
    idx = 0
    for i, seg in enumerate(spec.segments):
        if t >= seg.t_start:
            idx = i
    return idx


def plant_derivative(x, u, seg, basis):
    """xdot = A x + B (u + theta_unc^T psi(x))."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    if x.shape != (seg.n,) or u.shape != (seg.m,):
        raise DimensionError("plant_derivative: state/input dimensions disagree")
    psi = basis.evaluate(x)
    return seg.A @ x + seg.B @ (u + seg.theta_unc.T @ psi)


def ref_model_derivative(x_ref, r, rm):
    """xrefdot = A_ref x_ref + B_ref r."""
    x_ref = np.asarray(x_ref, dtype=float)
    r = np.asarray(r, dtype=float)
    if x_ref.shape != (rm.n,) or r.shape != (rm.m,):
        raise DimensionError("ref_model_derivative: dimensions disagree")
    return rm.A_ref @ x_ref + rm.B_ref @ r


def control_regressor(x, r, basis):
    """Concatenated regressor [x; r; -psi(x)] feeding the control law."""
    x = np.asarray(x, dtype=float)
    r = np.asarray(r, dtype=float)
    return np.concatenate([x, r, -basis.evaluate(x)])


def control_law(theta_hat, omega):
    """u = theta_hat^T omega."""
    theta_hat = np.asarray(theta_hat, dtype=float)
    omega = np.asarray(omega, dtype=float)
    if theta_hat.shape[0] != omega.shape[0]:
        raise DimensionError(
            f"control_law: theta_hat has {theta_hat.shape[0]} rows, "
            f"omega has {omega.shape[0]} entries"
        )
    return theta_hat.T @ omega


def ideal_parameters(seg, rm, tol=1e-8):
    """Solve A + B Kx = A_ref, B Kr = B_ref and stack the ideal controller gains.

    Square B is inverted exactly; tall B goes through least squares with a
    residual gate.  An unsolvable matching condition rejects the scenario.
    """
    n, m = seg.n, seg.m
    if rm.n != n or rm.m != m:
        raise DimensionError("plant and reference model dimensions disagree")
    gap = rm.A_ref - seg.A
    if m == n:
        try:
            binv = invert(seg.B)
        except Exception as exc:
            raise MatchingConditionError(f"segment B is not invertible: {exc}") from exc
        kx = binv @ gap
        kr = binv @ rm.B_ref
    else:
        gram = seg.B.T @ seg.B
        try:
            ginv = invert(gram)
        except Exception as exc:
            raise MatchingConditionError(
                f"segment B is column-rank deficient: {exc}"
            ) from exc
        kx = ginv @ seg.B.T @ gap
        kr = ginv @ seg.B.T @ rm.B_ref
    res_a = float(np.max(np.abs(seg.A + seg.B @ kx - rm.A_ref)))
    res_b = float(np.max(np.abs(seg.B @ kr - rm.B_ref)))
    if max(res_a, res_b) > tol:
        raise MatchingConditionError(
            "matching condition unsolvable for this segment "
            f"(residuals {res_a:.3e}, {res_b:.3e} exceed {tol:g})"
        )
    theta = np.vstack([kx.T, kr.T, seg.theta_unc])
    return IdealParameters(theta=theta, Kx=kx, Kr=kr)
