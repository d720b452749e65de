"""Resettable state filters, signal normalization, and the excitation mixer.

A first-order filter tracks the measured regressor, the filtered signals are
normalized to unit-bounded magnitude, and exponentially weighted outer
products accumulate a Gram matrix ``omega_ext`` and a mixing integral
``upsilon``.  The mixer output ``z = adj(omega_ext) @ upsilon`` together with
``delta = det(omega_ext)`` forms a scalarized regression that downstream
modules slice and consume.  All filter states restart from zero at each reset
instant ``t_hat``.
"""

from dataclasses import dataclass, replace

import numpy as np

from .errors import TemporalOrderError
from .matkernel import det_adj


@dataclass(frozen=True)
class Gains:
    """Filter pole l and Gram forgetting rate sigma, both > 0 (1/seconds)."""

    l: float
    sigma: float

    def __post_init__(self):
        if self.l <= 0.0 or self.sigma <= 0.0:
            raise ValueError("filter gains l and sigma must be strictly positive")


@dataclass(frozen=True)
class FilterBankState:
    """Filtered regressor, weighted Gram, mixing integral, current reset instant.

    ``phi_bar`` has the regressor dimension n+m+p; ``omega_ext`` is the
    (n+m+p+1)-square Gram over the normalized signals (symmetric PSD along any
    trajectory) and ``upsilon`` the matching (n+m+p+1) x n mixing integral.
    """

    phi_bar: np.ndarray
    omega_ext: np.ndarray
    upsilon: np.ndarray
    t_hat: float

    @classmethod
    def zero(cls, n, m, p, t_hat=0.0):
        big = n + m + p
        return cls(
            phi_bar=np.zeros(big),
            omega_ext=np.zeros((big + 1, big + 1)),
            upsilon=np.zeros((big + 1, n)),
            t_hat=float(t_hat),
        )

    @property
    def q(self):
        return self.omega_ext.shape[0]


def normalized_signals(state, x, t, gains):
    """Normalized regressor extension and regressand.

    Returns ``(phi_bar_n, z_bar_n)`` where the extension appends the decaying
    channel exp(-l (t - t_hat)) to the filtered regressor and both outputs are
    scaled by 1 / (1 + |ext|^2), so |phi_bar_n| <= 1/2 always.
    """
    if t < state.t_hat:
        raise TemporalOrderError(f"t={t} precedes the filter reset instant {state.t_hat}")
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    ext = np.concatenate([state.phi_bar, [np.exp(-gains.l * (t - state.t_hat))]])
    ns = 1.0 / (1.0 + ext @ ext)
    z_bar_n = ns * (x - gains.l * state.phi_bar[:n])
    return ns * ext, z_bar_n


def filter_derivatives(state, phi, x, t, gains):
    """Time derivatives of (phi_bar, omega_ext, upsilon) at time t.

    The Gram and mixing integrals are realized as ODE states: their rates are
    the exponentially weighted outer products of the normalized signals.
    """
    if t < state.t_hat:
        raise TemporalOrderError(f"t={t} precedes the filter reset instant {state.t_hat}")
    phi = np.asarray(phi, dtype=float)
    phi_bar_n, z_bar_n = normalized_signals(state, x, t, gains)
    w = np.exp(-gains.sigma * (t - state.t_hat))
    d_phi_bar = -gains.l * state.phi_bar + phi
    d_omega = w * np.outer(phi_bar_n, phi_bar_n)
    d_upsilon = w * np.outer(phi_bar_n, z_bar_n)
    return d_phi_bar, d_omega, d_upsilon


def reset(state, t_hat_new):
    """Zero every filter state and restart the clock at ``t_hat_new``."""
    if t_hat_new < state.t_hat:
        raise TemporalOrderError(
            f"reset instant {t_hat_new} precedes the current one {state.t_hat}"
        )
    return replace(
        state,
        phi_bar=np.zeros_like(state.phi_bar),
        omega_ext=np.zeros_like(state.omega_ext),
        upsilon=np.zeros_like(state.upsilon),
        t_hat=float(t_hat_new),
    )


def drem_outputs(state):
    """Mixer outputs ``(z, delta)``: adjugate-projected integral and Gram det.

    ``delta`` is the determinant of a PSD Gram, hence nonnegative up to
    roundoff; both outputs vanish identically right after a reset.
    """
    delta, adj = det_adj(state.omega_ext)
    return adj @ state.upsilon, delta
