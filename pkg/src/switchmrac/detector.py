"""Parameter-switch indicator and the trigger/reset scheduling rule.

The indicator cross-checks the mixer outputs against the instantaneous
normalized signals; it vanishes identically while the underlying parameters
are constant and jumps as soon as stale pre-switch data contaminates the
integrals.  The scheduling rule fires when the indicator norm clears a
threshold outside a hold-off window, and books a filter reset ``delta_pr``
seconds later.
"""

from dataclasses import dataclass, replace

import numpy as np

from .errors import TemporalOrderError


@dataclass(frozen=True)
class DetectorState:
    """Trigger bookkeeping: last trigger time, counter, pending reset instant.

    ``eps_threshold`` is the effective indicator-norm threshold at the current
    instant; the engine refreshes it each step from the running signal scale
    (a strict "norm > 0" test is meaningless in floating point).
    """

    t_up: float
    i: int = 1
    pending_reset: float = None
    eps_threshold: float = 0.0
    delta_pr: float = 0.1

    def __post_init__(self):
        if self.delta_pr <= 0.0:
            raise ValueError("delta_pr must be strictly positive")
        if self.eps_threshold < 0.0:
            raise ValueError("eps_threshold must be nonnegative")


def indicator(delta, phi_bar_n, z_bar_n, z):
    """Switch indicator: delta * outer(phi_bar_n, z_bar_n) - outer(phi_bar_n, phi_bar_n) @ z."""
    phi_bar_n = np.asarray(phi_bar_n, dtype=float)
    z_bar_n = np.asarray(z_bar_n, dtype=float)
    z = np.asarray(z, dtype=float)
    return delta * np.outer(phi_bar_n, z_bar_n) - np.outer(phi_bar_n, phi_bar_n) @ z


def detector_step(state, eps_norm, t):
    """One sample of the trigger rule.

    Returns ``(new_state, scheduled_reset)`` where ``scheduled_reset`` is the
    reset instant ``t + delta_pr`` when the rule fires and None otherwise.
    Firing requires the hold-off ``t - t_up >= delta_pr`` and
    ``eps_norm > eps_threshold``.
    """
    if t < state.t_up:
        raise TemporalOrderError(f"detector time went backwards: t={t} < t_up={state.t_up}")
    if t - state.t_up >= state.delta_pr and eps_norm > state.eps_threshold:
        t_reset = t + state.delta_pr
        return (
            replace(state, t_up=float(t), i=state.i + 1, pending_reset=t_reset),
            t_reset,
        )
    return state, None
