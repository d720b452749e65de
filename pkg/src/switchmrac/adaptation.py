"""Dead-zoned adaptive law driving the controller parameter estimate.

Below the dead-zone level ``rho`` the estimate freezes exactly; above it the
update contracts the estimate toward ``Y / Omega`` at the rate
``gamma0 * |omega|^2 + gamma1``.  The rate uses lambda_max(omega omega^T) =
|omega|^2 directly (exact for a rank-1 outer product), never an eigensolver,
and the update is evaluated in the algebraically identical form
``-(gamma0 |omega|^2 + gamma1) (theta_hat - Y/Omega)`` which stays stable for
the tiny Omega magnitudes a normalized Gram determinant produces.
"""

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class AdaptationGains:
    """Dead-zone level rho > 0 and rate gains gamma0 >= 1, gamma1 >= 0."""

    rho: float
    gamma0: float = 1.0
    gamma1: float = 0.0

    def __post_init__(self):
        if self.rho <= 0.0:
            raise ValueError("rho must be strictly positive")
        if self.gamma0 < 1.0:
            raise ValueError("gamma0 must be >= 1")
        if self.gamma1 < 0.0:
            raise ValueError("gamma1 must be nonnegative")


def gain(omega_scalar, omega_reg, gains):
    """Adaptation gain: 0 in the dead zone, else (gamma0 |w|^2 + gamma1) / Omega^2."""
    if omega_scalar <= gains.rho:
        return 0.0
    omega_reg = np.asarray(omega_reg, dtype=float)
    rate = gains.gamma0 * float(omega_reg @ omega_reg) + gains.gamma1
    return rate / (omega_scalar * omega_scalar)


def theta_derivative(theta_hat, y, omega_scalar, gamma):
    """Estimate derivative -gamma * Omega * (Omega theta_hat - Y); exact zero when frozen."""
    theta_hat = np.asarray(theta_hat, dtype=float)
    if gamma == 0.0:
        return np.zeros_like(theta_hat)
    y = np.asarray(y, dtype=float)
    # gamma * Omega^2 == gamma0 |w|^2 + gamma1 by construction of gain()
    return -(gamma * omega_scalar * omega_scalar) * (theta_hat - y / omega_scalar)
