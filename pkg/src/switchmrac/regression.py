"""Slice the mixer output into plant blocks and build the scalar regression.

On constant-parameter spans the mixer output satisfies ``z = delta * Theta``
for the stacked plant parameters, so its column blocks recover
``delta * A_i``, ``delta * B_i`` and ``delta * B_i theta_unc^T``.  Combining
those with the known reference model yields a regression
``Y = Omega * theta_i`` whose regressor ``Omega`` is a scalar determinant.
"""

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError
from .matkernel import det, det_adj


def gram_det(zb):
    """det(z_B^T z_B) as a sum of squared m x m minors of z_B.

    Algebraically identical (Cauchy-Binet) but nonnegative by construction,
    which the downstream dead-zone comparison relies on.
    """
    zb = np.asarray(zb, dtype=float)
    n, m = zb.shape
    if n == m:
        d = det(zb)
        return d * d
    total = 0.0
    for rows in itertools.combinations(range(n), m):
        d = det(zb[list(rows), :])
        total += d * d
    return total


@dataclass(frozen=True)
class RegressionSnapshot:
    """All regression quantities at one time instant."""

    z: np.ndarray
    delta: float
    z_A: np.ndarray
    z_B: np.ndarray
    z_Bt: np.ndarray
    Y: np.ndarray
    Omega: float


def slice_z(z, dims):
    """Column blocks of z^T: (z_A nxn, z_B nxm, z_Bt nxp).

    The selectors are identity blocks over columns [0, n), [n, n+m) and
    [n+m, n+m+p) of z^T; the trailing column (the initial-condition channel)
    is never selected.
    """
    n, m, p = dims
    z = np.asarray(z, dtype=float)
    if z.shape != (n + m + p + 1, n):
        raise DimensionError(
            f"z must have shape {(n + m + p + 1, n)} for dims {dims}, got {z.shape}"
        )
    zt = z.T
    return (
        zt[:, :n].copy(),
        zt[:, n : n + m].copy(),
        zt[:, n + m : n + m + p].copy(),
    )


def build_regression(z_A, z_B, z_Bt, delta, rm):
    """Scalar-regressor equation from the sliced blocks.

    With ``M = adj(z_B^T z_B) @ z_B^T``: ``Omega = det(z_B^T z_B)`` and ``Y``
    stacks the transposed blocks ``M (delta A_ref - z_A)``, ``delta M B_ref``
    and ``M z_Bt``.  ``Omega = 0`` is a legal degenerate output; consumers
    gate on the adaptation dead zone.
    """
    z_A = np.asarray(z_A, dtype=float)
    z_B = np.asarray(z_B, dtype=float)
    z_Bt = np.asarray(z_Bt, dtype=float)
    omega = gram_det(z_B)
    _, adj_s = det_adj(z_B.T @ z_B)
    m_op = adj_s @ z_B.T
    y = np.vstack(
        [
            (m_op @ (delta * rm.A_ref - z_A)).T,
            (delta * (m_op @ rm.B_ref)).T,
            (m_op @ z_Bt).T,
        ]
    )
    return y, float(omega)


def snapshot(z, delta, dims, rm):
    """Full RegressionSnapshot from raw mixer outputs."""
    z_a, z_b, z_bt = slice_z(z, dims)
    y, omega = build_regression(z_a, z_b, z_bt, delta, rm)
    return RegressionSnapshot(
        z=np.asarray(z, dtype=float),
        delta=float(delta),
        z_A=z_a,
        z_B=z_b,
        z_Bt=z_bt,
        Y=y,
        Omega=omega,
    )
