import numpy as np
import pytest

from conftest import A0, B0, TH0, canonical_plant, reference_model
from switchmrac import regression as reg
from switchmrac.dynamics import ideal_parameters
from switchmrac.errors import DimensionError


def theta_bar_seg0(x_reset):
    return np.vstack([A0.T, B0.T, (B0 @ TH0.T).T, np.asarray(x_reset)[None, :]])


class TestSliceZ:
    def test_consistent_blocks(self):
        tbar = theta_bar_seg0([0.3, -0.4])
        z = 2.0 * tbar
        z_a, z_b, z_bt = reg.slice_z(z, (2, 2, 2))
        np.testing.assert_allclose(z_a, 2.0 * A0)
        np.testing.assert_allclose(z_b, [[1.6, 1.6], [0.0, 1.6]])
        np.testing.assert_allclose(z_bt, 2.0 * B0 @ TH0.T)

    def test_zero(self):
        z_a, z_b, z_bt = reg.slice_z(np.zeros((7, 2)), (2, 2, 2))
        assert not z_a.any() and not z_b.any() and not z_bt.any()

    def test_selector_roundtrip(self, rng):
        z = rng.normal(size=(7, 2))
        z_a, z_b, z_bt = reg.slice_z(z, (2, 2, 2))
        rebuilt = np.hstack([z_a, z_b, z_bt, z.T[:, 6:7]])
        assert np.array_equal(rebuilt, z.T)

    def test_dimension_check(self):
        with pytest.raises(DimensionError):
            reg.slice_z(np.zeros((6, 2)), (2, 2, 2))


class TestBuildRegression:
    def test_zero_blocks_degenerate(self):
        rm = reference_model()
        y, omega = reg.build_regression(
            np.zeros((2, 2)), np.zeros((2, 2)), np.zeros((2, 2)), 0.0, rm
        )
        assert omega == 0.0
        assert not y.any()

    def test_omega_is_det_squared(self):
        rm = reference_model()
        z_b = 2.0 * B0
        _, omega = reg.build_regression(np.zeros((2, 2)), z_b, np.zeros((2, 2)), 1.0, rm)
        assert omega == pytest.approx(2.56 ** 2, rel=1e-12)
        assert omega == pytest.approx(6.5536, rel=1e-12)

    def test_consistent_inputs_recover_ideal_parameters(self):
        plant = canonical_plant()
        rm = reference_model()
        theta0 = ideal_parameters(plant.segments[0], rm).theta
        delta = 1.0
        y, omega = reg.build_regression(
            delta * A0, delta * B0, delta * B0 @ TH0.T, delta, rm
        )
        np.testing.assert_allclose(y, omega * theta0, atol=1e-9 * max(omega, 1.0))

    def test_consistency_scales_with_delta(self, rng):
        plant = canonical_plant()
        rm = reference_model()
        for seg in plant.segments:
            theta = ideal_parameters(seg, rm).theta
            delta = float(rng.uniform(0.1, 3.0))
            y, omega = reg.build_regression(
                delta * seg.A, delta * seg.B, delta * seg.B @ seg.theta_unc.T, delta, rm
            )
            assert omega > 0.0
            np.testing.assert_allclose(
                y, omega * theta, rtol=1e-9, atol=1e-12 * omega * np.abs(theta).max()
            )

    def test_snapshot_fields(self):
        rm = reference_model()
        tbar = theta_bar_seg0([0.0, 0.0])
        snap = reg.snapshot(2.0 * tbar, 2.0, (2, 2, 2), rm)
        assert snap.Omega > 0.0
        np.testing.assert_allclose(snap.z_B, 2.0 * B0)
        assert snap.Y.shape == (6, 2)
