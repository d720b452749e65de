import numpy as np
import pytest

from conftest import A0, B0, KX0, KR0, TH0, canonical_plant, reference_model
from switchmrac import dynamics as dyn
from switchmrac.errors import (
    ConfigError,
    DimensionError,
    MatchingConditionError,
    TemporalOrderError,
)


class TestActiveSegment:
    def test_boundaries(self):
        plant = canonical_plant()
        assert dyn.active_segment(0.0, plant) == 0
        assert dyn.active_segment(5.0, plant) == 1  # switch instant owns the new span
        assert dyn.active_segment(12.3, plant) == 2

    def test_before_start_rejected(self):
        with pytest.raises(TemporalOrderError):
            dyn.active_segment(-0.1, canonical_plant())

    def test_non_decreasing(self):
        plant = canonical_plant()
        ts = np.linspace(0.0, 14.0, 300)
        segs = [dyn.active_segment(t, plant) for t in ts]
        assert all(b >= a for a, b in zip(segs, segs[1:]))


class TestPlantDerivative:
    def test_zero_state_zero_input(self):
        seg = canonical_plant().segments[0]
        basis = dyn.BasisSpec(kind="tanh", n=2)
        np.testing.assert_array_equal(
            dyn.plant_derivative([0.0, 0.0], [0.0, 0.0], seg, basis), [0.0, 0.0]
        )

    def test_direct_evaluation(self):
        seg = canonical_plant().segments[0]
        basis = dyn.BasisSpec(kind="tanh", n=2)
        x = np.array([-1.0, 0.0])
        got = dyn.plant_derivative(x, [0.0, 0.0], seg, basis)
        expect = A0 @ x + B0 @ (TH0.T @ np.tanh(x))
        np.testing.assert_allclose(got, expect, rtol=1e-14)
        np.testing.assert_allclose(got, [-1.12186, 1.0], atol=5e-6)

    def test_matched_term_cancellation(self):
        seg = canonical_plant().segments[0]
        basis = dyn.BasisSpec(kind="tanh", n=2)
        x = np.array([0.3, -0.7])
        u = -seg.theta_unc.T @ basis.evaluate(x)
        np.testing.assert_allclose(
            dyn.plant_derivative(x, u, seg, basis), seg.A @ x, atol=1e-14
        )


class TestReferenceModel:
    def test_matrix_vector_product(self):
        rm = reference_model()
        np.testing.assert_allclose(
            dyn.ref_model_derivative([0.0, 0.0], [1.0, 0.0], rm), [4.0, 0.0]
        )

    def test_zero_reference(self):
        rm = reference_model()
        x = np.array([0.3, 1.1])
        np.testing.assert_allclose(
            dyn.ref_model_derivative(x, [0.0, 0.0], rm), rm.A_ref @ x
        )

    def test_all_zero(self):
        rm = reference_model()
        np.testing.assert_array_equal(
            dyn.ref_model_derivative([0.0, 0.0], [0.0, 0.0], rm), [0.0, 0.0]
        )

    def test_non_hurwitz_rejected(self):
        with pytest.raises(ConfigError):
            reference_model_bad = dyn.ReferenceModelSpec(
                A_ref=np.eye(2),
                B_ref=np.eye(2),
                x0_ref=np.zeros(2),
                r=dyn.ReferenceSignalSpec(
                    channels=({"kind": "constant", "value": 0.0},) * 2
                ),
            )

    def test_marginal_rejected(self):
        # pure oscillator: eigenvalues on the imaginary axis
        with pytest.raises(ConfigError):
            dyn.ReferenceModelSpec(
                A_ref=np.array([[0.0, 1.0], [-1.0, 0.0]]),
                B_ref=np.eye(2),
                x0_ref=np.zeros(2),
                r=dyn.ReferenceSignalSpec(
                    channels=({"kind": "constant", "value": 0.0},) * 2
                ),
            )


class TestHurwitzMargin:
    def test_known_stable(self):
        assert dyn.hurwitz_margin(np.array([[0.0, 1.0], [-4.0, -2.0]])) > 0.0

    def test_known_unstable(self):
        assert dyn.hurwitz_margin(np.array([[1.0, 1.0], [-1.0, -1.0]])) <= 0.0

    def test_matches_eig_oracle(self, rng):
        for k in (2, 3, 4, 5, 6):
            for _ in range(30):
                a = rng.normal(size=(k, k))
                stable = np.max(np.linalg.eigvals(a).real) < -1e-6
                margin = dyn.hurwitz_margin(a)
                if stable:
                    assert margin > 0.0
                if margin > 0.0:
                    assert np.max(np.linalg.eigvals(a).real) < 0.0


class TestControlRegressor:
    def test_concatenation(self):
        basis = dyn.BasisSpec(kind="tanh", n=2)
        got = dyn.control_regressor([1.0, 2.0], [3.0, 4.0], basis)
        np.testing.assert_allclose(
            got, [1.0, 2.0, 3.0, 4.0, -np.tanh(1.0), -np.tanh(2.0)]
        )

    def test_zero(self):
        basis = dyn.BasisSpec(kind="tanh", n=2)
        np.testing.assert_array_equal(
            dyn.control_regressor([0.0, 0.0], [0.0, 0.0], basis), np.zeros(6)
        )

    def test_block_roundtrip_bit_exact(self, rng):
        basis = dyn.BasisSpec(kind="tanh", n=2)
        x = rng.normal(size=2)
        r = rng.normal(size=2)
        w = dyn.control_regressor(x, r, basis)
        assert np.array_equal(w[:2], x)
        assert np.array_equal(w[2:4], r)
        assert np.array_equal(w[4:], -np.tanh(x))


class TestControlLaw:
    def test_feedforward_start(self, rng):
        # theta_hat0 = [0; I; 0] stacked passes the reference straight through
        th = np.zeros((6, 2))
        th[2, 0] = 1.0
        th[3, 1] = 1.0
        basis = dyn.BasisSpec(kind="tanh", n=2)
        for _ in range(5):
            x = rng.normal(size=2)
            r = rng.normal(size=2)
            u = dyn.control_law(th, dyn.control_regressor(x, r, basis))
            np.testing.assert_allclose(u, r, atol=1e-15)

    def test_zero_estimate(self):
        assert np.array_equal(dyn.control_law(np.zeros((6, 2)), np.ones(6)), np.zeros(2))

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionError):
            dyn.control_law(np.zeros((5, 2)), np.ones(6))


class TestIdealParameters:
    def test_canonical_segment0(self):
        plant = canonical_plant()
        rm = reference_model()
        ip = dyn.ideal_parameters(plant.segments[0], rm)
        np.testing.assert_allclose(ip.Kx, KX0, rtol=1e-12)
        np.testing.assert_allclose(ip.Kr, KR0, rtol=1e-12)
        np.testing.assert_allclose(ip.theta, np.vstack([KX0.T, KR0.T, TH0]), rtol=1e-12)

    def test_trivial_matching(self):
        rm = reference_model()
        seg = dyn.PlantSegment(A=rm.A_ref, B=rm.B_ref, theta_unc=np.zeros((2, 2)), t_start=0.0)
        ip = dyn.ideal_parameters(seg, rm)
        np.testing.assert_allclose(ip.Kx, np.zeros((2, 2)), atol=1e-12)
        np.testing.assert_allclose(ip.Kr, np.eye(2), atol=1e-12)

    def test_rank_deficient_rejected(self):
        with pytest.raises(MatchingConditionError):
            dyn.PlantSegment(
                A=np.eye(2), B=np.array([[1.0, 1.0], [1.0, 1.0]]),
                theta_unc=np.zeros((2, 2)), t_start=0.0,
            )

    def test_residuals_satisfied(self):
        plant = canonical_plant()
        rm = reference_model()
        for seg in plant.segments:
            ip = dyn.ideal_parameters(seg, rm)
            np.testing.assert_allclose(seg.A + seg.B @ ip.Kx, rm.A_ref, atol=1e-9)
            np.testing.assert_allclose(seg.B @ ip.Kr, rm.B_ref, atol=1e-9)

    def test_tall_b_least_squares(self):
        # synthetic solvable tall-B case: reference model built from the gains
        a = np.array([[0.0, 1.0], [0.0, 0.0]])
        b = np.array([[0.0], [1.0]])
        kx = np.array([[-4.0, -2.0]])
        kr = np.array([[2.0]])
        rm = dyn.ReferenceModelSpec(
            A_ref=a + b @ kx,
            B_ref=b @ kr,
            x0_ref=np.zeros(2),
            r=dyn.ReferenceSignalSpec(channels=({"kind": "constant", "value": 1.0},)),
        )
        seg = dyn.PlantSegment(A=a, B=b, theta_unc=np.zeros((2, 1)), t_start=0.0)
        ip = dyn.ideal_parameters(seg, rm)
        np.testing.assert_allclose(ip.Kx, kx, atol=1e-10)
        np.testing.assert_allclose(ip.Kr, kr, atol=1e-10)

    def test_unsolvable_matching_rejected(self):
        # tall B cannot reach this A_ref: gap has a component outside range(B)
        a = np.zeros((2, 2))
        b = np.array([[0.0], [1.0]])
        rm = dyn.ReferenceModelSpec(
            A_ref=np.array([[-1.0, 0.5], [0.0, -2.0]]),
            B_ref=b,
            x0_ref=np.zeros(2),
            r=dyn.ReferenceSignalSpec(channels=({"kind": "constant", "value": 1.0},)),
        )
        seg = dyn.PlantSegment(A=a, B=b, theta_unc=np.zeros((1, 1)), t_start=0.0)
        with pytest.raises(MatchingConditionError):
            dyn.ideal_parameters(seg, rm)


class TestMatchedCancellation:
    def test_ideal_controller_reproduces_reference_dynamics(self, rng):
        plant = canonical_plant()
        rm = reference_model()
        basis = plant.basis
        for seg in plant.segments:
            theta = dyn.ideal_parameters(seg, rm).theta
            for _ in range(5):
                x = rng.normal(size=2)
                r = rng.normal(size=2)
                u = dyn.control_law(theta, dyn.control_regressor(x, r, basis))
                xdot = dyn.plant_derivative(x, u, seg, basis)
                np.testing.assert_allclose(
                    xdot, rm.A_ref @ x + rm.B_ref @ r, atol=1e-10
                )


class TestBasisCatalog:
    def test_monomials_dimension_and_order(self):
        basis = dyn.BasisSpec(kind="monomials", n=2, params={"degree": 2})
        assert basis.p == 5
        x = np.array([2.0, 3.0])
        np.testing.assert_allclose(basis.evaluate(x), [2.0, 3.0, 4.0, 6.0, 9.0])

    def test_sinusoid(self):
        basis = dyn.BasisSpec(
            kind="sinusoid", n=2,
            params={"terms": [{"amp": 2.0, "freq": 3.0, "phase": 0.5, "index": 1}]},
        )
        assert basis.p == 1
        x = np.array([0.0, 0.7])
        np.testing.assert_allclose(basis.evaluate(x), [2.0 * np.sin(3.0 * 0.7 + 0.5)])

    def test_table_interpolation(self):
        basis = dyn.BasisSpec(
            kind="table", n=1,
            params={"entries": [{"index": 0, "x": [-1.0, 0.0, 1.0], "y": [0.0, 1.0, 0.0]}]},
        )
        np.testing.assert_allclose(basis.evaluate(np.array([0.5])), [0.5])
        # constant extrapolation keeps the basis continuous
        np.testing.assert_allclose(basis.evaluate(np.array([5.0])), [0.0])

    def test_unknown_kind_rejected(self):
        with pytest.raises(ConfigError):
            dyn.BasisSpec(kind="fourier", n=2)


class TestReferenceSignal:
    def test_piecewise_constant(self):
        spec = dyn.ReferenceSignalSpec(
            channels=(
                {"kind": "piecewise_constant", "times": [0.0, 1.0, 2.0], "values": [1.0, -1.0, 0.5]},
            )
        )
        assert spec.evaluate(0.5)[0] == 1.0
        assert spec.evaluate(1.0)[0] == -1.0
        assert spec.evaluate(10.0)[0] == 0.5

    def test_exp_decay(self):
        spec = dyn.ReferenceSignalSpec(
            channels=({"kind": "exp_decay", "a": 1.0, "b": 1.0, "c": -1.0},)
        )
        assert spec.evaluate(0.0)[0] == pytest.approx(0.0)
        assert spec.evaluate(30.0)[0] == pytest.approx(-1.0)
