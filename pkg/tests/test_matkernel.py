import numpy as np
import pytest

from switchmrac import matkernel as mk
from switchmrac.errors import AsymmetricMatrixError, DimensionError, SingularMatrixError


class TestDet:
    def test_identity(self):
        assert mk.det(np.eye(3)) == 1.0

    def test_upper_triangular_2x2(self):
        b0 = np.array([[0.8, 0.8], [0.0, 0.8]])
        assert mk.det(b0) == pytest.approx(0.64, abs=1e-15)
        assert mk.det(b0) == pytest.approx(np.linalg.det(b0), rel=1e-12)

    def test_zero_matrix_large(self):
        assert mk.det(np.zeros((7, 7))) == 0.0

    def test_non_square_rejected(self):
        with pytest.raises(DimensionError):
            mk.det(np.zeros((2, 3)))

    def test_matches_lapack_across_dims(self, rng):
        for k in range(1, 9):
            for _ in range(25):
                a = rng.normal(size=(k, k))
                assert mk.det(a) == pytest.approx(np.linalg.det(a), rel=1e-9, abs=1e-12)


class TestAdjugate:
    def test_identity(self):
        np.testing.assert_array_equal(mk.adjugate(np.eye(4)), np.eye(4))

    def test_2x2_closed_form(self):
        adj = mk.adjugate(np.array([[1.0, 2.0], [3.0, 4.0]]))
        np.testing.assert_allclose(adj, [[4.0, -2.0], [-3.0, 1.0]])

    def test_zero_2x2(self):
        np.testing.assert_array_equal(mk.adjugate(np.zeros((2, 2))), np.zeros((2, 2)))

    def test_adj_of_1x1_is_one(self):
        np.testing.assert_array_equal(mk.adjugate([[3.5]]), [[1.0]])

    def test_defining_identity(self, rng):
        # adj(M) M = M adj(M) = det(M) I across dims 1..8
        for k in range(1, 9):
            for _ in range(20):
                a = rng.normal(size=(k, k))
                d, adj = mk.det_adj(a)
                scale = max(abs(d), np.abs(adj).max() * np.abs(a).max(), 1e-30)
                np.testing.assert_allclose(adj @ a, d * np.eye(k), atol=1e-9 * scale)
                np.testing.assert_allclose(a @ adj, d * np.eye(k), atol=1e-9 * scale)

    def test_cofactor_fallback_on_graded_matrix(self, rng):
        # strongly graded spectrum forces the cofactor path; identity must hold
        q, _ = np.linalg.qr(rng.normal(size=(6, 6)))
        a = (q * 10.0 ** np.arange(-12, -6)) @ q.T
        d, adj = mk.det_adj(a)
        resid = adj @ a - d * np.eye(6)
        assert np.abs(resid).max() <= 1e-9 * max(abs(d), 1e-300)


class TestInvert:
    def test_identity(self):
        np.testing.assert_allclose(mk.invert(np.eye(2)), np.eye(2))

    def test_b0_inverse(self):
        b0 = np.array([[0.8, 0.8], [0.0, 0.8]])
        np.testing.assert_allclose(
            mk.invert(b0), [[1.25, -1.25], [0.0, 1.25]], rtol=1e-12
        )

    def test_zero_matrix_singular(self):
        with pytest.raises(SingularMatrixError):
            mk.invert(np.zeros((3, 3)))

    def test_residual_bound(self, rng):
        for _ in range(50):
            a = rng.normal(size=(5, 5)) + 2.0 * np.eye(5)
            np.testing.assert_allclose(a @ mk.invert(a), np.eye(5), atol=1e-10)

    def test_singular_error_carries_det(self):
        with pytest.raises(SingularMatrixError) as err:
            mk.invert(np.array([[1.0, 2.0], [2.0, 4.0]]))
        assert abs(err.value.det_value) < 1e-12


class TestSymEig:
    def test_diagonal(self):
        lo, hi = mk.sym_eig_extremes(np.diag([1.0, 4.0]))
        assert (lo, hi) == (1.0, 4.0)

    def test_rank_one_outer_product(self):
        v = np.array([1.0, 2.0, 2.0])  # |v|^2 = 9
        lo, hi = mk.sym_eig_extremes(np.outer(v, v))
        assert hi == pytest.approx(9.0, abs=1e-10)
        assert lo == pytest.approx(0.0, abs=1e-10)

    def test_asymmetric_rejected(self):
        with pytest.raises(AsymmetricMatrixError):
            mk.sym_eig_extremes(np.array([[0.0, 1.0], [0.0, 0.0]]))

    def test_matches_charpoly_roots_small_dims(self, rng):
        # cross-check against characteristic-polynomial roots on dims 2 and 3
        for k in (2, 3):
            for _ in range(20):
                a = rng.normal(size=(k, k))
                s = 0.5 * (a + a.T)
                if k == 2:
                    tr, dt = np.trace(s), mk.det(s)
                    disc = np.sqrt(tr * tr / 4.0 - dt)
                    roots = np.array([tr / 2.0 - disc, tr / 2.0 + disc])
                else:
                    coeffs = np.poly(s)
                    roots = np.sort(np.roots(coeffs).real)
                lo, hi = mk.sym_eig_extremes(s)
                assert lo == pytest.approx(np.min(roots), rel=1e-8, abs=1e-8)
                assert hi == pytest.approx(np.max(roots), rel=1e-8, abs=1e-8)

    def test_psd_random_vs_lapack(self, rng):
        for _ in range(20):
            g = rng.normal(size=(7, 7))
            s = g @ g.T
            lo, hi = mk.sym_eig_extremes(s)
            w = np.linalg.eigvalsh(s)
            assert lo == pytest.approx(w[0], rel=1e-8, abs=1e-8)
            assert hi == pytest.approx(w[-1], rel=1e-8, abs=1e-8)


class TestJacobiEigh:
    def test_reconstruction(self, rng):
        for k in (2, 5, 7):
            a = rng.normal(size=(k, k))
            s = 0.5 * (a + a.T)
            eig, v = mk.jacobi_eigh(s)
            np.testing.assert_allclose(v @ np.diag(eig) @ v.T, s, atol=1e-12 * max(1, np.abs(s).max()))
            np.testing.assert_allclose(v @ v.T, np.eye(k), atol=1e-13)

    def test_graded_psd_relative_accuracy(self, rng):
        # tiny eigenvalues of graded PSD matrices keep relative accuracy;
        # assembling S = Q diag(lam) Q^T itself rounds at ~1e-16 |S|, which
        # bounds what any solver can recover for the smallest eigenvalue, so
        # the oracle is LAPACK on the same assembled matrix
        q, _ = np.linalg.qr(rng.normal(size=(7, 7)))
        for span in (np.arange(-8.0, 6.0, 2.0), np.arange(-14.0, 0.0, 2.0)):
            lams = 10.0 ** span
            s = (q * lams) @ q.T
            eig, _ = mk.jacobi_eigh(s)
            np.testing.assert_allclose(
                np.sort(eig), np.sort(np.linalg.eigvalsh(s)), rtol=1e-3
            )
            np.testing.assert_allclose(np.sort(eig), lams, rtol=1e-4)


class TestPsdDetAdj:
    def test_matches_general_path_when_well_conditioned(self, rng):
        for _ in range(20):
            g = rng.normal(size=(5, 5))
            s = g @ g.T + np.eye(5)
            d1, adj1 = mk.det_adj(s)
            d2, adj2, ratio = mk.psd_det_adj(s)
            assert d2 == pytest.approx(d1, rel=1e-10)
            np.testing.assert_allclose(adj2, adj1, rtol=1e-8, atol=1e-12 * abs(d1))
            assert 0.0 < ratio <= 1.0

    def test_defining_identity_deep_grading(self, rng):
        # det underflow-prone grading: adj must still satisfy adj(S) S = det I
        q, _ = np.linalg.qr(rng.normal(size=(7, 7)))
        lams = 10.0 ** np.linspace(-12, -2, 7)
        s = (q * lams) @ q.T
        d, adj, ratio = mk.psd_det_adj(s)
        assert d == pytest.approx(np.prod(lams), rel=1e-8)
        np.testing.assert_allclose(adj @ s, d * np.eye(7), atol=1e-7 * abs(d) / lams.min() * lams.max())
        assert ratio == pytest.approx(1e-10, rel=1e-6)

    def test_scalar(self):
        d, adj, ratio = mk.psd_det_adj([[4.0]])
        assert d == 4.0 and adj[0, 0] == 1.0 and ratio == 1.0


class TestDetProperties:
    def test_det_gram_square_identity(self, rng):
        # det(M^T M) = det(M)^2
        for k in range(1, 9):
            for _ in range(15):
                a = rng.normal(size=(k, k))
                d = mk.det(a)
                assert mk.det(a.T @ a) == pytest.approx(d * d, rel=1e-9, abs=1e-12)
