import numpy as np
import pytest

from polymrf import cones
from polymrf.cones import (
    MomentBlock,
    gram_to_coeffs,
    hankel,
    is_nonneg_on_interval,
    jacobi_eigh,
    moment_cone_check,
    moment_cone_description,
    project_psd,
    sos_certificate_description,
    sos_gram_tensors,
)
from polymrf.errors import DegreeTooSmall, LengthMismatch
from polymrf.poly import Interval, Polynomial

IV = Interval(-1.0, 1.0)


def dirac_moments(x, deg):
    return x ** np.arange(deg + 1)


class TestHankel:
    def test_rank_one_dirac(self):
        H = hankel([1, 0.5, 0.25], 0, 1)
        np.testing.assert_allclose(H, [[1, 0.5], [0.5, 0.25]])

    def test_uniform_measure_offset_one(self):
        # moments of the uniform probability measure on [-1, 1]: 1, 0, 1/3, 0, 1/5
        H = hankel([1, 0, 1 / 3, 0, 1 / 5], 1, 1)
        np.testing.assert_allclose(H, [[0, 1 / 3], [1 / 3, 0]])

    def test_dirac_at_zero(self):
        np.testing.assert_allclose(hankel([1, 0, 0], 0, 1), [[1, 0], [0, 0]])

    def test_too_short(self):
        with pytest.raises(LengthMismatch):
            hankel([1, 0.5], 0, 1)


class TestMomentConeDescription:
    def test_degree_one_mean_inside(self):
        desc = moment_cone_description(1, IV)
        mats = desc.matrices(np.array([1.0, 0.3]))
        assert all(m.shape == (1, 1) for m in mats)
        vals = sorted(float(m[0, 0]) for m in mats)
        assert vals == pytest.approx([0.7, 1.3])

    def test_degree_two_outside_interval(self):
        block = MomentBlock(dirac_moments(2.0, 2), IV)
        assert not moment_cone_check(block)

    def test_two_point_mixture_feasible(self):
        y = 0.5 * (dirac_moments(-0.5, 4) + dirac_moments(0.5, 4))
        np.testing.assert_allclose(y, [1, 0, 0.25, 0, 0.0625])
        assert moment_cone_check(MomentBlock(y, IV))

    def test_degree_too_small(self):
        with pytest.raises(DegreeTooSmall):
            moment_cone_description(0, IV)


class TestMomentConeCheck:
    def test_dirac_grid(self):
        for x in np.linspace(-1, 1, 100):
            for deg in (1, 2, 3, 4, 5):
                assert moment_cone_check(MomentBlock(dirac_moments(x, deg), IV))

    def test_cauchy_schwarz_violation(self):
        assert not moment_cone_check(MomentBlock(np.array([1.0, 0, 0, 0, 1.0]), IV))

    def test_random_mixtures(self):
        rng = np.random.default_rng(0)
        for _ in range(1000):
            deg = int(rng.integers(1, 8))
            atoms = rng.integers(1, 6)
            ws = rng.dirichlet(np.ones(atoms))
            xs = rng.uniform(-1, 1, atoms)
            y = sum(w * dirac_moments(x, deg) for w, x in zip(ws, xs))
            assert moment_cone_check(MomentBlock(y, IV))

    def test_convex_combination_closure(self):
        rng = np.random.default_rng(1)
        for _ in range(100):
            deg = int(rng.integers(1, 6))
            a = sum(w * dirac_moments(x, deg) for w, x in
                    zip(rng.dirichlet(np.ones(3)), rng.uniform(-1, 1, 3)))
            b = sum(w * dirac_moments(x, deg) for w, x in
                    zip(rng.dirichlet(np.ones(3)), rng.uniform(-1, 1, 3)))
            t = rng.uniform()
            assert moment_cone_check(MomentBlock(t * a + (1 - t) * b, IV))

    def test_atom_outside_interval_fails(self):
        # mass >= 0.6 at |x| >= 1.5 forces the second moment above the zeroth,
        # which no measure on [-1, 1] can match, so every truncation fails
        rng = np.random.default_rng(2)
        for _ in range(100):
            deg = int(rng.integers(2, 8))
            x_out = rng.choice([-1, 1]) * rng.uniform(1.5, 3.0)
            m = rng.uniform(0.6, 0.95)
            y = m * dirac_moments(x_out, deg) + (1 - m) * dirac_moments(rng.uniform(-1, 1), deg)
            assert not moment_cone_check(MomentBlock(y, IV), tol=1e-10)


class TestSosCertificates:
    def test_one_minus_x_squared_witness(self):
        desc = sos_certificate_description(2, IV)
        # p = 1 - x^2 via s = 0, t = 1: variables are [coeffs; vec(S); vec(T)]
        vec = np.concatenate([[1.0, 0.0, -1.0], np.zeros(4), [1.0]])
        assert desc.nvar == 8
        assert desc.contains(vec)

    def test_negative_somewhere_is_not_nonneg(self):
        assert not is_nonneg_on_interval(Polynomial([0, 1]), IV)

    def test_shifted_square_witness_from_coefficients(self):
        # p = (x - 0.3)^2 + 0.01 = 0.1 - 0.6 x + x^2, Gram from squared vectors
        S = np.outer([-0.3, 1.0], [-0.3, 1.0]) + np.outer([0.1, 0.0], [0.1, 0.0])
        p = gram_to_coeffs(S)
        np.testing.assert_allclose(p.coeffs, [0.1, -0.6, 1.0], atol=1e-15)
        desc = sos_certificate_description(2, IV)
        vec = np.concatenate([p.coeffs, S.ravel(), [0.0]])
        assert desc.contains(vec)

    def test_gram_tensor_shapes(self):
        AS, AT = sos_gram_tensors(6, IV)   # even bound 2n = 6
        assert AS.shape == (7, 4, 4) and AT.shape == (7, 3, 3)
        AS, AT = sos_gram_tensors(7, IV)   # odd bound 2n+1 = 7
        assert AS.shape == (8, 4, 4) and AT.shape == (8, 4, 4)

    def test_odd_certificate_reconstructs_polynomial(self):
        rng = np.random.default_rng(3)
        AS, AT = sos_gram_tensors(5, IV)
        for _ in range(20):
            S = rng.standard_normal((3, 3))
            S = S @ S.T
            T = rng.standard_normal((3, 3))
            T = T @ T.T
            coeffs = np.einsum("ijk,jk->i", AS, S) + np.einsum("ijk,jk->i", AT, T)
            # (x + 1) s(x) + (1 - x) t(x) evaluated directly
            for x in rng.uniform(-1, 1, 5):
                z = x ** np.arange(3)
                direct = (x + 1) * (z @ S @ z) + (1 - x) * (z @ T @ z)
                assert np.polynomial.polynomial.polyval(x, coeffs) == pytest.approx(direct, rel=1e-12, abs=1e-12)


class TestGramToCoeffs:
    def test_identity_gram(self):
        assert gram_to_coeffs(np.eye(2)).coeffs.tolist() == [1.0, 0.0, 1.0]

    def test_zero(self):
        assert gram_to_coeffs(np.zeros((2, 2))).coeffs.tolist() == [0.0, 0.0, 0.0]

    def test_rank_one_square(self):
        v = np.array([1.0, -1.0])
        assert gram_to_coeffs(np.outer(v, v)).coeffs.tolist() == [1.0, -2.0, 1.0]

    def test_quadratic_form_identity(self):
        rng = np.random.default_rng(4)
        for _ in range(50):
            n = int(rng.integers(1, 5))
            Q = rng.standard_normal((n, n))
            Q = 0.5 * (Q + Q.T)
            p = gram_to_coeffs(Q)
            x = rng.uniform(-2, 2)
            z = x ** np.arange(n)
            assert p(x) == pytest.approx(z @ Q @ z, rel=1e-10, abs=1e-10)


class TestIsNonneg:
    def test_square(self):
        assert is_nonneg_on_interval(Polynomial([0, 0, 1]), IV)

    def test_linear(self):
        assert not is_nonneg_on_interval(Polynomial([0, 1]), IV)


class TestProjectPsd:
    def test_diagonal_clamp(self):
        np.testing.assert_allclose(project_psd(np.array([[1.0, 0.0], [0.0, -1.0]])),
                                   [[1, 0], [0, 0]], atol=1e-12)

    def test_idempotent_on_cone(self):
        rng = np.random.default_rng(5)
        M = rng.standard_normal((4, 4))
        M = M @ M.T
        np.testing.assert_allclose(project_psd(M), M, atol=1e-12)

    def test_swap_eigenvector(self):
        P = project_psd(np.array([[0.0, 1.0], [1.0, 0.0]]))
        np.testing.assert_allclose(P, [[0.5, 0.5], [0.5, 0.5]], atol=1e-12)

    def test_idempotence_and_nonexpansiveness(self):
        rng = np.random.default_rng(6)
        for _ in range(100):
            n = int(rng.integers(1, 6))
            M = rng.standard_normal((n, n))
            M = 0.5 * (M + M.T)
            N = rng.standard_normal((n, n))
            N = 0.5 * (N + N.T)
            PM, PN = project_psd(M), project_psd(N)
            assert np.linalg.norm(project_psd(PM) - PM) <= 1e-10
            assert np.linalg.norm(PM - PN) <= np.linalg.norm(M - N) + 1e-10

    def test_batched_matches_single(self):
        rng = np.random.default_rng(7)
        M = rng.standard_normal((30, 3, 3))
        M = M + M.swapaxes(-1, -2)
        batch = project_psd(M)
        for i in range(30):
            np.testing.assert_allclose(batch[i], project_psd(M[i]), atol=1e-12)


class TestJacobiEigh:
    def test_matches_numpy(self):
        rng = np.random.default_rng(8)
        M = rng.standard_normal((50, 4, 4))
        M = M + M.swapaxes(-1, -2)
        vals, vecs = jacobi_eigh(M)
        np.testing.assert_allclose(np.sort(vals, axis=-1), np.linalg.eigvalsh(M), atol=1e-10)
        recon = np.matmul(vecs * vals[..., None, :], vecs.swapaxes(-1, -2))
        np.testing.assert_allclose(recon, M, atol=1e-10)

    def test_numpy_fallback_agrees(self):
        rng = np.random.default_rng(9)
        M = rng.standard_normal((10, 3, 3))
        M = M + M.swapaxes(-1, -2)
        A = M.copy()
        V = np.broadcast_to(np.eye(3), A.shape).copy()
        nbad = cones._jacobi_sweep_numpy(A, V, 50, 1e-14)
        assert nbad == 0
        vals = np.sort(np.diagonal(A, axis1=-2, axis2=-1), axis=-1)
        np.testing.assert_allclose(vals, np.linalg.eigvalsh(M), atol=1e-10)
