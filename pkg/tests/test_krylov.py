"""Krylov kernels against dense linear-algebra oracles."""

import numpy as np
import pytest
import scipy.linalg as la
import scipy.sparse as sp

from fsi_gcsi import krylov as kry


def tridiag(n, lo=-1.0, di=2.0, up=-1.0):
    return sp.diags([np.full(n - 1, lo), np.full(n, di), np.full(n - 1, up)],
                    (-1, 0, 1)).tocsr()


class TestChebyshev:
    def test_identity_operator_returns_rhs(self):
        rng = np.random.default_rng(0)
        b = rng.standard_normal(12)
        for k in (1, 2, 5):
            x = kry.chebyshev_apply(lambda v: v, np.ones(12), k, b, 1.0, 1.0)
            assert np.array_equal(x, b)

    def test_zero_rhs_returns_zero(self):
        T = tridiag(8)
        x = kry.chebyshev_apply(lambda v: T @ v, np.full(8, 0.5), 3,
                                np.zeros(8), 0.2, 2.2)
        assert np.all(x == 0.0)

    def test_reduction_beats_minmax_bound_on_smoothing_band(self):
        """Residual reduction within the target interval obeys the
        Chebyshev min-max bound (dense eigendecomposition oracle)."""
        n, k = 40, 4
        T = tridiag(n)
        diag_inv = np.full(n, 0.5)
        lam, V = la.eigh(0.5 * T.toarray())  # diag-preconditioned spectrum
        lo, hi = kry.smoothing_interval(lambda v: T @ v, diag_inv)
        sel = (lam >= lo) & (lam <= hi)
        assert np.count_nonzero(sel) > 10
        b = (V[:, sel] * np.ones(sel.sum())).sum(axis=1)
        x = kry.chebyshev_apply(lambda v: T @ v, diag_inv, k, b, lo, hi)
        # error iteration matrix is p_k(D^-1 T); bound max |p_k| on [lo, hi]
        r = diag_inv * (b - T @ x)
        sigma1 = (hi + lo) / (hi - lo)
        bound = 1.0 / np.cosh(k * np.arccosh(sigma1))
        assert np.linalg.norm(r) <= (bound + 1e-12) * np.linalg.norm(diag_inv * b)

    def test_elliptic_variant_matches_real_interval_at_zero_extent(self):
        T = tridiag(9)
        b = np.arange(1.0, 10.0)
        a = kry.chebyshev_apply(lambda v: T @ v, np.full(9, 0.5), 4, b, 0.3, 2.1)
        c = kry.chebyshev_apply(lambda v: T @ v, np.full(9, 0.5), 4, b, 0.3, 2.1,
                                imag_extent=0.0)
        assert np.array_equal(a, c)

    def test_elliptic_variant_converges_on_rotated_spectrum(self):
        # eigenvalues 1 +- 0.6i and 2: a real-interval design has no
        # guarantee here; the ellipse-aware recurrence must still contract
        A = la.block_diag(np.array([[1.0, 0.6], [-0.6, 1.0]]), [[2.0]])
        b = np.array([1.0, 2.0, -1.0])
        x = kry.chebyshev_apply(lambda v: A @ v, np.ones(3), 25, b,
                                0.4, 2.6, imag_extent=0.9)
        r_ell = np.linalg.norm(b - A @ x)
        x = kry.chebyshev_apply(lambda v: A @ v, np.ones(3), 25, b, 0.4, 2.6)
        r_flat = np.linalg.norm(b - A @ x)
        assert r_ell < 1e-2 * np.linalg.norm(b)
        assert r_ell < r_flat


class TestSpectrumEstimates:
    def test_identity_estimate(self):
        lo, hi = kry.estimate_eigen_range(lambda v: v, np.ones(30))
        assert hi == pytest.approx(1.0, rel=0.05)
        assert lo == pytest.approx(hi / 8.0)

    def test_tridiagonal_estimate_close_to_true_maximum(self):
        n = 60
        T = tridiag(n)
        true = np.linalg.eigvalsh(0.5 * T.toarray()).max()
        _, hi = kry.estimate_eigen_range(lambda v: T @ v, np.full(n, 0.5))
        assert hi == pytest.approx(true, rel=0.10)

    def test_estimate_is_deterministic(self):
        T = tridiag(25)
        f = lambda: kry.estimate_eigen_range(lambda v: T @ v, np.full(25, 0.5))
        assert f() == f()

    def test_arnoldi_recovers_small_nonsymmetric_spectrum(self):
        blocks = la.block_diag(np.array([[1.0, 2.0], [-2.0, 1.0]]),
                               np.array([[3.0, 0.0], [0.0, 0.5]]))
        rng = np.random.default_rng(4)
        Q, _ = np.linalg.qr(rng.standard_normal((4, 4)))
        A = Q @ blocks @ Q.T
        ritz = kry.arnoldi_spectrum(lambda v: A @ v, np.ones(4), steps=10)
        assert np.allclose(np.sort_complex(ritz),
                           np.sort_complex(np.linalg.eigvals(blocks)), atol=1e-8)

    def test_ellipse_interval_reports_imaginary_extent(self):
        blocks = la.block_diag(np.array([[1.0, 2.0], [-2.0, 1.0]]),
                               np.array([[3.0, 0.0], [0.0, 0.5]]))
        (lo, hi), b = kry.ellipse_interval(lambda v: blocks @ v, np.ones(4))
        assert hi == pytest.approx(1.1 * 3.0, rel=1e-6)
        assert lo == pytest.approx(3.0 / 8.0, rel=1e-6)
        assert b == pytest.approx(1.5 * 2.0, rel=1e-6)

    def test_ellipse_interval_flags_real_spectrum(self):
        T = tridiag(20)
        (_, _), b = kry.ellipse_interval(lambda v: T @ v, np.full(20, 0.5))
        assert b == 0.0


class TestFgmres:
    def test_identity_converges_in_one_iteration(self):
        b = np.arange(1.0, 6.0)
        res = kry.fgmres(lambda v: v, lambda v: v, b)
        assert res.converged
        assert res.iterations == 1
        assert np.allclose(res.x, b)

    def test_exact_preconditioner_converges_in_one_iteration(self):
        rng = np.random.default_rng(21)
        n = 15
        M = rng.standard_normal((n, n))
        A = M @ M.T + n * np.eye(n)
        Ainv = np.linalg.inv(A)
        b = rng.standard_normal(n)
        res = kry.fgmres(lambda v: A @ v, lambda v: Ainv @ v, b,
                         kry.KrylovConfig(tol=1e-10 * np.linalg.norm(b)))
        assert res.converged
        assert res.iterations == 1
        assert np.allclose(res.x, Ainv @ b, atol=1e-9)

    def test_restart_still_converges(self):
        n = 50
        T = tridiag(n)
        b = np.ones(n)
        res = kry.fgmres(lambda v: T @ v, None, b,
                         kry.KrylovConfig(tol=1e-10, maxiter=400, restart=5))
        assert res.converged
        assert np.linalg.norm(T @ res.x - b) < 2e-10

    def test_nonconvergence_reported_not_raised(self):
        n = 50
        T = tridiag(n)
        res = kry.fgmres(lambda v: T @ v, None, np.ones(n),
                         kry.KrylovConfig(tol=1e-14, maxiter=3))
        assert not res.converged
        assert res.iterations == 3

    def test_initial_guess_respected(self):
        T = tridiag(12)
        xstar = np.linspace(0.0, 1.0, 12)
        b = T @ xstar
        res = kry.fgmres(lambda v: T @ v, None, b,
                         kry.KrylovConfig(tol=1e-12), x0=xstar)
        assert res.iterations == 0 or np.allclose(res.x, xstar, atol=1e-10)


class TestInnerSolvers:
    def test_cg_diagonal_system_one_iteration(self):
        d = np.array([1.0, 4.0, 9.0, 16.0])
        b = np.array([1.0, 2.0, 3.0, 4.0])
        res = kry.cg(lambda v: d * v, lambda v: v / d, b,
                     kry.KrylovConfig(tol=1e-12))
        assert res.converged
        assert res.iterations == 1
        assert np.allclose(res.x, b / d, atol=1e-13)

    def test_minres_matches_direct_solve_on_saddle_toy(self):
        A = np.array([[2.0, 0.0, 1.0],
                      [0.0, 1.0, 1.0],
                      [1.0, 1.0, 0.0]])  # symmetric indefinite
        b = np.array([1.0, -1.0, 0.5])
        res = kry.minres(lambda v: A @ v, None, b,
                         kry.KrylovConfig(tol=1e-13, maxiter=50))
        assert res.converged
        assert np.allclose(res.x, np.linalg.solve(A, b), atol=1e-11)

    def test_bicgstab_on_upwind_convection_matrix(self):
        n = 40
        A = sp.diags([np.full(n - 1, -1.0), np.full(n, 1.001)], (-1, 0)).tocsr()
        b = np.ones(n)
        res = kry.bicgstab(lambda v: A @ v, None, b,
                           kry.KrylovConfig(tol=1e-10, maxiter=200))
        assert res.converged
        assert np.linalg.norm(A @ res.x - b) < 1e-8
        # loose envelope: no iterate should blow up past the start by much
        assert res.iterations < n

    def test_config_validation(self):
        with pytest.raises(ValueError):
            kry.KrylovConfig(tol=-1.0)
        with pytest.raises(ValueError):
            kry.KrylovConfig(tol=0.0)
