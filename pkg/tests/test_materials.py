"""Constitutive evaluations and the viscosity splitting."""

import numpy as np
import pytest

from fsi_gcsi import materials as mat, mesh as msh, operators as ops
from fsi_gcsi import spaces as spc


class TestFluidStress:
    def test_hydrostatic(self):
        sig = mat.fluid_stress(np.zeros((2, 2)), 3.0, mat.FluidParams(1.0, 1.0))
        assert np.allclose(sig, -3.0 * np.eye(2))

    def test_pure_shear_rate(self):
        eps = np.diag([1.0, -1.0])
        sig = mat.fluid_stress(eps, 0.0, mat.FluidParams(1.0, 1.0))
        assert np.allclose(sig, np.diag([2.0, -2.0]))

    def test_trace_identity_on_random_input(self):
        rng = np.random.default_rng(3)
        eps = rng.standard_normal((5, 7, 2, 2))
        eps = 0.5 * (eps + np.swapaxes(eps, -1, -2))
        p = rng.standard_normal((5, 7))
        sig = mat.fluid_stress(eps, p, mat.FluidParams(0.7, 1.0))
        tr = sig[..., 0, 0] + sig[..., 1, 1]
        expect = 2 * 0.7 * (eps[..., 0, 0] + eps[..., 1, 1]) - 2 * p
        assert np.allclose(tr, expect, atol=1e-13)

    def test_parameter_validation(self):
        with pytest.raises(ValueError):
            mat.FluidParams(0.0, 1.0)
        with pytest.raises(ValueError):
            mat.SolidParams(1.0, -2.0)
        with pytest.raises(ValueError):
            mat.SolidParams(1.0, 1.0, mu1=0.5)


class TestSolidExplicitStress:
    def test_undeformed_carries_no_stress(self):
        z = np.zeros((4, 2, 2))
        assert np.allclose(mat.solid_explicit_stress(z, z, 1e6), 0.0)

    def test_diagonal_gradient_zero_history(self):
        g = np.diag([0.2, -0.1])
        sig = mat.solid_explicit_stress(g, np.zeros((2, 2)), 2.0)
        assert np.allclose(sig, -2.0 * np.diag([0.04, 0.01]), atol=1e-15)

    def test_rigid_rotation_leaves_combined_stress_zero(self):
        """Implicit viscous part + explicit remainder cancel for rotations.

        One converged backward-Euler step from rest to a rigid rotation:
        u = (R - I) X with mesh velocity w = u / tau. The history tensor
        built from d = u - gamma*tau*w vanishes, and the current-config
        parts 2 eps(u) and (grad u)^T grad u coincide at machine precision.
        """
        mesh = msh.build_rect(3, 3, solid_predicate=lambda x, y: True)
        static = ops.build_static_cache(spc.build_dofmap(mesh))
        dm = static.dofmap
        mu_s, tau = 0.5e6, 0.01
        for theta in (0.3, 0.1, 0.02):
            c, s = np.cos(theta), np.sin(theta)
            x, y = dm.q2_coords[:, 0], dm.q2_coords[:, 1]
            u = np.concatenate([(c - 1) * x - s * y, s * x + (c - 1) * y])
            geo = ops.update_geometry(static, u)
            # d = u - gamma*tau*(u/tau) = 0 for gamma = 1 (k = 1)
            sig_expl = mat.solid_explicit_stress(geo.grad_u,
                                                 np.zeros_like(geo.grad_u), mu_s)
            _, grad_w = ops.eval_vector_field(geo, u / tau)
            sig_impl = (1.0 * tau * mu_s) * (grad_w + np.swapaxes(grad_w, -1, -2))
            total = sig_impl + sig_expl
            assert np.abs(total).max() < 1e-8 * mu_s * theta**2


class TestEffectiveViscosity:
    def test_fluid_value_independent_of_scheme(self):
        assert mat.effective_viscosity(False, 2 / 3, 0.004, 1.0, 0.5e6) == 1.0
        assert mat.effective_viscosity(False, 1.0, 0.1, 1.0, 0.5e6) == 1.0

    def test_solid_value_worked_example(self):
        val = mat.effective_viscosity(True, 2.0 / 3.0, 0.01, 1.0, 0.5e6)
        assert val == pytest.approx(10000.0 / 3.0, rel=1e-14)

    def test_contrast_grows_as_tau_shrinks(self):
        vals = [mat.effective_viscosity(True, 2 / 3, t, 1.0, 0.5e6)
                for t in (1e-2, 1e-4, 1e-6)]
        assert vals[0] > vals[1] > vals[2]
        assert vals[2] == pytest.approx(2 / 3 * 1e-6 * 0.5e6)

    def test_rejects_nonpositive_gamma_tau(self):
        with pytest.raises(ValueError):
            mat.effective_viscosity(True, 0.0, 0.01, 1.0, 1.0)
        with pytest.raises(ValueError):
            mat.effective_viscosity(True, 1.0, -0.01, 1.0, 1.0)


class TestJacobianDet:
    def test_zero_gradient(self):
        assert mat.jacobian_det(np.zeros((2, 2))) == pytest.approx(1.0)

    def test_small_diagonal_stretch(self):
        g = np.diag([0.1, -0.1])
        assert mat.jacobian_det(g) == pytest.approx(0.99, rel=1e-14)

    def test_volume_preserving_shear(self):
        for s in (0.1, 1.0, 10.0):
            g = np.array([[0.0, s], [0.0, 0.0]])
            assert mat.jacobian_det(g) == pytest.approx(1.0, rel=1e-14)

    def test_batched_input(self):
        g = np.zeros((3, 5, 2, 2))
        g[..., 0, 0] = 0.5
        assert np.allclose(mat.jacobian_det(g), 1.5)
