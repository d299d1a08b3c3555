"""Pseudo-elastic mesh-motion extension: stiffness profile and solves."""

import numpy as np
import pytest

from fsi_gcsi import extension as ext
from fsi_gcsi import krylov as kry


@pytest.fixture(scope="module")
def problem(channel_ctx1):
    return ext.ExtensionProblem(channel_ctx1)


class TestMeshStiffness:
    def test_value_at_tracking_point(self):
        assert ext.mesh_stiffness(0.6, 0.2) == 51.0

    def test_far_field_is_one(self):
        # 50 exp(-800 r^2) underflows well below eps for r >~ 0.2
        assert ext.mesh_stiffness(0.0, 0.0) == 1.0
        assert ext.mesh_stiffness(2.5, 0.41) == 1.0

    def test_value_at_distance_005(self):
        got = ext.mesh_stiffness(0.6 + 0.05, 0.2)
        assert got == pytest.approx(1.0 + 50.0 * np.exp(-2.0), rel=1e-14)
        assert abs(got - 7.767) < 1e-3

    def test_vectorized_and_custom_point(self):
        x = np.array([0.1, 0.6, 1.1])
        y = np.full(3, 0.2)
        vals = ext.mesh_stiffness(x, y)
        assert vals.shape == (3,)
        assert vals[1] == 51.0
        assert ext.mesh_stiffness(0.3, 0.7, point=(0.3, 0.7)) == 51.0


class TestSolveExtension:
    def test_zero_data_gives_zero_field(self, problem):
        w = problem.solve_extension(np.zeros(problem.levels[-1].op.dofmap.nv))
        assert not w.any()
        assert problem.last_iterations == 0

    def test_constant_data_reproduced(self, problem):
        nv = problem.levels[-1].op.dofmap.nv
        g = np.empty(nv)
        g[: nv // 2] = 0.3
        g[nv // 2:] = -0.7
        w = problem.solve_extension(g, tol=1e-12)
        assert np.allclose(w[: nv // 2], 0.3, atol=1e-9)
        assert np.allclose(w[nv // 2:], -0.7, atol=1e-9)

    def test_boundary_values_held_exactly(self, problem):
        cons = problem.constrained[-1]
        nv = problem.levels[-1].op.dofmap.nv
        rng = np.random.default_rng(7)
        g = rng.standard_normal(nv) * 1e-2
        w = problem.solve_extension(g, tol=1e-8)
        assert np.array_equal(w[cons], g[cons])
        assert 0 < problem.last_iterations < 60

    def test_linearity(self, problem, channel_ctx1):
        dm = channel_ctx1.fine
        x, y = dm.q2_coords[:, 0], dm.q2_coords[:, 1]
        g1 = np.concatenate([0.01 * (x - 0.2), 0.02 * x * (y - 0.2)])
        g2 = np.concatenate([0.005 * np.sin(3 * x), 0.01 * y * (0.41 - y)])
        w1 = problem.solve_extension(g1, tol=1e-13)
        w2 = problem.solve_extension(g2, tol=1e-13)
        w12 = problem.solve_extension(2.0 * g1 - 0.5 * g2, tol=1e-13)
        err = np.abs(w12 - (2.0 * w1 - 0.5 * w2)).max()
        assert err < 1e-10

    def test_interior_bounded_by_data(self, problem, channel_ctx1):
        # not a strict maximum principle for elasticity, but the extension
        # should not overshoot smooth interface data by a large factor
        dm = channel_ctx1.fine
        nv = dm.nv
        g = np.zeros(nv)
        idofs = problem.interface_dofs
        xs = np.concatenate([dm.q2_coords[:, 0]] * 2)
        g[idofs] = 0.01 * (xs[idofs] - 0.2)
        w = problem.solve_extension(g, tol=1e-10)
        ratio = np.abs(w).max() / np.abs(g[idofs]).max()
        print(f"extension overshoot ratio: {ratio:.4f}")
        assert ratio <= 1.1

    def test_stalled_solve_raises(self, problem):
        nv = problem.levels[-1].op.dofmap.nv
        g = np.zeros(nv)
        g[problem.interface_dofs] = 1.0
        with pytest.raises(kry.SolverFailure):
            problem.solve_extension(g, tol=1e-300)


class TestDomainVelocity:
    def test_zero_velocity(self, problem):
        nv = problem.levels[-1].op.dofmap.nv
        w = problem.domain_velocity(np.zeros(nv))
        assert not w.any()

    def test_solid_values_copied_verbatim(self, problem):
        nv = problem.levels[-1].op.dofmap.nv
        rng = np.random.default_rng(11)
        v = rng.standard_normal(nv)
        w = problem.domain_velocity(v, tol=1e-8)
        assert np.array_equal(w[problem.solid_dofs], v[problem.solid_dofs])

    def test_only_interface_trace_enters_fluid(self, problem):
        # fluid-interior values of v must not influence the extension
        nv = problem.levels[-1].op.dofmap.nv
        rng = np.random.default_rng(13)
        v1 = rng.standard_normal(nv)
        v2 = v1.copy()
        fluid_only = np.setdiff1d(
            np.arange(nv), np.union1d(problem.solid_dofs,
                                      problem.constrained[-1]))
        v2[fluid_only] += rng.standard_normal(fluid_only.size)
        w1 = problem.domain_velocity(v1, tol=1e-11)
        w2 = problem.domain_velocity(v2, tol=1e-11)
        assert np.allclose(w1, w2, atol=1e-9)
