"""Matrix-free operator actions against assembled oracles, geometry updates,
quadrature functionals, and grid transfers."""

import numpy as np
import pytest
import scipy.sparse as sp

from fsi_gcsi import forms, materials as mat, mesh as msh, multigrid as mg
from fsi_gcsi import operators as ops, spaces as spc, transfer as tra


@pytest.fixture(scope="module")
def stage_specs(channel_ctx1):
    """P- and C-mode stage problems on the refined channel, realistic data."""
    rng = np.random.default_rng(20260301)
    dm = channel_ctx1.fine
    fluid = mat.FluidParams(1.0, 1e3)
    solid = mat.SolidParams(0.5e6, 1e4)
    vcirc = rng.standard_normal(dm.nv)
    p = mg.build_level_specs(channel_ctx1, "P", 2 / 3, 0.004, (-4 / 3, 1 / 3),
                             fluid, solid, u_sharp=None, vcirc=None)[-1]
    c = mg.build_level_specs(channel_ctx1, "C", 2 / 3, 0.004, (-4 / 3, 1 / 3),
                             fluid, solid, u_sharp=None, vcirc=vcirc)[-1]
    return {"P": p, "C": c}


class TestOperatorAction:
    def test_zero_maps_to_zero(self, stage_specs):
        spec = stage_specs["P"]
        y = spec.apply(np.zeros(spec.dofmap.nblock))
        assert np.all(y == 0.0)

    @pytest.mark.parametrize("mode", ["P", "C"])
    def test_matches_assembled_matrix(self, stage_specs, mode):
        spec = stage_specs[mode]
        A = spec.assemble()
        rng = np.random.default_rng(7)
        for _ in range(3):
            x = rng.standard_normal(spec.dofmap.nblock)
            y = spec.apply(x)
            ref = A @ x
            assert np.linalg.norm(y - ref) <= 1e-12 * np.linalg.norm(ref)

    @pytest.mark.parametrize("mode", ["P", "C"])
    def test_compiled_path_matches_quadrature_path(self, stage_specs, mode):
        spec = stage_specs[mode]
        com = spec.compile()
        rng = np.random.default_rng(8)
        x = rng.standard_normal(spec.dofmap.nblock)
        a = spec.apply(x)
        b = com.apply(x)
        assert np.linalg.norm(a - b) <= 1e-12 * np.linalg.norm(a)

    def test_constant_pressure_orthogonal_to_interior_fields(self, square_ctx1):
        """B^T(const) pairs to zero with anything vanishing on the boundary."""
        spec = mg.build_level_specs(
            square_ctx1, "P", 1.0, 1.0, (-1.0,),
            mat.FluidParams(1.0, 1.0), mat.SolidParams(1.0, 1.0),
            u_sharp=None, vcirc=None)[-1]
        dm = square_ctx1.fine
        x = np.zeros(dm.nblock)
        x[dm.nv:] = 2.5
        y = spec.apply_raw(x)[:dm.nv]
        rng = np.random.default_rng(9)
        for _ in range(5):
            z = rng.standard_normal(dm.nv)
            z[spec.constrained_v] = 0.0
            assert abs(z @ y) < 1e-12 * np.linalg.norm(z) * np.linalg.norm(y)

    def test_saddle_block_structure(self, square_geo_spec):
        M = square_geo_spec.assemble(constrained=False).toarray()
        nv = square_geo_spec.dofmap.nv
        assert np.abs(M[nv:, nv:]).max() == 0.0
        assert np.abs(M[:nv, nv:] - M[nv:, :nv].T).max() < 1e-14

    def test_assembly_guard_rejects_large_meshes(self, stage_specs):
        with pytest.raises(ValueError):
            stage_specs["P"].assemble(guard=100)


@pytest.fixture(scope="module")
def square_geo_spec():
    dm = spc.build_dofmap(msh.build_rect(3, 3))
    geo = ops.update_geometry(ops.build_static_cache(dm), None)
    nc, nq = geo.jxw.shape
    return forms.build_stage_spec(
        geo, "P", 1.0, 1.0, (-1.0,), rho_q=np.ones((nc, nq)),
        eta_q=np.ones((nc, nq)), vcirc_coeffs=None, vstar_coeffs=None,
        stabilize=False)


class TestGeometryUpdate:
    def test_identity_map(self, channel_ctx1):
        static = channel_ctx1.statics[-1]
        geo = ops.update_geometry(static, None)
        assert np.array_equal(geo.jxw, static.jxw_ref)
        assert np.allclose(geo.detF, 1.0)

    def test_translation_preserves_jacobians(self, channel_ctx1):
        static = channel_ctx1.statics[-1]
        dm = static.dofmap
        u = np.concatenate([np.full(dm.n2, 0.3), np.full(dm.n2, -0.1)])
        geo = ops.update_geometry(static, u)
        assert np.allclose(geo.jxw, static.jxw_ref, rtol=1e-13)
        ref = ops.update_geometry(static, None)
        assert np.allclose(geo.x, ref.x + np.array([0.3, -0.1]), atol=1e-13)

    def test_linear_shear_gradient_transform(self):
        dm = spc.build_dofmap(msh.build_unit_square(1))
        static = ops.build_static_cache(dm)
        alpha = 0.4
        u = np.concatenate([alpha * dm.q2_coords[:, 1], np.zeros(dm.n2)])
        geo = ops.update_geometry(static, u)
        assert np.allclose(geo.detF, 1.0, atol=1e-14)
        # a field linear in reference x has current-config gradient (1, -alpha)
        f = np.concatenate([dm.q2_coords[:, 0], np.zeros(dm.n2)])
        _, grads = ops.eval_vector_field(geo, f)
        assert np.allclose(grads[..., 0, 0], 1.0, atol=1e-13)
        assert np.allclose(grads[..., 0, 1], -alpha, atol=1e-13)

    def test_inverted_configuration_raises(self):
        dm = spc.build_dofmap(msh.build_unit_square(1))
        static = ops.build_static_cache(dm)
        u = np.concatenate([-2.0 * dm.q2_coords[:, 0], np.zeros(dm.n2)])
        with pytest.raises(msh.MeshTangledError):
            ops.update_geometry(static, u)


class TestFunctionals:
    def test_reference_solid_volume_matches_analytic(self, channel_ctx1, geometry):
        geo = ops.update_geometry(channel_ctx1.statics[-1], None)
        vol = ops.integrate_functional("reference_solid_volume", geo)
        assert vol == pytest.approx(geometry.solid_area(), rel=5e-3)

    def test_divergence_free_integral(self, square_geo_spec):
        geo = square_geo_spec.geo
        dm = geo.dofmap
        v = np.concatenate([dm.q2_coords[:, 0], -dm.q2_coords[:, 1]])
        assert abs(ops.integrate_functional("div", geo, v)) < 1e-13

    def test_interpolated_quadratic_has_zero_error(self, square_geo_spec):
        geo = square_geo_spec.geo
        dm = geo.dofmap
        x, y = dm.q2_coords[:, 0], dm.q2_coords[:, 1]
        v = np.concatenate([x * x, x * y])
        err = ops.integrate_functional(
            "l2_error_velocity", geo, v, exact=lambda a, b: (a * a, a * b))
        assert err < 1e-13

    def test_pressure_error_detects_offset(self, square_geo_spec):
        geo = square_geo_spec.geo
        p = np.zeros(geo.dofmap.n1)
        err = ops.integrate_functional("l2_error_pressure", geo, p,
                                       exact=lambda a, b: 2.0 + 0.0 * a)
        assert err == pytest.approx(2.0, rel=1e-12)

    def test_unknown_kind_rejected(self, square_geo_spec):
        with pytest.raises(ValueError):
            ops.integrate_functional("mass", square_geo_spec.geo)


class TestFacetRhs:
    def test_constant_traction_weights_sum_to_edge_load(self, channel_ctx1):
        dm = channel_ctx1.fine
        mesh = dm.mesh
        facets = mesh.boundary_facets[mesh.boundary_tags == msh.INFLOW]
        g = ops.facet_velocity_rhs(dm, facets,
                                   lambda x, y: (3.0 + 0.0 * x, 0.0 * y))
        # pairing with the constant field (1, 0) integrates the traction
        assert g[:dm.n2].sum() == pytest.approx(3.0 * 0.41, rel=1e-12)
        assert abs(g[dm.n2:].sum()) < 1e-14
        outside = np.setdiff1d(np.arange(dm.n2),
                               dm.boundary_nodes[msh.INFLOW])
        assert np.abs(g[outside]).max() == 0.0

    def test_empty_facet_list(self, channel_ctx1):
        dm = channel_ctx1.fine
        g = ops.facet_velocity_rhs(dm, np.zeros((0, 2), dtype=np.int64),
                                   lambda x, y: (x, y))
        assert np.all(g == 0.0)


class TestTransfers:
    def test_constant_field_prolongs_exactly_on_channel(self, channel_ctx1):
        pair = channel_ctx1.transfers[0]
        coarse, fine = channel_ctx1.dofmaps
        xc = np.concatenate([np.full(coarse.n2, 2.0), np.full(coarse.n2, -1.0)])
        xf = pair.prolong_velocity(xc)
        assert np.allclose(xf[:fine.n2], 2.0, atol=1e-13)
        assert np.allclose(xf[fine.n2:], -1.0, atol=1e-13)

    def test_linear_fields_prolong_exactly_on_square(self, square_ctx1):
        # no boundary snapping here, so coarse linears are fine linears
        pair = square_ctx1.transfers[0]
        coarse, fine = square_ctx1.dofmaps
        for field in (lambda x, y: 1.0 + 0.0 * x, lambda x, y: 2 * x - 3 * y):
            xc = np.concatenate([field(*coarse.q2_coords.T),
                                 np.zeros(coarse.n2)])
            xf = np.concatenate([field(*fine.q2_coords.T), np.zeros(fine.n2)])
            assert np.allclose(pair.prolong_velocity(xc), xf, atol=1e-12)

    def test_linear_pressure_prolongs_exactly_on_square(self, square_ctx1):
        pair = square_ctx1.transfers[0]
        coarse, fine = square_ctx1.dofmaps
        lin = lambda x, y: 0.5 - 2.0 * x + y
        xc = np.concatenate([np.zeros(coarse.nv),
                             lin(*coarse.q2_coords[:coarse.n1].T)])
        xf = pair.prolong_block(xc)
        exact = lin(*fine.q2_coords[:fine.n1].T)
        assert np.allclose(xf[fine.nv:], exact, atol=1e-13)

    def test_restriction_is_prolongation_transpose(self, channel_ctx1):
        pair = channel_ctx1.transfers[0]
        coarse, fine = channel_ctx1.dofmaps
        rng = np.random.default_rng(13)
        for _ in range(3):
            xc = rng.standard_normal(coarse.nblock)
            yf = rng.standard_normal(fine.nblock)
            lhs = pair.prolong_block(xc) @ yf
            rhs = xc @ pair.restrict_block(yf)
            assert lhs == pytest.approx(rhs, rel=1e-12)
