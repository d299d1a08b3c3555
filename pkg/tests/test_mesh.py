"""Coarse channel mesh construction, refinement, and boundary snapping."""

import numpy as np
import pytest

from fsi_gcsi import mesh as msh


def solid_cell_area(mesh):
    """Sum of quad areas over solid-tagged cells (shoelace per cell)."""
    x = mesh.vertices[mesh.cells]
    area = 0.5 * np.abs(
        (x[:, 0, 0] - x[:, 2, 0]) * (x[:, 1, 1] - x[:, 3, 1])
        - (x[:, 1, 0] - x[:, 3, 0]) * (x[:, 0, 1] - x[:, 2, 1]))
    return float(area[mesh.subdomain == msh.SOLID].sum())


class TestGeometryParams:
    def test_defaults_describe_standard_channel(self, geometry):
        g = geometry
        assert (g.L, g.H) == (2.5, 0.41)
        assert (g.l, g.h) == (0.35, 0.02)
        assert (g.cx, g.cy, g.r) == (0.2, 0.2, 0.05)
        g.validate()

    def test_beam_tip_location(self, geometry):
        assert geometry.beam_tip == (0.6, 0.2)

    def test_solid_area_is_rectangle_minus_cap(self, geometry):
        # h*(r+l) minus the circular segment clipped by the beam strip
        half = 0.01
        cap = half * np.sqrt(0.05**2 - half**2) + 0.05**2 * np.arcsin(half / 0.05)
        assert geometry.solid_area() == pytest.approx(0.02 * 0.4 - cap, rel=1e-12)

    @pytest.mark.parametrize("bad", [
        dict(h=0.2),            # beam thicker than the cylinder
        dict(cx=0.04),          # cylinder touches the inflow wall
        dict(cy=0.38),          # cylinder touches the channel wall
        dict(l=3.0),            # beam tip outside the channel
        dict(r=-0.05),
    ])
    def test_invalid_configurations_rejected(self, bad):
        with pytest.raises(msh.MeshError):
            msh.GeometryParams(**bad).validate()


class TestCoarseChannelMesh:
    def test_mesh_is_consistent(self, geometry):
        mesh = msh.build_turek_coarse(geometry)
        mesh.check_orientation()
        assert mesh.num_cells > 0
        assert set(np.unique(mesh.subdomain)) == {msh.FLUID, msh.SOLID}
        # every tag present on the boundary
        for tag in (msh.INFLOW, msh.OUTFLOW, msh.WALLS, msh.CYLINDER):
            assert np.count_nonzero(mesh.boundary_tags == tag) > 0

    def test_solid_cells_cover_beam_area(self, geometry):
        """Polygonal solid region approximates beam area at coarse resolution."""
        mesh = msh.build_turek_coarse(geometry)
        area = solid_cell_area(mesh)
        # the coarse boundary polygon replaces the circular arc; a few
        # percent of the (already small) cap correction is the error scale
        assert area == pytest.approx(geometry.solid_area(), rel=0.02)

    def test_solid_area_converges_under_refinement(self, geometry):
        coarse = msh.build_turek_coarse(geometry)
        errs = []
        for j in (0, 2):
            hier = msh.build_hierarchy(coarse, j, geometry=geometry)
            errs.append(abs(solid_cell_area(hier.fine) - geometry.solid_area()))
        assert errs[1] < 0.15 * errs[0]

    def test_degenerate_rect_is_single_subdomain(self):
        mesh = msh.build_rect(3, 2, Lx=1.5)
        assert mesh.num_cells == 6
        assert np.all(mesh.subdomain == msh.FLUID)
        assert len(mesh.interface_facets) == 0
        # x = 0 inflow, x = Lx outflow, y = 0 and y = Ly walls
        assert len(mesh.boundary_vertex_set(msh.INFLOW)) == 3
        assert len(mesh.boundary_vertex_set(msh.OUTFLOW)) == 3
        assert len(mesh.boundary_vertex_set(msh.WALLS)) == 8

    def test_rect_solid_predicate_tags_cells_by_center(self):
        mesh = msh.build_rect(4, 4, solid_predicate=lambda x, y: x > 0.5)
        assert np.count_nonzero(mesh.subdomain == msh.SOLID) == 8
        assert len(mesh.interface_facets) == 4


class TestRefinement:
    def test_unit_square_once(self):
        hier = msh.build_hierarchy(msh.build_unit_square(1), 1)
        assert hier.fine.num_cells == 4
        assert hier.fine.num_vertices == 9

    def test_cell_count_scales_by_four_per_level(self, geometry):
        coarse = msh.build_turek_coarse(geometry)
        hier = msh.build_hierarchy(coarse, 2, geometry=geometry)
        assert hier.fine.num_cells == 16 * coarse.num_cells

    def test_subdomain_and_tags_inherited(self, turek_hier1):
        coarse, fine = turek_hier1.levels[0], turek_hier1.levels[1]
        assert np.array_equal(coarse.subdomain[turek_hier1.cell_parent[0]],
                              fine.subdomain)
        for tag in (msh.INFLOW, msh.OUTFLOW, msh.WALLS, msh.CYLINDER):
            n_coarse = np.count_nonzero(coarse.boundary_tags == tag)
            n_fine = np.count_nonzero(fine.boundary_tags == tag)
            assert n_fine == 2 * n_coarse

    def test_cylinder_vertices_snap_to_circle(self, geometry):
        hier = msh.build_turek_hierarchy(geometry, 3)
        mesh = hier.fine
        ring = mesh.boundary_vertex_set(msh.CYLINDER)
        rad = np.linalg.norm(mesh.vertices[ring] - [geometry.cx, geometry.cy],
                             axis=1)
        assert np.abs(rad - geometry.r).max() < 1e-14
        mesh.check_orientation()

    def test_orientation_check_rejects_inverted_cell(self):
        mesh = msh.build_rect(2, 2)
        center = int(np.argmin(np.linalg.norm(mesh.vertices - 0.5, axis=1)))
        mesh.vertices[center] = [1.2, 1.2]  # drag outside its cell patch
        with pytest.raises(msh.MeshError):
            mesh.check_orientation()


class TestCellDiameters:
    def test_unit_square_cell(self):
        mesh = msh.build_unit_square(1)
        assert mesh.cell_diameters() == pytest.approx([np.sqrt(2.0)])

    def test_axis_aligned_rectangle(self):
        mesh = msh.build_rect(1, 1, Lx=3.0, Ly=4.0)
        assert mesh.cell_diameters() == pytest.approx([5.0])

    def test_snapped_cells_all_positive(self, turek_hier1):
        d = turek_hier1.fine.cell_diameters()
        assert d.min() > 0.0
        assert d.max() < 0.2

    def test_displacement_argument_changes_lengths(self):
        mesh = msh.build_unit_square(1)
        disp = 0.5 * mesh.vertices  # uniform 1.5x dilation
        assert mesh.cell_diameters(disp) == pytest.approx([1.5 * np.sqrt(2.0)])
