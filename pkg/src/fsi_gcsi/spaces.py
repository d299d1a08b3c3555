"""Taylor-Hood Q2/Q1 spaces on quad meshes.

Scalar Q2 dofs are numbered [vertices | edges | cells]; Q1 dofs coincide
with vertices. Vector fields use component-major layout: dof = comp * n2
+ node. Block states concatenate velocity then pressure.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import mesh as msh

# local Q2 nodes: 4 vertices ccw, then edge midpoints (bottom, right, top,
# left) matching the cell_edges order, then the center
Q2_LOCAL = np.array([
    (-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0),
    (0.0, -1.0), (1.0, 0.0), (0.0, 1.0), (-1.0, 0.0),
    (0.0, 0.0),
])
Q1_LOCAL = np.array([(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)])


def _lag1d_q2(x):
    """Values of the 1D quadratic Lagrange basis on nodes {-1, 0, 1}."""
    x = np.asarray(x, dtype=float)
    return np.stack([0.5 * x * (x - 1.0), 1.0 - x * x, 0.5 * x * (x + 1.0)], axis=-1)


def _dlag1d_q2(x):
    x = np.asarray(x, dtype=float)
    return np.stack([x - 0.5, -2.0 * x, x + 0.5], axis=-1)


def _node_1d_index(coord):
    return {-1.0: 0, 0.0: 1, 1.0: 2}[coord]


def q2_tabulate(points: np.ndarray):
    """Q2 basis values (npts, 9) and reference gradients (npts, 9, 2)."""
    lx, ly = _lag1d_q2(points[:, 0]), _lag1d_q2(points[:, 1])
    dlx, dly = _dlag1d_q2(points[:, 0]), _dlag1d_q2(points[:, 1])
    n = np.empty((len(points), 9))
    dn = np.empty((len(points), 9, 2))
    for a, (xi, eta) in enumerate(Q2_LOCAL):
        i, j = _node_1d_index(xi), _node_1d_index(eta)
        n[:, a] = lx[:, i] * ly[:, j]
        dn[:, a, 0] = dlx[:, i] * ly[:, j]
        dn[:, a, 1] = lx[:, i] * dly[:, j]
    return n, dn


def q1_tabulate(points: np.ndarray):
    """Q1 basis values (npts, 4) and reference gradients (npts, 4, 2)."""
    x, y = points[:, 0], points[:, 1]
    n = np.empty((len(points), 4))
    dn = np.empty((len(points), 4, 2))
    for a, (xi, eta) in enumerate(Q1_LOCAL):
        n[:, a] = 0.25 * (1 + xi * x) * (1 + eta * y)
        dn[:, a, 0] = 0.25 * xi * (1 + eta * y)
        dn[:, a, 1] = 0.25 * eta * (1 + xi * x)
    return n, dn


def gauss_quadrature(npts: int = 3):
    """Tensor Gauss-Legendre rule on [-1,1]^2: points (n^2, 2), weights (n^2,)."""
    x, w = np.polynomial.legendre.leggauss(npts)
    pts = np.array([(xi, yi) for yi in x for xi in x])
    wts = np.array([wy * wx for wy in w for wx in w])
    return pts, wts


@dataclass
class DofMap:
    """Dof numbering and constraint bookkeeping for one mesh level."""

    mesh: msh.Mesh
    n2: int                 # scalar Q2 dofs
    n1: int                 # scalar Q1 dofs
    conn2: np.ndarray       # (nc, 9) scalar Q2 connectivity
    conn1: np.ndarray       # (nc, 4) scalar Q1 connectivity
    q2_coords: np.ndarray   # (n2, 2) nodal coordinates (reference mesh)
    boundary_nodes: dict    # tag -> sorted scalar Q2 node ids
    interface_nodes: np.ndarray
    solid_nodes: np.ndarray      # Q2 nodes supported on solid cells
    fluid_nodes: np.ndarray
    interface_nodes_q1: np.ndarray
    solid_nodes_q1: np.ndarray

    @property
    def nv(self) -> int:
        return 2 * self.n2

    @property
    def nblock(self) -> int:
        return 2 * self.n2 + self.n1

    def vector_dofs(self, nodes: np.ndarray) -> np.ndarray:
        """Both velocity components of the given scalar nodes."""
        return np.concatenate([nodes, self.n2 + nodes])

    def velocity_part(self, x: np.ndarray) -> np.ndarray:
        return x[: self.nv]

    def pressure_part(self, x: np.ndarray) -> np.ndarray:
        return x[self.nv:]

    def facet_nodes(self, facets: np.ndarray) -> np.ndarray:
        """Scalar Q2 nodes on the given facet list (vertex pairs)."""
        if len(facets) == 0:
            return np.zeros(0, dtype=np.int64)
        eids = _edge_ids_of(self.mesh, facets)
        return np.unique(np.concatenate([facets.ravel(),
                                         self.mesh.num_vertices + eids]))


def _edge_ids_of(mesh: msh.Mesh, facets: np.ndarray) -> np.ndarray:
    table = mesh.edges
    key = np.sort(facets, axis=1)
    scale = table.max() + 1
    flat = table[:, 0] * scale + table[:, 1]
    idx = np.searchsorted(flat, key[:, 0] * scale + key[:, 1])
    return idx


def build_dofmap(mesh: msh.Mesh) -> DofMap:
    nv, ne, nc = mesh.num_vertices, len(mesh.edges), mesh.num_cells
    n2 = nv + ne + nc
    conn2 = np.hstack([mesh.cells, nv + mesh.cell_edges,
                       (nv + ne + np.arange(nc))[:, None]])
    conn1 = mesh.cells.copy()
    edge_mid = 0.5 * (mesh.vertices[mesh.edges[:, 0]] + mesh.vertices[mesh.edges[:, 1]])
    centers = mesh.vertices[mesh.cells].mean(axis=1)
    q2_coords = np.vstack([mesh.vertices, edge_mid, centers])

    boundary_nodes = {}
    for tag in (msh.INFLOW, msh.OUTFLOW, msh.WALLS, msh.CYLINDER):
        sel = mesh.boundary_tags == tag
        facets = mesh.boundary_facets[sel]
        if len(facets):
            eids = mesh.boundary_edge_ids[sel]
            boundary_nodes[tag] = np.unique(
                np.concatenate([facets.ravel(), nv + eids]))
        else:
            boundary_nodes[tag] = np.zeros(0, dtype=np.int64)

    iface = mesh.interface_facets
    if len(iface):
        ifc_eids = _edge_ids_of(mesh, iface)
        interface_nodes = np.unique(np.concatenate([iface.ravel(), nv + ifc_eids]))
        interface_nodes_q1 = np.unique(iface.ravel())
    else:
        interface_nodes = np.zeros(0, dtype=np.int64)
        interface_nodes_q1 = np.zeros(0, dtype=np.int64)

    solid_cells = np.where(mesh.subdomain == msh.SOLID)[0]
    fluid_cells = np.where(mesh.subdomain == msh.FLUID)[0]
    solid_nodes = np.unique(conn2[solid_cells].ravel()) if len(solid_cells) else np.zeros(0, dtype=np.int64)
    fluid_nodes = np.unique(conn2[fluid_cells].ravel()) if len(fluid_cells) else np.zeros(0, dtype=np.int64)
    solid_nodes_q1 = np.unique(conn1[solid_cells].ravel()) if len(solid_cells) else np.zeros(0, dtype=np.int64)

    return DofMap(mesh, n2, nv, conn2, conn1, q2_coords, boundary_nodes,
                  interface_nodes, solid_nodes, fluid_nodes,
                  interface_nodes_q1, solid_nodes_q1)


def build_spaces(hierarchy: msh.MeshHierarchy) -> list[DofMap]:
    """One DofMap per hierarchy level, coarse to fine."""
    return [build_dofmap(m) for m in hierarchy.levels]


def q2_injection(hierarchy: msh.MeshHierarchy, j: int) -> np.ndarray:
    """Fine (level j+1) scalar Q2 node index of every coarse (level j) node.

    Coarse vertex nodes persist, coarse edge nodes become the refinement's
    edge-midpoint vertices, coarse cell nodes become centroid vertices.
    """
    coarse = hierarchy.levels[j]
    return np.concatenate([
        np.arange(coarse.num_vertices),
        hierarchy.edge_mid_vertex[j],
        hierarchy.cell_center_vertex[j],
    ])


def inject_q2_vector(hierarchy, dofmaps, j: int, fine_field: np.ndarray) -> np.ndarray:
    """Restrict a fine vector-Q2 coefficient field to level j by nodal injection."""
    inj = q2_injection(hierarchy, j)
    n2c, n2f = dofmaps[j].n2, dofmaps[j + 1].n2
    out = np.empty(2 * n2c)
    out[:n2c] = fine_field[:n2f][inj]
    out[n2c:] = fine_field[n2f:][inj]
    return out
