"""Block-structured quad meshes and the nested refinement hierarchy.

All meshes are conforming quadrilateral meshes in 2D. Cells carry a
subdomain tag (fluid or solid) and boundary facets carry one of four
tags (inflow, outflow, walls, cylinder). The channel-with-cylinder
geometry is meshed with an O-grid ring around the cylinder so that the
fluid-solid interface and the circular boundary are unions of facets.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

FLUID = 0
SOLID = 1

INFLOW = 1
OUTFLOW = 2
WALLS = 3
CYLINDER = 4

TAG_NAMES = {INFLOW: "inflow", OUTFLOW: "outflow", WALLS: "walls", CYLINDER: "cylinder"}


class MeshError(Exception):
    """Invalid geometry parameters or a broken mesh."""


class MeshTangledError(MeshError):
    """Non-positive Jacobian determinant under the current displacement."""

    def __init__(self, cell: int, det: float):
        self.cell = cell
        self.det = det
        super().__init__(f"mesh tangled: cell {cell} has det {det:.6e}")


@dataclass(frozen=True)
class GeometryParams:
    """Channel-with-cylinder-and-beam geometry.

    Parameters
    ----------
    L, H : float
        Channel length and height.
    l, h : float
        Beam length (from the cylinder surface, along the midline) and height.
    cx, cy : float
        Cylinder center.
    r : float
        Cylinder radius.
    """

    L: float = 2.5
    H: float = 0.41
    l: float = 0.35
    h: float = 0.02
    cx: float = 0.2
    cy: float = 0.2
    r: float = 0.05

    def validate(self) -> None:
        g = self
        if min(g.L, g.H, g.l, g.h, g.r) <= 0:
            raise MeshError("all geometry lengths must be positive")
        if g.h / 2 >= g.r:
            raise MeshError("beam height must be smaller than the cylinder diameter")
        tip = g.cx + g.r + g.l
        if not (0 < g.cx - g.r and tip < g.L):
            raise MeshError("cylinder plus beam must lie strictly inside the channel")
        if not (0 < g.cy - g.r and g.cy + g.r < g.H):
            raise MeshError("cylinder must lie strictly inside the channel")

    @property
    def beam_tip(self) -> tuple[float, float]:
        return (self.cx + self.r + self.l, self.cy)

    def solid_area(self) -> float:
        """Area of the beam minus the circular cap it shares with the cylinder."""
        half = self.h / 2
        tip = self.cx + self.r + self.l
        # integral of sqrt(r^2 - y^2) over [-h/2, h/2]
        cap = half * np.sqrt(self.r**2 - half**2) + self.r**2 * np.arcsin(half / self.r)
        return self.h * (tip - self.cx) - cap


@dataclass
class Mesh:
    """One conforming quad mesh level.

    vertices: (nv, 2) float; cells: (nc, 4) int, counterclockwise;
    subdomain: (nc,) int from {FLUID, SOLID};
    boundary_facets: (nb, 2) int vertex pairs; boundary_tags: (nb,) int.
    Edge table and interface facets are derived in ``finalize``.
    """

    vertices: np.ndarray
    cells: np.ndarray
    subdomain: np.ndarray
    boundary_facets: np.ndarray
    boundary_tags: np.ndarray
    edges: np.ndarray = field(default=None)
    cell_edges: np.ndarray = field(default=None)
    interface_facets: np.ndarray = field(default=None)
    boundary_edge_ids: np.ndarray = field(default=None)

    @property
    def num_vertices(self) -> int:
        return len(self.vertices)

    @property
    def num_cells(self) -> int:
        return len(self.cells)

    def finalize(self) -> "Mesh":
        """Build the unique edge table, per-cell edge ids and interface facets."""
        cells = self.cells
        # local edges in (bottom, right, top, left) order
        pairs = np.stack(
            [
                cells[:, [0, 1]],
                cells[:, [1, 2]],
                cells[:, [2, 3]],
                cells[:, [3, 0]],
            ],
            axis=1,
        ).reshape(-1, 2)
        key = np.sort(pairs, axis=1)
        self.edges, inv = np.unique(key, axis=0, return_inverse=True)
        self.cell_edges = inv.reshape(-1, 4)

        # edge -> adjacent cells (up to two)
        ne = len(self.edges)
        owner = np.full((ne, 2), -1, dtype=np.int64)
        cell_ids = np.repeat(np.arange(len(cells)), 4)
        order = np.argsort(inv, kind="stable")
        sorted_edges = inv[order]
        sorted_cells = cell_ids[order]
        starts = np.searchsorted(sorted_edges, np.arange(ne))
        ends = np.searchsorted(sorted_edges, np.arange(ne), side="right")
        counts = ends - starts
        if counts.max() > 2:
            raise MeshError("non-manifold edge in mesh")
        owner[:, 0] = sorted_cells[starts]
        two = counts == 2
        owner[two, 1] = sorted_cells[ends[two] - 1]
        self.edge_cells = owner

        # interface: interior edges whose two cells carry different subdomain tags
        both = owner[:, 1] >= 0
        diff = np.zeros(ne, dtype=bool)
        diff[both] = self.subdomain[owner[both, 0]] != self.subdomain[owner[both, 1]]
        self.interface_facets = self.edges[diff].copy()

        # map tagged boundary facets onto edge ids
        if len(self.boundary_facets):
            bkey = np.sort(self.boundary_facets, axis=1)
            self.boundary_edge_ids = _find_rows(self.edges, bkey)
        else:
            self.boundary_edge_ids = np.zeros(0, dtype=np.int64)
        return self

    def check_orientation(self) -> None:
        """Require positive bilinear Jacobian at all four corners of every cell."""
        x = self.vertices[self.cells]  # (nc, 4, 2)
        for k in range(4):
            a = x[:, (k + 1) % 4] - x[:, k]
            b = x[:, (k + 3) % 4] - x[:, k]
            det = a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]
            if det.min() <= 0:
                c = int(np.argmin(det))
                raise MeshError(f"cell {c} is inverted or degenerate (corner det {det[c]:.3e})")

    def cell_diameters(self, vertex_displacement: np.ndarray | None = None) -> np.ndarray:
        """Max vertex-pair distance per cell, optionally on displaced vertices."""
        x = self.vertices
        if vertex_displacement is not None:
            x = x + vertex_displacement
        corners = x[self.cells]
        d = 0.0
        for i in range(4):
            for j in range(i + 1, 4):
                d = np.maximum(d, np.linalg.norm(corners[:, i] - corners[:, j], axis=1))
        return d

    def boundary_vertex_set(self, tags) -> np.ndarray:
        """Sorted vertex ids lying on facets with any of the given tags."""
        tags = np.atleast_1d(tags)
        mask = np.isin(self.boundary_tags, tags)
        return np.unique(self.boundary_facets[mask])

    def dump(self, path: str) -> None:
        """Plain-text debug dump: vertices then cells with subdomain tags."""
        with open(path, "w", encoding="utf-8") as f:
            f.write(f"# vertices {self.num_vertices} cells {self.num_cells}\n")
            for x, y in self.vertices:
                f.write(f"{x:.17g} {y:.17g}\n")
            for cell, tag in zip(self.cells, self.subdomain):
                f.write(f"{cell[0]} {cell[1]} {cell[2]} {cell[3]} {tag}\n")


def _find_rows(table: np.ndarray, rows: np.ndarray) -> np.ndarray:
    """Indices of `rows` inside the lexicographically unique `table`."""
    idx = np.searchsorted(table[:, 0] * (table.max() + 1) + table[:, 1],
                          rows[:, 0] * (table.max() + 1) + rows[:, 1])
    found = table[idx]
    if not np.array_equal(found, rows):
        raise MeshError("boundary facet not present in the edge table")
    return idx


class _VertexRegistry:
    """Deduplicates vertices by rounded coordinates while building a mesh."""

    def __init__(self, tol: float = 1e-9):
        self._scale = 1.0 / tol
        self._map: dict[tuple[int, int], int] = {}
        self.coords: list[tuple[float, float]] = []

    def add(self, x: float, y: float) -> int:
        key = (round(x * self._scale), round(y * self._scale))
        idx = self._map.get(key)
        if idx is None:
            idx = len(self.coords)
            self._map[key] = idx
            self.coords.append((float(x), float(y)))
        return idx


def _orient_ccw(verts: np.ndarray, cell: list[int]) -> list[int]:
    x = verts[cell]
    area = 0.0
    for k in range(4):
        x0, y0 = x[k]
        x1, y1 = x[(k + 1) % 4]
        area += x0 * y1 - x1 * y0
    return cell if area > 0 else [cell[0], cell[3], cell[2], cell[1]]


def build_turek_coarse(g: GeometryParams) -> Mesh:
    """Coarse mesh for the channel with cylinder and attached elastic beam.

    The cylinder is surrounded by a two-layer O-grid ring out to a square
    frame; the beam is meshed as two rows of solid cells from the cylinder
    arc to the tip; the rest of the channel is covered by structured blocks
    that share the frame and beam grid lines.
    """
    g.validate()
    cx, cy, r, half = g.cx, g.cy, g.r, g.h / 2
    a = 1.6 * r  # frame half-width
    if not (cy - a > 0 and cy + a < g.H and cx - a > 0):
        raise MeshError("frame around the cylinder does not fit in the channel")
    tip = g.cx + g.r + g.l
    theta_b = np.arcsin(half / r)
    xa = cx + r * np.cos(theta_b)  # beam attachment x at y = cy +- h/2

    reg = _VertexRegistry()
    cells: list[list[int]] = []
    tags: list[int] = []

    def add_block(xs, ys, subdomain):
        for i in range(len(xs) - 1):
            for j in range(len(ys) - 1):
                v0 = reg.add(xs[i], ys[j])
                v1 = reg.add(xs[i + 1], ys[j])
                v2 = reg.add(xs[i + 1], ys[j + 1])
                v3 = reg.add(xs[i], ys[j + 1])
                cells.append([v0, v1, v2, v3])
                tags.append(subdomain)

    # O-grid ring: spokes from the circle to the frame square
    spoke_theta = [theta_b, np.pi / 4, np.pi / 2, 3 * np.pi / 4, np.pi,
                   5 * np.pi / 4, 3 * np.pi / 2, 7 * np.pi / 4, 2 * np.pi - theta_b]
    frame_pts = [
        (cx + a, cy + half),
        (cx + a, cy + a),
        (cx, cy + a),
        (cx - a, cy + a),
        (cx - a, cy),
        (cx - a, cy - a),
        (cx, cy - a),
        (cx + a, cy - a),
        (cx + a, cy - half),
    ]
    ring_rows = []  # per spoke: [circle id, mid id, frame id]
    for th, (fx, fy) in zip(spoke_theta, frame_pts):
        px, py = cx + r * np.cos(th), cy + r * np.sin(th)
        ring_rows.append([
            reg.add(px, py),
            reg.add(0.5 * (px + fx), 0.5 * (py + fy)),
            reg.add(fx, fy),
        ])
    verts_now = None
    for s in range(len(spoke_theta) - 1):
        r0, r1 = ring_rows[s], ring_rows[s + 1]
        for layer in range(2):
            cells.append([r0[layer], r1[layer], r1[layer + 1], r0[layer + 1]])
            tags.append(FLUID)

    # beam: two cell rows from the cylinder arc to the tip
    xm = 0.5 * (xa + cx + a)
    beam_n = max(2, int(round((tip - (cx + a)) / (0.8 * r))))
    beam_xs = [xa, xm] + list(np.linspace(cx + a, tip, beam_n + 1))
    beam_ys = [cy - half, cy, cy + half]
    add_block(beam_xs, beam_ys, SOLID)
    # pull the attachment midline vertex from the chord onto the circle
    mid_att = reg.add(xa, cy)
    reg.coords[mid_att] = (cx + r, cy)

    # structured fluid blocks sharing the frame and beam grid lines
    xs_left = [0.0, (cx - a) / 2, cx - a]
    ys_outer = [0.0, (cy - a) / 2, cy - a, cy, cy + a, (cy + a + g.H) / 2, g.H]
    add_block(xs_left, ys_outer, FLUID)

    xs_frame = [cx - a, cx, cx + a]
    add_block(xs_frame, [0.0, (cy - a) / 2, cy - a], FLUID)
    add_block(xs_frame, [cy + a, (cy + a + g.H) / 2, g.H], FLUID)

    xs_beam_zone = list(np.linspace(cx + a, tip, beam_n + 1))
    ys_below = [0.0, (cy - a) / 2, cy - a, cy - half]
    ys_above = [cy + half, cy + a, (cy + a + g.H) / 2, g.H]
    add_block(xs_beam_zone, ys_below, FLUID)
    add_block(xs_beam_zone, ys_above, FLUID)

    n_wake = 12
    s = np.linspace(0.0, 1.0, n_wake + 1) ** 1.25
    xs_wake = list(tip + (g.L - tip) * s)
    ys_wake = [0.0, (cy - a) / 2, cy - a, cy - half, cy, cy + half, cy + a,
               (cy + a + g.H) / 2, g.H]
    add_block(xs_wake, ys_wake, FLUID)

    verts_now = np.array(reg.coords)
    cells_arr = np.array([_orient_ccw(verts_now, c) for c in cells], dtype=np.int64)
    mesh = Mesh(
        vertices=verts_now,
        cells=cells_arr,
        subdomain=np.array(tags, dtype=np.int64),
        boundary_facets=np.zeros((0, 2), dtype=np.int64),
        boundary_tags=np.zeros(0, dtype=np.int64),
    ).finalize()
    _tag_channel_boundary(mesh, g)
    mesh.check_orientation()
    # snap the attachment midline vertex onto the circle (it already is, by construction)
    assert abs(np.hypot(*(mesh.vertices[mid_att] - [cx, cy])) - r) < 1e-12
    return mesh


def _tag_channel_boundary(mesh: Mesh, g: GeometryParams, tol: float = 1e-9) -> None:
    """Geometrically classify every exterior edge of a channel mesh."""
    ext = mesh.edge_cells[:, 1] < 0
    edges = mesh.edges[ext]
    mids = 0.5 * (mesh.vertices[edges[:, 0]] + mesh.vertices[edges[:, 1]])
    tags = np.empty(len(edges), dtype=np.int64)
    on_in = mids[:, 0] < tol
    on_out = mids[:, 0] > g.L - tol
    on_wall = (mids[:, 1] < tol) | (mids[:, 1] > g.H - tol)
    tags[on_in] = INFLOW
    tags[on_out] = OUTFLOW
    tags[on_wall & ~(on_in | on_out)] = WALLS
    rest = ~(on_in | on_out | on_wall)
    # remaining exterior edges must sit on (or near) the cylinder
    rad = np.hypot(mids[rest, 0] - g.cx, mids[rest, 1] - g.cy)
    if len(rad) and rad.max() > 1.2 * g.r:
        raise MeshError("untaggable exterior edge away from the cylinder")
    tags[rest] = CYLINDER
    mesh.boundary_facets = edges.copy()
    mesh.boundary_tags = tags
    mesh.boundary_edge_ids = None
    mesh.finalize()


def build_rect(nx: int, ny: int, Lx: float = 1.0, Ly: float = 1.0,
               solid_predicate=None) -> Mesh:
    """Structured rectangle mesh; test-only path with no obstacle.

    Boundary tags follow channel conventions: x=0 inflow, x=Lx outflow,
    y=0 and y=Ly walls. ``solid_predicate(xc, yc)`` may tag cells solid
    by their center, for two-material tests.
    """
    xs = np.linspace(0.0, Lx, nx + 1)
    ys = np.linspace(0.0, Ly, ny + 1)
    vid = lambda i, j: j * (nx + 1) + i
    verts = np.array([(x, y) for y in ys for x in xs])
    cells = []
    for j in range(ny):
        for i in range(nx):
            cells.append([vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)])
    cells = np.array(cells, dtype=np.int64)
    centers = verts[cells].mean(axis=1)
    sub = np.zeros(len(cells), dtype=np.int64)
    if solid_predicate is not None:
        sub[[bool(solid_predicate(x, y)) for x, y in centers]] = SOLID
    mesh = Mesh(verts, cells, sub, np.zeros((0, 2), dtype=np.int64),
                np.zeros(0, dtype=np.int64)).finalize()
    ext = mesh.edge_cells[:, 1] < 0
    edges = mesh.edges[ext]
    mids = 0.5 * (verts[edges[:, 0]] + verts[edges[:, 1]])
    tol = 1e-12
    tags = np.full(len(edges), WALLS, dtype=np.int64)
    tags[mids[:, 0] < tol] = INFLOW
    tags[mids[:, 0] > Lx - tol] = OUTFLOW
    mesh.boundary_facets = edges.copy()
    mesh.boundary_tags = tags
    mesh.finalize()
    mesh.check_orientation()
    return mesh


def build_unit_square(n: int = 1) -> Mesh:
    return build_rect(n, n)


@dataclass
class MeshHierarchy:
    """Nested levels T_0 .. T_J with parent/child and node-origin maps.

    For each level j >= 1:
    - ``cell_parent[j]``: (nc_j,) parent cell at level j-1 (children are
      contiguous, fine cell 4p+c has parent p);
    - ``edge_mid_vertex[j]``: (ne_{j-1},) fine vertex created on each coarse edge;
    - ``cell_center_vertex[j]``: (nc_{j-1},) fine vertex created in each coarse cell.
    Coarse vertices keep their indices as a prefix of the fine vertex list.
    """

    levels: list[Mesh]
    cell_parent: list[np.ndarray]
    edge_mid_vertex: list[np.ndarray]
    cell_center_vertex: list[np.ndarray]
    geometry: GeometryParams | None = None

    @property
    def J(self) -> int:
        return len(self.levels) - 1

    @property
    def fine(self) -> Mesh:
        return self.levels[-1]


def refine_once(mesh: Mesh, geometry: GeometryParams | None = None):
    """Uniform 1-to-4 refinement with cylinder snapping.

    Returns (fine mesh, edge_mid_vertex, cell_center_vertex).
    """
    nv, ne, nc = mesh.num_vertices, len(mesh.edges), mesh.num_cells
    edge_mid = 0.5 * (mesh.vertices[mesh.edges[:, 0]] + mesh.vertices[mesh.edges[:, 1]])
    centers = mesh.vertices[mesh.cells].mean(axis=1)
    verts = np.vstack([mesh.vertices, edge_mid, centers])
    emv = nv + np.arange(ne)
    ccv = nv + ne + np.arange(nc)

    c = mesh.cells
    e = nv + mesh.cell_edges  # bottom, right, top, left midpoints
    ctr = ccv
    fine_cells = np.empty((4 * nc, 4), dtype=np.int64)
    fine_cells[0::4] = np.stack([c[:, 0], e[:, 0], ctr, e[:, 3]], axis=1)
    fine_cells[1::4] = np.stack([e[:, 0], c[:, 1], e[:, 1], ctr], axis=1)
    fine_cells[2::4] = np.stack([ctr, e[:, 1], c[:, 2], e[:, 2]], axis=1)
    fine_cells[3::4] = np.stack([e[:, 3], ctr, e[:, 2], c[:, 3]], axis=1)
    sub = np.repeat(mesh.subdomain, 4)

    # boundary facets split in two, tags inherited
    if len(mesh.boundary_facets):
        bf = mesh.boundary_facets
        bmid = emv[mesh.boundary_edge_ids]
        fine_bf = np.vstack([
            np.stack([bf[:, 0], bmid], axis=1),
            np.stack([bmid, bf[:, 1]], axis=1),
        ])
        fine_tags = np.concatenate([mesh.boundary_tags, mesh.boundary_tags])
    else:
        fine_bf = np.zeros((0, 2), dtype=np.int64)
        fine_tags = np.zeros(0, dtype=np.int64)

    fine = Mesh(verts, fine_cells, sub, fine_bf, fine_tags).finalize()
    if geometry is not None:
        snap = fine.boundary_vertex_set(CYLINDER)
        if len(snap):
            d = fine.vertices[snap] - [geometry.cx, geometry.cy]
            fine.vertices[snap] = [geometry.cx, geometry.cy] + geometry.r * d / np.linalg.norm(d, axis=1)[:, None]
    fine.check_orientation()
    return fine, emv, ccv


def build_hierarchy(coarse: Mesh, J: int, geometry: GeometryParams | None = None) -> MeshHierarchy:
    """Refine J times; snapping is applied per level when geometry is given."""
    if J < 0:
        raise MeshError("J must be >= 0")
    levels = [coarse]
    parents, emvs, ccvs = [], [], []
    for _ in range(J):
        fine, emv, ccv = refine_once(levels[-1], geometry)
        parents.append(np.repeat(np.arange(levels[-1].num_cells), 4))
        emvs.append(emv)
        ccvs.append(ccv)
        levels.append(fine)
    return MeshHierarchy(levels, parents, emvs, ccvs, geometry)


def build_turek_hierarchy(g: GeometryParams, J: int) -> MeshHierarchy:
    return build_hierarchy(build_turek_coarse(g), J, geometry=g)
