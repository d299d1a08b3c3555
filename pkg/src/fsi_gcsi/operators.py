"""Matrix-free operator kernels and their assembled-matrix oracle.

All kernels run vectorized over whole levels: quadrature data is laid out
structure-of-arrays with shape (cells, qpoints, ...). The matrix-free path
evaluates fields at quadrature points and scatters weak-form residuals on
the fly; the assembled path builds per-cell dense matrices and a global
scipy sparse matrix, and exists as the test oracle and the coarse-level
direct solve.

Velocity block conventions (2D, current configuration Omega#):
    a(v, psi)  = (reaction * v, psi) + (2 eta eps(v), eps(psi))
               [+ (rho (grad v) v_circ, psi)]  [+ sum_K r (v_circ . grad v, v_circ . grad psi)]
    b(v, q)    = (div v, q)
The saddle operator is [[A, B^T], [B, 0]].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import mesh as msh
from . import spaces as spc
from .mesh import MeshTangledError

ASSEMBLY_GUARD = 100_000


@dataclass
class StaticCache:
    """Reference-mesh quadrature data for one level; built once."""

    dofmap: spc.DofMap
    qw: np.ndarray
    N2: np.ndarray
    N1: np.ndarray
    jref_inv: np.ndarray   # (nc, nq, 2, 2)
    detref: np.ndarray     # (nc, nq)
    jxw_ref: np.ndarray    # (nc, nq)
    dN2_hat: np.ndarray    # (nc, nq, 9, 2) undeformed physical gradients
    dN1_hat: np.ndarray
    x_hat: np.ndarray      # (nc, nq, 2) undeformed quadrature coordinates

    @property
    def num_cells(self):
        return len(self.detref)


@dataclass
class GeometryCache:
    """Deformed-configuration quadrature data for a displacement u#."""

    static: StaticCache
    F: np.ndarray          # (nc, nq, 2, 2) I + grad_hat u#
    detF: np.ndarray
    grad_u: np.ndarray     # (nc, nq, 2, 2) current-config grad of u#
    dN2: np.ndarray        # current-config basis gradients
    dN1: np.ndarray
    jxw: np.ndarray
    x: np.ndarray          # deformed quadrature coordinates

    @property
    def dofmap(self):
        return self.static.dofmap


def _inv2x2(m: np.ndarray, det: np.ndarray) -> np.ndarray:
    inv = np.empty_like(m)
    inv[..., 0, 0] = m[..., 1, 1]
    inv[..., 1, 1] = m[..., 0, 0]
    inv[..., 0, 1] = -m[..., 0, 1]
    inv[..., 1, 0] = -m[..., 1, 0]
    return inv / det[..., None, None]


def build_static_cache(dofmap: spc.DofMap, nq1d: int = 3) -> StaticCache:
    qp, qw = spc.gauss_quadrature(nq1d)
    N2, dN2 = spc.q2_tabulate(qp)
    N1, dN1 = spc.q1_tabulate(qp)
    xv = dofmap.mesh.vertices[dofmap.mesh.cells]          # (nc, 4, 2)
    # J[c,q,i,j] = d x_i / d xi_j of the bilinear cell map
    J = np.einsum('cvi,qvj->cqij', xv, dN1)
    detref = J[..., 0, 0] * J[..., 1, 1] - J[..., 0, 1] * J[..., 1, 0]
    if detref.min() <= 0.0:
        c = int(np.unravel_index(np.argmin(detref), detref.shape)[0])
        raise MeshTangledError(c, float(detref.min()))
    jinv = _inv2x2(J, detref)
    # grad_xhat N = J^-T grad_xi N
    dN2_hat = np.einsum('qaj,cqji->cqai', dN2, jinv)
    dN1_hat = np.einsum('qaj,cqji->cqai', dN1, jinv)
    x_hat = np.einsum('cvi,qv->cqi', xv, N1)
    return StaticCache(dofmap, qw, N2, N1, jinv, detref, detref * qw,
                       dN2_hat, dN1_hat, x_hat)


def gather_vector(dofmap: spc.DofMap, x: np.ndarray) -> np.ndarray:
    """(nc, 2, 9) local velocity coefficients from component-major storage."""
    n2, conn = dofmap.n2, dofmap.conn2
    return np.stack([x[:n2][conn], x[n2:2 * n2][conn]], axis=1)


def scatter_vector(dofmap: spc.DofMap, yloc: np.ndarray) -> np.ndarray:
    n2, conn = dofmap.n2, dofmap.conn2
    flat = conn.ravel()
    return np.concatenate([
        np.bincount(flat, weights=yloc[:, 0, :].ravel(), minlength=n2),
        np.bincount(flat, weights=yloc[:, 1, :].ravel(), minlength=n2),
    ])


def update_geometry(static: StaticCache, u_sharp: np.ndarray | None) -> GeometryCache:
    """Compose the cell map with the discrete displacement u#.

    Raises MeshTangledError when det(I + grad u#) becomes non-positive at
    any quadrature point.
    """
    nc, nq = static.detref.shape
    if u_sharp is None:
        eye = np.broadcast_to(np.eye(2), (nc, nq, 2, 2))
        ones = np.ones((nc, nq))
        return GeometryCache(static, eye, ones, np.zeros((nc, nq, 2, 2)),
                             static.dN2_hat, static.dN1_hat,
                             static.jxw_ref.copy(), static.x_hat)
    uloc = gather_vector(static.dofmap, u_sharp)          # (nc, 2, 9)
    Gu_hat = np.einsum('cia,cqaj->cqij', uloc, static.dN2_hat)
    F = Gu_hat + np.eye(2)
    detF = F[..., 0, 0] * F[..., 1, 1] - F[..., 0, 1] * F[..., 1, 0]
    if detF.min() <= 1e-12:
        c = int(np.unravel_index(np.argmin(detF), detF.shape)[0])
        raise MeshTangledError(c, float(detF.min()))
    Finv = _inv2x2(F, detF)
    dN2 = np.einsum('cqaj,cqji->cqai', static.dN2_hat, Finv)
    dN1 = np.einsum('cqaj,cqji->cqai', static.dN1_hat, Finv)
    grad_u = np.einsum('cqij,cqjk->cqik', Gu_hat, Finv)
    x = static.x_hat + np.einsum('cia,qa->cqi', uloc, static.N2)
    return GeometryCache(static, F, detF, grad_u, dN2, dN1,
                         static.jxw_ref * detF, x)


def eval_vector_field(geo: GeometryCache, coeffs: np.ndarray,
                      reference_grad: bool = False):
    """Values (nc,nq,2) and current-config gradients (nc,nq,2,2) of a Q2 field."""
    st = geo.static
    loc = gather_vector(st.dofmap, coeffs)
    vals = np.einsum('cia,qa->cqi', loc, st.N2)
    dN = st.dN2_hat if reference_grad else geo.dN2
    grads = np.einsum('cia,cqaj->cqij', loc, dN)
    return vals, grads


def eval_pressure_field(geo: GeometryCache, coeffs: np.ndarray) -> np.ndarray:
    st = geo.static
    return np.einsum('cb,qb->cq', coeffs[st.dofmap.conn1], st.N1)


# ---------------------------------------------------------------------------
# matrix-free actions

def apply_velocity_block(geo: GeometryCache, eta_q: np.ndarray,
                         react_q: np.ndarray | None,
                         conv_rho_q: np.ndarray | None,
                         vcirc_q: np.ndarray | None,
                         r_cell: np.ndarray | None,
                         xv: np.ndarray) -> np.ndarray:
    """Action of the velocity block A on a vector-Q2 coefficient vector."""
    st = geo.static
    loc = gather_vector(st.dofmap, xv)
    # values and gradients at quadrature points
    V = np.einsum('cia,qa->cqi', loc, st.N2)
    Gv = np.matmul(loc[:, None, :, :], geo.dN2)           # (nc, nq, 2, 2)

    jxw = geo.jxw
    # flux against grad(psi): 2 eta sym(Gv) [+ stabilization dyad]
    sym = Gv + Gv.transpose(0, 1, 3, 2)
    T = eta_q[..., None, None] * sym
    # source against psi values: reaction * v [+ rho (grad v) v_circ]
    S = None
    if react_q is not None:
        S = react_q[..., None] * V
    if conv_rho_q is not None:
        adv = np.matmul(Gv, vcirc_q[..., None])[..., 0]   # (nc, nq, 2)
        S = S + conv_rho_q[..., None] * adv if S is not None else conv_rho_q[..., None] * adv
    if r_cell is not None:
        dirv = np.matmul(Gv, vcirc_q[..., None])[..., 0]  # v_circ . grad v
        T += (r_cell[:, None, None, None]
              * dirv[..., :, None] * vcirc_q[..., None, :])
    T *= jxw[..., None, None]
    yloc = np.matmul(T, geo.dN2.transpose(0, 1, 3, 2)).sum(axis=1)  # (nc, 2, 9)
    if S is not None:
        S = S * jxw[..., None]
        yloc += np.einsum('cqi,qa->cia', S, st.N2)
    return scatter_vector(st.dofmap, yloc)


def apply_div(geo: GeometryCache, xv: np.ndarray) -> np.ndarray:
    """B action: velocity -> pressure block, (div v, q)."""
    st = geo.static
    loc = gather_vector(st.dofmap, xv)
    Gv = np.matmul(loc[:, None, :, :], geo.dN2)
    div = (Gv[..., 0, 0] + Gv[..., 1, 1]) * geo.jxw
    yloc = np.einsum('cq,qb->cb', div, st.N1)
    return np.bincount(st.dofmap.conn1.ravel(), weights=yloc.ravel(),
                       minlength=st.dofmap.n1)


def apply_grad(geo: GeometryCache, xp: np.ndarray) -> np.ndarray:
    """B^T action: pressure -> velocity block, (p, div psi)."""
    st = geo.static
    pq = np.einsum('cb,qb->cq', xp[st.dofmap.conn1], st.N1) * geo.jxw
    yloc = pq[..., None, None] * geo.dN2                  # (nc, nq, 9, 2)
    yloc = yloc.sum(axis=1).transpose(0, 2, 1)            # (nc, 2, 9)
    return scatter_vector(st.dofmap, yloc)


def diag_velocity_block(geo: GeometryCache, eta_q, react_q, conv_rho_q,
                        vcirc_q, r_cell) -> np.ndarray:
    """Diagonal of A accumulated cell-wise."""
    st = geo.static
    jxw = geo.jxw
    G = geo.dN2                                           # (nc, nq, 9, 2)
    gg = np.einsum('cqal,cqal->cqa', G, G)
    d = np.empty((len(jxw), 2, 9))
    for i in range(2):
        # 2 eta eps(psi):eps(psi) = eta (|grad N|^2 + (d_i N)^2)
        term = eta_q[..., None] * (gg + G[..., i] ** 2)
        if react_q is not None:
            term = term + react_q[..., None] * st.N2[None, :, :] ** 2
        if conv_rho_q is not None:
            dirn = np.einsum('cqaj,cqj->cqa', G, vcirc_q)
            term = term + conv_rho_q[..., None] * dirn * st.N2[None, :, :]
        if r_cell is not None:
            dirn = np.einsum('cqaj,cqj->cqa', G, vcirc_q)
            term = term + r_cell[:, None, None] * dirn ** 2
        d[:, i, :] = (term * jxw[..., None]).sum(axis=1)
    return scatter_vector(st.dofmap, d)


def schur_diag(geo: GeometryCache, diag_a: np.ndarray,
               constrained_v: np.ndarray) -> np.ndarray:
    """Cell-wise sparsified diagonal of B diag(A)^-1 B^T.

    Columns of B belonging to constrained velocity dofs are dropped, matching
    the eliminated operator.
    """
    st = geo.static
    dm = st.dofmap
    Bloc = np.einsum('cq,qb,cqai->cbia', geo.jxw, st.N1, geo.dN2)  # (nc,4,2,9)
    inv_d = 1.0 / diag_a
    mask = np.ones(dm.nv)
    mask[constrained_v] = 0.0
    w = (inv_d * mask)
    wloc = gather_vector(dm, w)                          # (nc, 2, 9)
    contrib = np.einsum('cbia,cia->cb', Bloc ** 2, wloc)
    return np.bincount(dm.conn1.ravel(), weights=contrib.ravel(),
                       minlength=dm.n1)


# ---------------------------------------------------------------------------
# compiled cell-local application

@dataclass
class CompiledOperator:
    """Per-cell dense local matrices for fast repeated application.

    Smoother loops apply the same stage operator hundreds of times per
    geometry update; caching the (nc, 18, 18) and (nc, 4, 18) local blocks
    once makes each application a batched gather/matmul/scatter. Constraint
    handling matches the quadrature path exactly, and nothing global is
    stored.
    """

    dofmap: spc.DofMap
    Aloc: np.ndarray            # (nc, 18, 18)
    Bloc: np.ndarray            # (nc, 4, 18)
    vdofs: np.ndarray           # (nc, 18) component-major velocity dofs
    constrained_v: np.ndarray
    pressure_pins: np.ndarray

    @property
    def constrained_block(self) -> np.ndarray:
        return np.concatenate([self.constrained_v,
                               self.dofmap.nv + self.pressure_pins])

    def apply_A_raw(self, xv: np.ndarray) -> np.ndarray:
        yloc = np.matmul(self.Aloc, xv[self.vdofs][..., None])[..., 0]
        return np.bincount(self.vdofs.ravel(), weights=yloc.ravel(),
                           minlength=self.dofmap.nv)

    def apply_A(self, xv: np.ndarray) -> np.ndarray:
        return eliminate(self.apply_A_raw, self.constrained_v)(xv)

    def diag_A(self) -> np.ndarray:
        dloc = np.einsum('caa->ca', self.Aloc)
        d = np.bincount(self.vdofs.ravel(), weights=dloc.ravel(),
                        minlength=self.dofmap.nv)
        d[self.constrained_v] = 1.0
        return d

    def apply_B(self, xv: np.ndarray) -> np.ndarray:
        xm = xv.copy()
        xm[self.constrained_v] = 0.0
        yloc = np.matmul(self.Bloc, xm[self.vdofs][..., None])[..., 0]
        y = np.bincount(self.dofmap.conn1.ravel(), weights=yloc.ravel(),
                        minlength=self.dofmap.n1)
        y[self.pressure_pins] = 0.0
        return y

    def apply_BT(self, xp: np.ndarray) -> np.ndarray:
        xm = xp.copy()
        xm[self.pressure_pins] = 0.0
        yloc = np.matmul(self.Bloc.transpose(0, 2, 1),
                         xm[self.dofmap.conn1][..., None])[..., 0]
        y = np.bincount(self.vdofs.ravel(), weights=yloc.ravel(),
                        minlength=self.dofmap.nv)
        y[self.constrained_v] = 0.0
        return y

    def schur_diag(self) -> np.ndarray:
        w = 1.0 / self.diag_A()
        w[self.constrained_v] = 0.0
        contrib = np.einsum('cbl,cl->cb', self.Bloc ** 2, w[self.vdofs])
        d = np.bincount(self.dofmap.conn1.ravel(), weights=contrib.ravel(),
                        minlength=self.dofmap.n1)
        d[self.pressure_pins] = 1.0
        return d

    def apply_raw(self, x: np.ndarray) -> np.ndarray:
        nv = self.dofmap.nv
        xv, xp = x[:nv], x[nv:]
        yv = np.matmul(self.Aloc, xv[self.vdofs][..., None])[..., 0]
        yv += np.matmul(self.Bloc.transpose(0, 2, 1),
                        xp[self.dofmap.conn1][..., None])[..., 0]
        yp = np.matmul(self.Bloc, xv[self.vdofs][..., None])[..., 0]
        return np.concatenate([
            np.bincount(self.vdofs.ravel(), weights=yv.ravel(), minlength=nv),
            np.bincount(self.dofmap.conn1.ravel(), weights=yp.ravel(),
                        minlength=self.dofmap.n1)])

    def apply(self, x: np.ndarray) -> np.ndarray:
        return eliminate(self.apply_raw, self.constrained_block)(x)


def compile_operator(geo: GeometryCache, eta_q, react_q, conv_rho_q, vcirc_q,
                     r_cell, constrained_v, pressure_pins) -> CompiledOperator:
    dm = geo.dofmap
    Aloc = _local_velocity_block(geo, eta_q, react_q, conv_rho_q, vcirc_q, r_cell)
    Bloc = _local_div_block(geo)
    vdofs = np.stack([dm.conn2, dm.n2 + dm.conn2], axis=1).reshape(len(Aloc), 18)
    return CompiledOperator(dm, Aloc, Bloc, np.ascontiguousarray(vdofs),
                            np.asarray(constrained_v, dtype=np.int64),
                            np.asarray(pressure_pins, dtype=np.int64))


# ---------------------------------------------------------------------------
# assembled oracle

def _local_velocity_block(geo: GeometryCache, eta_q, react_q, conv_rho_q,
                          vcirc_q, r_cell) -> np.ndarray:
    """Dense (nc, 18, 18) local matrices of the velocity block."""
    st = geo.static
    G = geo.dN2
    jxw = geo.jxw
    nc = len(jxw)
    A = np.zeros((nc, 2, 9, 2, 9))
    w_eta = jxw * eta_q
    t1 = np.einsum('cq,cqal,cqbl->cab', w_eta, G, G)
    t2 = np.einsum('cq,cqai,cqbj->caibj', w_eta, G, G)
    for i in range(2):
        A[:, i, :, i, :] += t1
        for j in range(2):
            # entry [i,a,j,b] += eta G_a[j] G_b[i]
            A[:, i, :, j, :] += t2[:, :, j, :, i]
    if react_q is not None:
        m = np.einsum('cq,qa,qb->cab', jxw * react_q, st.N2, st.N2)
        for i in range(2):
            A[:, i, :, i, :] += m
    if conv_rho_q is not None or r_cell is not None:
        dirn = np.einsum('cqaj,cqj->cqa', G, vcirc_q)
        if conv_rho_q is not None:
            c = np.einsum('cq,qa,cqb->cab', jxw * conv_rho_q, st.N2, dirn)
            for i in range(2):
                A[:, i, :, i, :] += c
        if r_cell is not None:
            s = np.einsum('c,cq,cqa,cqb->cab', r_cell, jxw, dirn, dirn)
            for i in range(2):
                A[:, i, :, i, :] += s
    return A.reshape(nc, 18, 18)


def _local_div_block(geo: GeometryCache) -> np.ndarray:
    st = geo.static
    return np.einsum('cq,qb,cqai->cbia', geo.jxw, st.N1, geo.dN2).reshape(-1, 4, 18)


def assemble_saddle(geo: GeometryCache, eta_q, react_q, conv_rho_q, vcirc_q,
                    r_cell, constrained: np.ndarray | None = None,
                    guard: int = ASSEMBLY_GUARD) -> sp.csr_matrix:
    """Assembled [[A, B^T], [B, 0]] with symmetric constraint elimination."""
    dm = geo.dofmap
    n = dm.nblock
    if n > guard:
        raise ValueError(f"assembly guard exceeded: {n} > {guard} dofs")
    Aloc = _local_velocity_block(geo, eta_q, react_q, conv_rho_q, vcirc_q, r_cell)
    Bloc = _local_div_block(geo)
    nc = len(Aloc)
    vdofs = np.stack([dm.conn2, dm.n2 + dm.conn2], axis=1).reshape(nc, 18)
    pdofs = 2 * dm.n2 + dm.conn1

    rows_a = np.repeat(vdofs, 18, axis=1).ravel()
    cols_a = np.tile(vdofs, (1, 18)).ravel()
    rows_b = np.repeat(pdofs, 18, axis=1).ravel()
    cols_b = np.tile(vdofs, (1, 4)).ravel()
    rows_bt = np.repeat(vdofs, 4, axis=1).ravel()
    cols_bt = np.tile(pdofs, (1, 18)).ravel()
    M = sp.coo_matrix(
        (np.concatenate([Aloc.ravel(), Bloc.ravel(), Bloc.transpose(0, 2, 1).ravel()]),
         (np.concatenate([rows_a, rows_b, rows_bt]),
          np.concatenate([cols_a, cols_b, cols_bt]))),
        shape=(n, n)).tocsr()
    if constrained is not None and len(constrained):
        M = constrain_matrix(M, constrained, n)
    return M


def constrain_matrix(M: sp.spmatrix, constrained: np.ndarray, n: int) -> sp.csr_matrix:
    """Symmetric elimination: zero constrained rows/cols, unit diagonal there."""
    free = np.ones(n)
    free[constrained] = 0.0
    D = sp.diags(free)
    return (D @ M @ D + sp.diags(1.0 - free)).tocsr()


def eliminate(apply_raw, constrained: np.ndarray):
    """Wrap a raw operator action with symmetric Dirichlet elimination."""
    def apply(x):
        xm = x.copy()
        xm[constrained] = 0.0
        y = apply_raw(xm)
        y[constrained] = x[constrained]
        return y
    return apply


# ---------------------------------------------------------------------------
# right-hand-side building blocks

def integrate_against_velocity(geo: GeometryCache, f_q: np.ndarray) -> np.ndarray:
    """(f, psi) for a per-quadrature-point vector field f_q (nc, nq, 2)."""
    st = geo.static
    S = f_q * geo.jxw[..., None]
    yloc = np.einsum('cqi,qa->cia', S, st.N2)
    return scatter_vector(st.dofmap, yloc)


def integrate_against_velocity_gradient(geo: GeometryCache, sig_q: np.ndarray) -> np.ndarray:
    """(sigma, grad psi) for a per-quadrature-point tensor field (nc, nq, 2, 2)."""
    T = sig_q * geo.jxw[..., None, None]
    yloc = np.matmul(T, geo.dN2.transpose(0, 1, 3, 2)).sum(axis=1)
    return scatter_vector(geo.static.dofmap, yloc)


def integrate_against_pressure(geo: GeometryCache, g_q: np.ndarray,
                               reference_measure: bool = False) -> np.ndarray:
    """(g, q) against Q1 test functions; optionally on the reference domain."""
    st = geo.static
    jxw = st.jxw_ref if reference_measure else geo.jxw
    yloc = np.einsum('cq,qb->cb', g_q * jxw, st.N1)
    return np.bincount(st.dofmap.conn1.ravel(), weights=yloc.ravel(),
                       minlength=st.dofmap.n1)


def facet_velocity_rhs(dofmap: spc.DofMap, facets: np.ndarray,
                       traction) -> np.ndarray:
    """(t, psi) over straight reference facets; traction(x, y) -> (tx, ty).

    Used for Neumann data and manufactured interface terms; facets are
    vertex pairs on the undeformed mesh.
    """
    out = np.zeros(dofmap.nv)
    if len(facets) == 0:
        return out
    mesh = dofmap.mesh
    eids = spc._edge_ids_of(mesh, facets)
    x0 = mesh.vertices[facets[:, 0]]
    x1 = mesh.vertices[facets[:, 1]]
    gp, gw = np.polynomial.legendre.leggauss(3)
    # 1D quadratic trace basis on nodes (v0, v1, mid)
    lag = spc._lag1d_q2(gp)                               # columns: -1, 0, +1
    Nfac = lag[:, [0, 2, 1]]                              # (nq, 3)
    ds = 0.5 * np.linalg.norm(x1 - x0, axis=1)            # (nf,)
    xq = 0.5 * (1 - gp)[None, :, None] * x0[:, None, :] + \
         0.5 * (1 + gp)[None, :, None] * x1[:, None, :]   # (nf, nq, 2)
    tq = np.asarray(traction(xq[..., 0], xq[..., 1]))     # (2, nf, nq)
    contrib = np.einsum('inq,qa,n,q->ina', tq, Nfac, ds, gw)
    nodes = np.stack([facets[:, 0], facets[:, 1], mesh.num_vertices + eids], axis=1)
    for i in range(2):
        out[i * dofmap.n2: (i + 1) * dofmap.n2] = np.bincount(
            nodes.ravel(), weights=contrib[i].ravel(), minlength=dofmap.n2)
    return out


# ---------------------------------------------------------------------------
# functionals

def integrate_functional(kind: str, geo: GeometryCache, state=None,
                         region: np.ndarray | None = None, exact=None) -> float:
    """Scalar quadrature functionals over the (possibly deformed) mesh.

    kind: 'volume' | 'reference_solid_volume' | 'div' |
          'l2_error_velocity' | 'l2_error_pressure'
    region: optional cell-index subset; exact: callable(x, y) for errors.
    """
    st = geo.static
    cells = slice(None) if region is None else region
    if kind == "volume":
        return float(geo.jxw[cells].sum())
    if kind == "reference_solid_volume":
        sub = st.dofmap.mesh.subdomain == msh.SOLID
        return float((st.jxw_ref[sub] * geo.detF[sub]).sum())
    if kind == "div":
        _, G = eval_vector_field(geo, state)
        div = G[..., 0, 0] + G[..., 1, 1]
        return float((div[cells] * geo.jxw[cells]).sum())
    if kind == "l2_error_velocity":
        V, _ = eval_vector_field(geo, state)
        ex = np.stack(exact(geo.x[..., 0], geo.x[..., 1]), axis=-1)
        diff = ((V - ex) ** 2).sum(axis=-1)
        return float(np.sqrt((diff[cells] * geo.jxw[cells]).sum()))
    if kind == "l2_error_pressure":
        P = eval_pressure_field(geo, state)
        ex = exact(geo.x[..., 0], geo.x[..., 1])
        return float(np.sqrt((((P - ex) ** 2)[cells] * geo.jxw[cells]).sum()))
    raise ValueError(f"unknown functional kind: {kind}")
