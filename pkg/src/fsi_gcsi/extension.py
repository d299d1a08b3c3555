"""Pseudo-elastic extension of interface motion into the fluid mesh.

The moving-mesh map needs a displacement (and velocity) field on the
whole reference mesh.  Inside the solid it is the computed solid field;
in the fluid it is extended by solving a variable-coefficient elasticity
problem with the interface values as Dirichlet data and the outer fluid
boundary held fixed.  The problem lives on the undeformed mesh, so the
operator is built once per level and reused for every stage; extension
is then a fixed linear map.

The stiffness coefficient is inflated near the tracking point so cells
in the highest-deformation region move almost rigidly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import krylov as kry
from . import operators as ops

TRACK_POINT = (0.6, 0.2)
SMOOTH_STEPS = 2
CHEB_ORDER = 4


def mesh_stiffness(x, y, point=TRACK_POINT):
    """Gaussian bump stiffness, 51 at the tracking point, ~1 far away."""
    px, py = point
    return 1.0 + 50.0 * np.exp(-800.0 * ((np.asarray(x) - px) ** 2
                                         + (np.asarray(y) - py) ** 2))


@dataclass
class _ExtLevel:
    op: ops.CompiledOperator
    diag_inv: np.ndarray
    bounds: tuple


def _assemble_velocity(op: ops.CompiledOperator) -> sp.csr_matrix:
    nv = op.dofmap.nv
    rows = np.repeat(op.vdofs, 18, axis=1).ravel()
    cols = np.tile(op.vdofs, (1, 18)).ravel()
    m = sp.coo_matrix((op.Aloc.ravel(), (rows, cols)), shape=(nv, nv)).tocsr()
    return ops.constrain_matrix(m, op.constrained_v, nv)


class ExtensionProblem:
    """Multilevel solver for the fluid-mesh extension operator.

    Constrained nodes are every solid node plus the whole outer boundary;
    the elasticity operator therefore only acts on fluid interior dofs,
    and solid cells never contribute to an unconstrained equation.
    """

    def __init__(self, ctx, point=TRACK_POINT):
        self.ctx = ctx
        self.point = point
        self.levels = []
        self.constrained = []
        for dm, static in zip(ctx.dofmaps, ctx.statics):
            outer = [dm.boundary_nodes[t] for t in sorted(dm.boundary_nodes)]
            nodes = np.unique(np.concatenate([dm.solid_nodes] + outer))
            cons = dm.vector_dofs(nodes)
            geo = ops.update_geometry(static, None)
            mu = mesh_stiffness(geo.x[..., 0], geo.x[..., 1], point)
            op = ops.compile_operator(geo, 0.5 * mu, None, None, None, None,
                                      cons, np.zeros(0, dtype=np.int64))
            diag_inv = 1.0 / op.diag_A()
            bounds = kry.smoothing_interval(op.apply_A, diag_inv)
            self.levels.append(_ExtLevel(op, diag_inv, bounds))
            self.constrained.append(cons)
        self.interface_dofs = ctx.fine.vector_dofs(ctx.fine.interface_nodes)
        self.solid_dofs = ctx.fine.vector_dofs(ctx.fine.solid_nodes)
        self.last_iterations = 0
        self._coarse_lu = spla.splu(
            sp.csc_matrix(_assemble_velocity(self.levels[0].op)))

    def _smooth(self, lvl: _ExtLevel, rhs, x):
        for _ in range(SMOOTH_STEPS):
            r = rhs - lvl.op.apply_A(x)
            x = x + kry.chebyshev_apply(lvl.op.apply_A, lvl.diag_inv,
                                        CHEB_ORDER, r, *lvl.bounds)
        return x

    def _vcycle(self, j, rhs):
        if j == 0:
            return self._coarse_lu.solve(rhs)
        lvl = self.levels[j]
        x = self._smooth(lvl, rhs, np.zeros_like(rhs))
        rc = self.ctx.transfers[j - 1].restrict_velocity(
            rhs - lvl.op.apply_A(x))
        rc[self.constrained[j - 1]] = 0.0
        e = self.ctx.transfers[j - 1].prolong_velocity(self._vcycle(j - 1, rc))
        e[self.constrained[j]] = 0.0
        x = x + e
        return self._smooth(lvl, rhs, x)

    def precondition(self, r):
        return self._vcycle(len(self.levels) - 1, r)

    def solve_extension(self, boundary_values: np.ndarray,
                        tol: float = 1e-6) -> np.ndarray:
        """Extend Dirichlet data into the fluid.

        boundary_values is a full velocity-layout vector; only its entries
        at constrained dofs (interface and outer boundary) are read.
        """
        lvl = self.levels[-1]
        cons = self.constrained[-1]
        xd = np.zeros(lvl.op.dofmap.nv)
        xd[cons] = boundary_values[cons]
        b = -lvl.op.apply_A_raw(xd)
        b[cons] = xd[cons]
        res = kry.cg(lvl.op.apply_A, self.precondition, b,
                     kry.KrylovConfig(tol=tol), x0=xd)
        self.last_iterations = res.iterations
        if not res.converged:
            raise kry.SolverFailure("extension CG stalled", res.residuals)
        return res.x

    def domain_velocity(self, v: np.ndarray, tol: float = 1e-6) -> np.ndarray:
        """Mesh velocity: v on the solid, Ext of its trace in the fluid."""
        trace = np.zeros_like(v[:self.levels[-1].op.dofmap.nv])
        trace[self.interface_dofs] = v[self.interface_dofs]
        w = self.solve_extension(trace, tol=tol)
        w[self.solid_dofs] = v[self.solid_dofs]
        return w
