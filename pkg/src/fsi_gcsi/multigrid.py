"""Multilevel block-smoother preconditioner for the stage saddle systems.

One preconditioner application runs n V-cycles over the level hierarchy;
each level is smoothed m times with a block smoother built from Chebyshev
approximations of the velocity block and an inner Krylov loop on the
approximate pressure Schur complement. The coarsest level is solved with
a sparse LU factorization of the assembled saddle matrix.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import forms
from . import krylov as kry
from . import operators as ops
from . import spaces as spc
from . import transfer as tra


@dataclass
class SmootherParams:
    """Per-mode smoother controls; all counts are at least 1.

    k_A: Chebyshev order for the velocity-block solves;
    k_S: Chebyshev order inside the Schur preconditioner;
    n_S: inner MINRES/BiCGStab iterations on the Schur complement;
    m:   smoothing steps per level; n: V-cycles per application.
    """

    k_A: int = 4
    k_S: int = 1
    n_S: int = 1
    m: int = 2
    n: int = 1
    alpha_S: float = 8.0   # lower-edge divisor of the Schur Chebyshev window

    def __post_init__(self):
        for name in ("k_A", "k_S", "n_S", "m", "n"):
            if getattr(self, name) < 1:
                raise ValueError(f"smoother parameter {name} must be >= 1")
        if self.alpha_S < 1.0:
            raise ValueError("alpha_S must be >= 1")

    @staticmethod
    def for_mode(mode: str) -> "SmootherParams":
        return SmootherParams(k_A=6) if mode == forms.MODE_C else SmootherParams()


class LevelSolver:
    """One level's compiled operator, diagonals, and Chebyshev intervals."""

    def __init__(self, spec: forms.StageOperatorSpec, params: SmootherParams):
        self.spec = spec
        self.params = params
        self.symmetric = spec.mode == forms.MODE_P
        self.op = spec.compile()
        self.diag_a_inv = 1.0 / self.op.diag_A()
        if self.symmetric:
            self.bounds_a = kry.smoothing_interval(self.op.apply_A,
                                                   self.diag_a_inv)
            self.imag_a = 0.0
        else:
            # convective block: Ritz-based ellipse keeps the smoother
            # contractive when the preconditioned spectrum leaves the axis
            self.bounds_a, self.imag_a = kry.ellipse_interval(
                self.op.apply_A, self.diag_a_inv)
        self.schur_d_inv = 1.0 / self.op.schur_diag()
        if self.symmetric:
            self.bounds_s = kry.smoothing_interval(
                self.apply_schur, self.schur_d_inv, params.alpha_S)
            self.imag_s = 0.0
        else:
            self.bounds_s, self.imag_s = kry.ellipse_interval(
                self.apply_schur, self.schur_d_inv, params.alpha_S)

    # approximate velocity-block inverse
    def solve_a_hat(self, f: np.ndarray) -> np.ndarray:
        return kry.chebyshev_apply(self.op.apply_A, self.diag_a_inv,
                                   self.params.k_A, f, *self.bounds_a,
                                   imag_extent=self.imag_a)

    # Schur complement action S = B A_hat^-1 B^T
    def apply_schur(self, y: np.ndarray) -> np.ndarray:
        return self.op.apply_B(self.solve_a_hat(self.op.apply_BT(y)))

    def _schur_precond(self, r: np.ndarray) -> np.ndarray:
        return kry.chebyshev_apply(self.apply_schur, self.schur_d_inv,
                                   self.params.k_S, r, *self.bounds_s,
                                   imag_extent=self.imag_s)

    def solve_s_hat(self, g: np.ndarray, stats: dict) -> np.ndarray:
        if self.symmetric:
            stats["minres_calls"] += 1
            return kry.minres(self.apply_schur, self._schur_precond, g,
                              iterations=self.params.n_S).x
        stats["bicgstab_calls"] += 1
        return kry.bicgstab(self.apply_schur, self._schur_precond, g,
                            iterations=self.params.n_S).x

    def smooth(self, residual: np.ndarray, stats: dict) -> np.ndarray:
        """Block-smoother correction for a block residual (f, g)."""
        nv = self.spec.dofmap.nv
        f, g = residual[:nv], residual[nv:]
        t = self.solve_a_hat(f)
        y = self.solve_s_hat(self.op.apply_B(t) - g, stats)
        x = self.solve_a_hat(f - self.op.apply_BT(y))
        return np.concatenate([x, y])


@dataclass
class LevelSolverStack:
    """Hierarchy of level solvers plus transfers and the coarse factorization."""

    levels: list                      # LevelSolver, coarse to fine
    transfers: list                   # TransferPair, (j, j+1) pairs
    params: SmootherParams
    mode: str
    coarse_lu: spla.SuperLU
    stats: dict = field(default_factory=lambda: {"minres_calls": 0,
                                                 "bicgstab_calls": 0})

    @property
    def finest(self) -> LevelSolver:
        return self.levels[-1]

    def coarse_solve(self, rhs: np.ndarray) -> np.ndarray:
        return self.coarse_lu.solve(rhs)

    def vcycle(self, j: int, rhs: np.ndarray) -> np.ndarray:
        if j == 0:
            return self.coarse_solve(rhs)
        lev = self.levels[j]
        pair = self.transfers[j - 1]
        x = np.zeros_like(rhs)
        for _ in range(self.params.m):
            x += lev.smooth(rhs - lev.op.apply(x), self.stats)
        rc = pair.restrict_block(rhs - lev.op.apply(x))
        rc[self.levels[j - 1].op.constrained_block] = 0.0
        e = pair.prolong_block(self.vcycle(j - 1, rc))
        e[lev.op.constrained_block] = 0.0
        x += e
        for _ in range(self.params.m):
            x += lev.smooth(rhs - lev.op.apply(x), self.stats)
        return x

    def precondition(self, rhs: np.ndarray) -> np.ndarray:
        """n V-cycles; the operator FGMRES sees as its preconditioner."""
        top = len(self.levels) - 1
        x = self.vcycle(top, rhs)
        for _ in range(self.params.n - 1):
            x += self.vcycle(top, rhs - self.finest.op.apply(x))
        return x


def build_stack(specs: list, transfers: list,
                params: SmootherParams | None = None) -> LevelSolverStack:
    """Assemble per-level solvers from coarse-to-fine stage specs."""
    mode = specs[-1].mode
    p = params or SmootherParams.for_mode(mode)
    levels = [LevelSolver(s, p) for s in specs]
    coarse = specs[0].assemble(constrained=True)
    lu = spla.splu(sp.csc_matrix(coarse))
    return LevelSolverStack(levels, transfers, p, mode, lu)


# ---------------------------------------------------------------------------
# per-level stage specs by coefficient injection

@dataclass
class LevelContext:
    """Static per-hierarchy data shared by every stage solve."""

    hierarchy: object
    dofmaps: list
    statics: list
    transfers: list
    dirichlet_nodes: list             # per level, Q2 node ids
    pressure_pins: list               # per level, Q1 node ids

    @property
    def fine(self) -> spc.DofMap:
        return self.dofmaps[-1]


def build_level_context(hierarchy, dirichlet_tags: tuple,
                        pin_pressure: bool = False) -> LevelContext:
    dofmaps = spc.build_spaces(hierarchy)
    statics = [ops.build_static_cache(dm) for dm in dofmaps]
    transfers = tra.build_transfers(dofmaps)
    dirichlet = []
    pins = []
    for dm in dofmaps:
        nodes = [dm.boundary_nodes[t] for t in dirichlet_tags
                 if t in dm.boundary_nodes]
        dirichlet.append(np.unique(np.concatenate(nodes)) if nodes
                         else np.zeros(0, dtype=np.int64))
        # vertex 0 persists across refinement, so the pin is one location
        pins.append(np.array([0], dtype=np.int64) if pin_pressure
                    else np.zeros(0, dtype=np.int64))
    return LevelContext(hierarchy, dofmaps, statics, transfers, dirichlet, pins)


def inject_to_level(ctx: LevelContext, j: int, fine_field: np.ndarray | None):
    """Nodal injection of a fine-level vector field down to level j."""
    if fine_field is None:
        return None
    f = fine_field
    for lev in range(len(ctx.dofmaps) - 1, j, -1):
        f = spc.inject_q2_vector(ctx.hierarchy, ctx.dofmaps, lev - 1, f)
    return f


def build_level_specs(ctx: LevelContext, mode: str, gamma: float, tau: float,
                      alphas, fluid, solid,
                      u_sharp: np.ndarray | None,
                      vcirc: np.ndarray | None,
                      vstar: np.ndarray | None = None,
                      stabilize: bool = True) -> list:
    """Stage specs on every level, coefficients re-evaluated per level."""
    specs = []
    for j, (dm, static) in enumerate(zip(ctx.dofmaps, ctx.statics)):
        u_j = inject_to_level(ctx, j, u_sharp)
        vc_j = inject_to_level(ctx, j, vcirc)
        fine = j == len(ctx.dofmaps) - 1
        geo = ops.update_geometry(static, u_j)
        rho_q, eta_q = forms.material_fields(geo, gamma, tau, fluid, solid)
        specs.append(forms.build_stage_spec(
            geo, mode, gamma, tau, alphas, rho_q, eta_q, vc_j,
            vstar if fine else None, stabilize=stabilize,
            constrained_v=dm.vector_dofs(ctx.dirichlet_nodes[j]),
            pressure_pins=ctx.pressure_pins[j], u_sharp=u_j))
    return specs
