"""Stage operator and right-hand sides of the semi-implicit stage problem.

One stage solves the generalized Oseen-type saddle problem
    [[A, B^T], [B, 0]] (v, p) = (g_v, g_p)
on the predicted geometry. In P mode the convection is fully explicit
(A symmetric); in C mode the convection (grad v) v_circ stays in the
operator with v_circ frozen. The streamline term acts on the unknown in
both modes with the mode's own v_circ.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import mesh as msh
from . import operators as ops
from .materials import FluidParams, SolidParams, effective_viscosity

MODE_P = "P"
MODE_C = "C"


def convective_fields(mode: str, history_v: list[np.ndarray],
                      history_w: list[np.ndarray], w_sharp: np.ndarray,
                      v_recent: np.ndarray, k: int):
    """Coefficient vectors (v_circ, v_star) for one stage.

    history_v/history_w hold the newest-first past steps; all fields live
    on the reference mesh so the ALE compositions reduce to coefficient
    arithmetic. In C mode v_star is the implicit unknown and None is
    returned for it.
    """
    if mode == MODE_C:
        return v_recent - w_sharp, None
    if k == 1:
        return history_v[0] - w_sharp, history_v[0].copy()
    if k == 2:
        vcirc = 2.0 * (history_v[0] - w_sharp) - (history_v[1] - history_w[0])
        vstar = 2.0 * history_v[0] - history_v[1]
        return vcirc, vstar
    raise ValueError(f"unsupported BDF order {k}")


def stab_parameter(h_cell: np.ndarray, vnorm_cell: np.ndarray,
                   eta_cell: np.ndarray, p1: int = 2) -> np.ndarray:
    """Streamline stabilization parameter r per cell with Peclet cutoff.

    Pe = |v| h / (2 eta p1); r = 0 for Pe < 1, else
    r = h / (2 |v| p1) (coth Pe - 1/Pe).
    """
    with np.errstate(divide="ignore", invalid="ignore"):
        pe = vnorm_cell * h_cell / (2.0 * eta_cell * p1)
        r = h_cell / (2.0 * vnorm_cell * p1) * (1.0 / np.tanh(pe) - 1.0 / pe)
    r[~np.isfinite(r)] = 0.0
    r[pe < 1.0] = 0.0
    return r


def material_fields(geo: ops.GeometryCache, gamma: float, tau: float,
                    fluid: FluidParams, solid: SolidParams):
    """Per-quadrature-point (rho, eta) from the subdomain tags."""
    mesh = geo.dofmap.mesh
    nq = geo.jxw.shape[1]
    is_solid = (mesh.subdomain == msh.SOLID)[:, None]
    is_solid = np.broadcast_to(is_solid, (mesh.num_cells, nq))
    rho = np.where(is_solid, solid.rho_s, fluid.rho_f).astype(float)
    eta = effective_viscosity(is_solid, gamma, tau, fluid.eta_f, solid.mu_s)
    return rho, eta


@dataclass
class StageOperatorSpec:
    """Everything defining one linear stage problem on one level."""

    mode: str
    geo: ops.GeometryCache
    gamma: float
    tau: float
    alphas: tuple
    rho_q: np.ndarray
    eta_q: np.ndarray
    react_q: np.ndarray | None
    vcirc_q: np.ndarray
    vcirc_coeffs: np.ndarray
    vstar_coeffs: np.ndarray | None
    r_cell: np.ndarray | None
    constrained_v: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    pressure_pins: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    @property
    def dofmap(self):
        return self.geo.dofmap

    @property
    def conv_rho_q(self):
        return self.rho_q if self.mode == MODE_C else None

    @property
    def constrained_block(self) -> np.ndarray:
        return np.concatenate([self.constrained_v,
                               2 * self.dofmap.n2 + self.pressure_pins])

    # velocity block -------------------------------------------------------
    def apply_A_raw(self, xv: np.ndarray) -> np.ndarray:
        return ops.apply_velocity_block(
            self.geo, self.eta_q, self.react_q, self.conv_rho_q,
            self.vcirc_q, self.r_cell, xv)

    def apply_A(self, xv: np.ndarray) -> np.ndarray:
        return ops.eliminate(self.apply_A_raw, self.constrained_v)(xv)

    def diag_A(self) -> np.ndarray:
        d = ops.diag_velocity_block(self.geo, self.eta_q, self.react_q,
                                    self.conv_rho_q, self.vcirc_q, self.r_cell)
        d[self.constrained_v] = 1.0
        return d

    # off-diagonal blocks --------------------------------------------------
    def apply_B(self, xv: np.ndarray) -> np.ndarray:
        xm = xv.copy()
        xm[self.constrained_v] = 0.0
        y = ops.apply_div(self.geo, xm)
        y[self.pressure_pins] = 0.0
        return y

    def apply_BT(self, xp: np.ndarray) -> np.ndarray:
        xm = xp.copy()
        xm[self.pressure_pins] = 0.0
        y = ops.apply_grad(self.geo, xm)
        y[self.constrained_v] = 0.0
        return y

    def schur_diag(self) -> np.ndarray:
        d = ops.schur_diag(self.geo, self.diag_A(), self.constrained_v)
        d[self.pressure_pins] = 1.0
        return d

    # full block operator --------------------------------------------------
    def apply_raw(self, x: np.ndarray) -> np.ndarray:
        nv = self.dofmap.nv
        xv, xp = x[:nv], x[nv:]
        yv = ops.apply_velocity_block(self.geo, self.eta_q, self.react_q,
                                      self.conv_rho_q, self.vcirc_q,
                                      self.r_cell, xv) + ops.apply_grad(self.geo, xp)
        yp = ops.apply_div(self.geo, xv)
        return np.concatenate([yv, yp])

    def apply(self, x: np.ndarray) -> np.ndarray:
        return ops.eliminate(self.apply_raw, self.constrained_block)(x)

    def assemble(self, constrained: bool = True, guard: int = ops.ASSEMBLY_GUARD):
        """Assembled sparse oracle of the same forms and constraints."""
        return ops.assemble_saddle(
            self.geo, self.eta_q, self.react_q, self.conv_rho_q, self.vcirc_q,
            self.r_cell, self.constrained_block if constrained else None, guard)

    def compile(self) -> ops.CompiledOperator:
        """Cache cell-local blocks for the smoother's inner loops."""
        return ops.compile_operator(
            self.geo, self.eta_q, self.react_q, self.conv_rho_q, self.vcirc_q,
            self.r_cell, self.constrained_v, self.pressure_pins)


def build_stage_spec(geo: ops.GeometryCache, mode: str, gamma: float, tau: float,
                     alphas: tuple, rho_q: np.ndarray, eta_q: np.ndarray,
                     vcirc_coeffs: np.ndarray | None,
                     vstar_coeffs: np.ndarray | None,
                     stabilize: bool = True,
                     constrained_v=None, pressure_pins=None,
                     with_reaction: bool = True,
                     u_sharp: np.ndarray | None = None) -> StageOperatorSpec:
    """Evaluate coefficient fields at quadrature points and build the spec."""
    dm = geo.dofmap
    if vcirc_coeffs is None:
        vcirc_coeffs = np.zeros(dm.nv)
    vcirc_q, _ = ops.eval_vector_field(geo, vcirc_coeffs)
    react_q = rho_q / (gamma * tau) if with_reaction else None
    r_cell = None
    if stabilize:
        disp = None
        if u_sharp is not None:
            nvert = dm.mesh.num_vertices
            disp = np.stack([u_sharp[:dm.n2][:nvert],
                             u_sharp[dm.n2:][:nvert]], axis=1)
        h = dm.mesh.cell_diameters(disp)
        vnorm = np.linalg.norm(vcirc_q, axis=2).max(axis=1)
        r_cell = stab_parameter(h, vnorm, eta_q[:, 0])
    return StageOperatorSpec(
        mode, geo, gamma, tau, tuple(alphas), rho_q, eta_q, react_q,
        vcirc_q, vcirc_coeffs, vstar_coeffs, r_cell,
        np.asarray(constrained_v if constrained_v is not None else [], dtype=np.int64),
        np.asarray(pressure_pins if pressure_pins is not None else [], dtype=np.int64))


# ---------------------------------------------------------------------------
# scalar form evaluations (test and verification API)

def form_a(spec: StageOperatorSpec, v: np.ndarray, phi: np.ndarray) -> float:
    """Operator part of a_M: reaction + viscous (+ C convection + streamline)."""
    return float(phi @ spec.apply_A_raw(v))


def form_b(geo: ops.GeometryCache, v: np.ndarray, q: np.ndarray) -> float:
    """(div v, q) on the deformed configuration."""
    return float(q @ ops.apply_div(geo, v))


def add_streamline_term(spec: StageOperatorSpec, v: np.ndarray,
                        phi: np.ndarray) -> float:
    """Value of the streamline Gram term alone."""
    if spec.r_cell is None:
        return 0.0
    y = ops.apply_velocity_block(spec.geo, np.zeros_like(spec.eta_q), None,
                                 None, spec.vcirc_q, spec.r_cell, v)
    return float(phi @ y)


# ---------------------------------------------------------------------------
# right-hand sides

def rhs_velocity(spec: StageOperatorSpec,
                 history_sum: np.ndarray | None = None,
                 sigma_expl_q: np.ndarray | None = None,
                 body_q: np.ndarray | None = None,
                 traction=None, neumann_facets=None) -> np.ndarray:
    """Velocity-block functional g_v (raw, before Dirichlet lifting).

    history_sum: coefficient vector sum_i alpha_i v^{n,i} (the BDF tail);
    sigma_expl_q: explicit solid stress at quadrature points (zero outside
    the solid); body_q: force density per unit volume at quadrature points.
    In P mode the explicit convection -(rho (grad v*) v_circ, psi) is added
    from the spec's own v_star/v_circ fields.
    """
    geo = spec.geo
    g = np.zeros(spec.dofmap.nv)
    src = None
    if history_sum is not None:
        hist_q, _ = ops.eval_vector_field(geo, history_sum)
        src = -(spec.rho_q / (spec.gamma * spec.tau))[..., None] * hist_q
    if spec.mode == MODE_P and spec.vstar_coeffs is not None:
        _, gstar = ops.eval_vector_field(geo, spec.vstar_coeffs)
        adv = np.matmul(gstar, spec.vcirc_q[..., None])[..., 0]
        term = -spec.rho_q[..., None] * adv
        src = term if src is None else src + term
    if body_q is not None:
        src = body_q if src is None else src + body_q
    if src is not None:
        g += ops.integrate_against_velocity(geo, src)
    if sigma_expl_q is not None:
        g -= ops.integrate_against_velocity_gradient(geo, sigma_expl_q)
    if traction is not None and neumann_facets is not None and len(neumann_facets):
        g += ops.facet_velocity_rhs(spec.dofmap, neumann_facets, traction)
    return g


def rhs_pressure(spec: StageOperatorSpec, eta_V: float | None) -> np.ndarray:
    """Volume-correction functional -(1/eta_V)(J# - 1, q) on the reference solid.

    eta_V = None disables the correction (returns zeros). J# is evaluated
    from the geometry cache's deformation gradient.
    """
    dm = spec.dofmap
    if eta_V is None:
        return np.zeros(dm.n1)
    if eta_V <= 0:
        raise ValueError("eta_V must be positive or None")
    solid = dm.mesh.subdomain == msh.SOLID
    g_q = np.where(solid[:, None], -(spec.geo.detF - 1.0) / eta_V, 0.0)
    gp = ops.integrate_against_pressure(spec.geo, g_q, reference_measure=True)
    gp[spec.pressure_pins] = 0.0
    return gp


def lift_dirichlet(spec: StageOperatorSpec, g: np.ndarray,
                   boundary_values: np.ndarray) -> np.ndarray:
    """Fold inhomogeneous Dirichlet data into the eliminated system's RHS.

    boundary_values is a full block vector, nonzero only at constrained
    dofs. The eliminated operator then solves for the free part while the
    constrained part reproduces boundary_values exactly.
    """
    con = spec.constrained_block
    b = g - spec.apply_raw(boundary_values)
    b[con] = boundary_values[con]
    return b
