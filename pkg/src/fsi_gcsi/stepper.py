"""BDF schemes and the predictor/corrector stage loop over one time step.

A step advances (u, v, w) by solving one saddle problem per stage on the
explicitly predicted geometry, then extending the new velocity into the
fluid mesh and recovering the displacement from the BDF identity. The
stage modes differ only in how the convective field is chosen: P
extrapolates it from history, C freezes the most recent stage velocity.
"""

from __future__ import annotations

import hashlib
import struct
import time
from dataclasses import dataclass, field

import numpy as np

from . import forms
from . import krylov as kry
from . import materials as mat
from . import mesh as msh
from . import multigrid as mg
from . import operators as ops
from .extension import ExtensionProblem

DIVERGENCE_FACTOR = 1.0e3
DIVERGENCE_FLOOR = 1.0e-3   # reference speed for runs with no inflow scale
CHECKPOINT_MAGIC = b"GCSICKPT"


class DivergenceError(RuntimeError):
    """The run left the stable regime: velocity blow-up or a tangled mesh."""

    def __init__(self, message: str, step: int | None = None):
        super().__init__(message)
        self.step = step


@dataclass(frozen=True)
class BdfScheme:
    k: int
    gamma: float
    alphas: tuple


def bdf_coefficients(k: int) -> BdfScheme:
    """Backward-differentiation coefficients; alpha_0 = 1 is implicit."""
    if k == 1:
        return BdfScheme(1, 1.0, (-1.0,))
    if k == 2:
        return BdfScheme(2, 2.0 / 3.0, (-4.0 / 3.0, 1.0 / 3.0))
    raise ValueError(f"unsupported BDF order {k}")


@dataclass
class StateHistory:
    """Ring buffer of the last k states, newest first.

    u[i], v[i], w[i] hold the coefficient vectors of step n-1-i when the
    completed-step counter is n. All fields live on the reference mesh.
    """

    u: list
    v: list
    w: list
    step: int = 0

    @property
    def depth(self) -> int:
        return len(self.u)

    def push(self, u: np.ndarray, v: np.ndarray, w: np.ndarray) -> None:
        self.u = [u] + self.u[:-1]
        self.v = [v] + self.v[:-1]
        self.w = [w] + self.w[:-1]
        self.step += 1

    def copy(self) -> "StateHistory":
        return StateHistory([x.copy() for x in self.u],
                            [x.copy() for x in self.v],
                            [x.copy() for x in self.w], self.step)


@dataclass
class GcsiConfig:
    """Scheme order, step size, stage sequence, and per-stage tolerances."""

    k: int = 2
    tau: float = 0.004
    stages: tuple = ("P", "C")
    eta_V: float | None = None     # None or inf disables the correction
    tols: tuple | None = None      # per-stage relative FGMRES tolerance
    maxiter: int = 500
    restart: int = 60
    stabilize: bool = True

    def __post_init__(self):
        self.stages = tuple(self.stages)
        if self.k not in (1, 2):
            raise ValueError("k must be 1 or 2")
        if self.tau <= 0.0:
            raise ValueError("tau must be positive")
        if not self.stages:
            raise ValueError("at least one stage is required")
        for s in self.stages:
            if s not in (forms.MODE_P, forms.MODE_C):
                raise ValueError(f"unknown stage mode {s!r}")
        if self.eta_V is not None and not np.isinf(self.eta_V) \
                and self.eta_V <= 0.0:
            raise ValueError("eta_V must be positive or disabled")
        if self.tols is not None:
            self.tols = tuple(self.tols)
            if len(self.tols) != len(self.stages):
                raise ValueError("one tolerance per stage expected")

    @property
    def stage_tols(self) -> tuple:
        return self.tols if self.tols is not None \
            else (1e-6,) * len(self.stages)

    @property
    def volume_eta(self) -> float | None:
        if self.eta_V is None or np.isinf(self.eta_V):
            return None
        return self.eta_V

    def scheme(self) -> BdfScheme:
        return bdf_coefficients(self.k)

    def fingerprint(self) -> bytes:
        """Stable 16-byte digest of everything a checkpoint must agree on."""
        eta = "off" if self.volume_eta is None else self.volume_eta.hex()
        text = "|".join([
            str(self.k), self.tau.hex(), ",".join(self.stages), eta,
            ",".join(t.hex() for t in self.stage_tols),
            str(self.maxiter), str(self.restart), str(self.stabilize),
        ])
        return hashlib.sha256(text.encode()).digest()[:16]


@dataclass
class StageReport:
    mode: str
    iterations: int
    residual: float
    extension_iterations: int = 0
    min_detF: float = 1.0


@dataclass
class StepReport:
    step: int
    time: float
    stages: list = field(default_factory=list)
    min_detF: float = 1.0
    wall_time: float = 0.0

    def progress_line(self, tip: float = 0.0) -> str:
        its = " ".join(f"{s.mode}:{s.iterations}" for s in self.stages)
        return (f"step {self.step:6d}  t={self.time:9.4f}  [{its}]  "
                f"tip_y={tip:+.6e}  detF>{self.min_detF:.3f}  "
                f"{self.wall_time:.2f}s")


def predict_displacement(history: StateHistory, w_sharp: np.ndarray,
                         scheme: BdfScheme, tau: float) -> np.ndarray:
    """u# = gamma tau w# - sum_i alpha_i u^{n-i}."""
    u = scheme.gamma * tau * w_sharp
    for alpha, u_old in zip(scheme.alphas, history.u):
        u = u - alpha * u_old
    return u


def history_velocity_sum(history: StateHistory, scheme: BdfScheme) -> np.ndarray:
    """BDF tail sum_i alpha_i v^{n-i} moved to the right-hand side."""
    acc = scheme.alphas[0] * history.v[0]
    for alpha, v_old in zip(scheme.alphas[1:], history.v[1:]):
        acc = acc + alpha * v_old
    return acc


def initialize(config: GcsiConfig, nv: int, u0: np.ndarray | None = None,
               v0: np.ndarray | None = None,
               w0: np.ndarray | None = None) -> StateHistory:
    """History padded with k copies of the t=0 state (first step is BDF1)."""
    u0 = np.zeros(nv) if u0 is None else np.asarray(u0, dtype=float)
    v0 = np.zeros(nv) if v0 is None else np.asarray(v0, dtype=float)
    w0 = np.zeros(nv) if w0 is None else np.asarray(w0, dtype=float)
    k = config.k
    return StateHistory([u0.copy() for _ in range(k)],
                        [v0.copy() for _ in range(k)],
                        [w0.copy() for _ in range(k)])


class GcsiStepper:
    """Owns the level hierarchy, materials, and extension for one run.

    boundary_values(t) must return a full block vector whose entries at
    the Dirichlet dofs carry the prescribed velocity; body(t, geo), when
    given, returns a per-quadrature-point force density.
    """

    def __init__(self, ctx, fluid: mat.FluidParams, solid: mat.SolidParams,
                 config: GcsiConfig, boundary_values, body=None,
                 params_p: mg.SmootherParams | None = None,
                 params_c: mg.SmootherParams | None = None,
                 probe=None, verbose: bool = False):
        self.ctx = ctx
        self.fluid = fluid
        self.solid = solid
        self.config = config
        self.scheme = bdf_coefficients(config.k)
        self.boundary_values = boundary_values
        self.body = body
        self.params = {
            forms.MODE_P: params_p or mg.SmootherParams.for_mode(forms.MODE_P),
            forms.MODE_C: params_c or mg.SmootherParams.for_mode(forms.MODE_C),
        }
        self.probe = probe
        self.verbose = verbose
        dm = ctx.fine
        self.has_solid = bool(len(dm.solid_nodes))
        self.extension = ExtensionProblem(ctx) if self.has_solid else None
        self.last_p = np.zeros(dm.n1)
        self._recent_v = np.zeros(dm.nv)
        bv = np.asarray(boundary_values(config.tau))
        self.inflow_scale = float(np.abs(bv[:dm.nv]).max())
        self._vref = None

    # ------------------------------------------------------------------
    def stage_solve(self, mode: str, u_sharp: np.ndarray | None,
                    w_sharp: np.ndarray, history: StateHistory, t: float,
                    tol: float = 1e-6):
        """One linear stage on the predicted geometry.

        Returns (v, p, StageReport). Raises MeshTangledError from the
        geometry update and SolverFailure when FGMRES hits its cap.
        """
        cfg = self.config
        dm = self.ctx.fine
        vcirc, vstar = forms.convective_fields(
            mode, history.v, history.w, w_sharp, self._recent_v, cfg.k)
        specs = mg.build_level_specs(
            self.ctx, mode, self.scheme.gamma, cfg.tau, self.scheme.alphas,
            self.fluid, self.solid, u_sharp, vcirc, vstar,
            stabilize=cfg.stabilize)
        spec = specs[-1]
        stack = mg.build_stack(specs, self.ctx.transfers, self.params[mode])

        sigma_q = self._explicit_stress(spec, u_sharp, w_sharp)
        body_q = self.body(t, spec.geo) if self.body is not None else None
        g_v = forms.rhs_velocity(spec, history_velocity_sum(history, self.scheme),
                                 sigma_expl_q=sigma_q, body_q=body_q)
        g_p = forms.rhs_pressure(spec, cfg.volume_eta)
        bv = np.asarray(self.boundary_values(t))
        b = forms.lift_dirichlet(spec, np.concatenate([g_v, g_p]), bv)

        x0 = np.concatenate([self._recent_v, self.last_p])
        x0[spec.constrained_block] = bv[spec.constrained_block]
        res = kry.fgmres(stack.finest.op.apply, stack.precondition, b,
                         kry.KrylovConfig(tol=tol * np.linalg.norm(b),
                                          maxiter=cfg.maxiter,
                                          restart=cfg.restart), x0=x0)
        if not res.converged:
            raise kry.SolverFailure(
                f"stage {mode} FGMRES hit the iteration cap", res.residuals)
        v, p = res.x[:dm.nv], res.x[dm.nv:]
        report = StageReport(mode, res.iterations, res.residuals[-1],
                             min_detF=float(spec.geo.detF.min()))
        return v, p, report

    def _explicit_stress(self, spec, u_sharp, w_sharp):
        """mu_s (2 eps(u# - gamma tau w#) - (grad u#)^T grad u#) on the solid.

        The current-configuration identity sigma = mu_s(2 eps(u) -
        (grad u)^T grad u) is exact for this material, so the remainder
        after extracting the implicit gamma tau mu_s eps(v) part is the
        stress at the predictor corrected by the history combination.
        """
        if not self.has_solid:
            return None
        geo = spec.geo
        is_solid = geo.dofmap.mesh.subdomain == msh.SOLID
        d = -self.scheme.gamma * self.config.tau * w_sharp
        if u_sharp is not None:
            d = u_sharp + d
        _, grad_d = ops.eval_vector_field(geo, d)
        hist = grad_d + np.swapaxes(grad_d, -1, -2)
        sigma = mat.solid_explicit_stress(geo.grad_u, hist, self.solid.mu_s)
        sigma[~is_solid] = 0.0
        return sigma

    # ------------------------------------------------------------------
    def run_step(self, history: StateHistory):
        """Advance one step in place; returns the new state's StepReport."""
        cfg = self.config
        t_new = (history.step + 1) * cfg.tau
        t0 = time.perf_counter()
        if self._vref is None:
            self._vref = max(self.inflow_scale,
                             float(np.abs(history.v[0]).max()),
                             DIVERGENCE_FLOOR)
        w_sharp = history.w[0].copy()
        self._recent_v = history.v[0]
        report = StepReport(history.step + 1, t_new)
        v = history.v[0]
        p = self.last_p
        try:
            for mode, tol in zip(cfg.stages, cfg.stage_tols):
                u_sharp = predict_displacement(history, w_sharp,
                                               self.scheme, cfg.tau)
                v, p, stage_rep = self.stage_solve(
                    mode, u_sharp if self.has_solid else None, w_sharp,
                    history, t_new, tol)
                report.min_detF = min(report.min_detF, stage_rep.min_detF)
                if self.has_solid:
                    w_sharp = self.extension.domain_velocity(v)
                    stage_rep.extension_iterations = \
                        self.extension.last_iterations
                self._recent_v = v
                report.stages.append(stage_rep)
        except ops.MeshTangledError as exc:
            raise DivergenceError(f"mesh tangled: {exc}",
                                  step=history.step + 1) from exc
        u_new = predict_displacement(history, w_sharp, self.scheme, cfg.tau)
        vmax = float(np.abs(v).max())
        if not np.isfinite(vmax) or vmax > DIVERGENCE_FACTOR * self._vref:
            raise DivergenceError(
                f"velocity blow-up: |v|_inf = {vmax:.3e}",
                step=history.step + 1)
        history.push(u_new, v, w_sharp)
        self.last_p = p
        report.wall_time = time.perf_counter() - t0
        if self.verbose:
            tip = self.probe(u_new) if self.probe is not None else 0.0
            print(report.progress_line(tip), flush=True)
        return report


# ---------------------------------------------------------------------------
# checkpointing

def save_checkpoint(path, history: StateHistory, config: GcsiConfig,
                    pressure: np.ndarray) -> None:
    """Raw little-endian doubles with a short header; see load_checkpoint."""
    u0 = history.u[0]
    header = CHECKPOINT_MAGIC + config.fingerprint() + struct.pack(
        "<QQQQ", history.step, history.depth, len(u0), len(pressure))
    with open(path, "wb") as fh:
        fh.write(header)
        for group in (history.u, history.v, history.w):
            for vec in group:
                fh.write(np.asarray(vec, dtype="<f8").tobytes())
        fh.write(np.asarray(pressure, dtype="<f8").tobytes())


def load_checkpoint(path, config: GcsiConfig):
    """Returns (StateHistory, pressure); refuses mismatched configurations."""
    with open(path, "rb") as fh:
        blob = fh.read()
    m = len(CHECKPOINT_MAGIC)
    if blob[:m] != CHECKPOINT_MAGIC:
        raise ValueError("not a checkpoint file")
    if blob[m:m + 16] != config.fingerprint():
        raise ValueError("checkpoint was written with a different configuration")
    step, depth, nv, n1 = struct.unpack_from("<QQQQ", blob, m + 16)
    off = m + 16 + 32
    vecs = []
    for _ in range(3 * depth):
        vecs.append(np.frombuffer(blob, dtype="<f8", count=nv,
                                  offset=off).astype(float))
        off += 8 * nv
    pressure = np.frombuffer(blob, dtype="<f8", count=n1,
                             offset=off).astype(float)
    history = StateHistory(vecs[:depth], vecs[depth:2 * depth],
                           vecs[2 * depth:], step)
    return history, pressure
