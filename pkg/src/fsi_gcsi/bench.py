"""Benchmark presets, config parsing, the run loop, and post-processing.

The channel benchmarks (fsi2i, fsi3i) run the full predictor/corrector
stepper on the cylinder-with-beam geometry and record the beam-tip
displacement, the solid volume, and per-stage iteration counts. Two
verification problems share the plumbing: a lid-driven cavity and a
two-material generalized Stokes problem with a manufactured solution,
used for convergence and contrast studies.

Config files are plain text, one "section.key = value" per line with
'#' comments; a "benchmark = <preset>" line picks the preset whose
values the remaining lines override.
"""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass

import numpy as np

from . import forms
from . import krylov as kry
from . import materials as mat
from . import mesh as msh
from . import multigrid as mg
from . import operators as ops
from . import stepper as stp
from . import vtk_io

CSV_NAME = "series.csv"


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# run configuration

@dataclass
class RunConfig:
    """Everything one run needs, preset-filled and override-patched."""

    benchmark: str
    geometry: msh.GeometryParams
    fluid: mat.FluidParams
    solid: mat.SolidParams
    v_in: float
    scheme: stp.GcsiConfig
    refine: int
    t_end: float
    output_every: int
    point: tuple[float, float]
    params_p: mg.SmootherParams
    params_c: mg.SmootherParams
    seed: int = 0
    out_dir: str = "out"


def _point_in_solid(g: msh.GeometryParams, x: float, y: float,
                    tol: float = 1e-9) -> bool:
    in_beam = (g.cx <= x <= g.cx + g.r + g.l + tol
               and abs(y - g.cy) <= g.h / 2 + tol)
    in_disk = (x - g.cx) ** 2 + (y - g.cy) ** 2 <= (g.r + tol) ** 2
    return in_beam or in_disk


def _validate(cfg: RunConfig) -> RunConfig:
    g = cfg.geometry
    positives = {
        "geometry.L": g.L, "geometry.H": g.H, "geometry.l": g.l,
        "geometry.h": g.h, "geometry.r": g.r,
        "fluid.eta_f": cfg.fluid.eta_f, "fluid.rho_f": cfg.fluid.rho_f,
        "solid.mu_s": cfg.solid.mu_s, "solid.rho_s": cfg.solid.rho_s,
        "run.t_end": cfg.t_end,
    }
    for key, val in positives.items():
        if not val > 0:
            raise ConfigError(f"{key} must be positive, got {val}")
    if cfg.v_in < 0:
        raise ConfigError(f"flow.v_in must be nonnegative, got {cfg.v_in}")
    if cfg.refine < 0 or cfg.output_every < 0:
        raise ConfigError("run.refine and run.output_every must be >= 0")
    if cfg.benchmark in ("fsi2i", "fsi3i") and \
            not _point_in_solid(g, *cfg.point):
        raise ConfigError(
            f"tracking point {cfg.point} lies outside the solid at rest")
    return cfg


# ---------------------------------------------------------------------------
# presets

def _preset_fsi2i() -> RunConfig:
    return RunConfig(
        benchmark="fsi2i",
        geometry=msh.GeometryParams(),
        fluid=mat.FluidParams(eta_f=1.0, rho_f=1.0e3),
        solid=mat.SolidParams(mu_s=0.5e6, rho_s=1.0e4),
        v_in=1.0,
        scheme=stp.GcsiConfig(k=2, tau=0.005, stages=("P", "C"), eta_V=0.1),
        refine=2,
        t_end=16.0,
        output_every=0,
        point=(0.6, 0.2),
        params_p=mg.SmootherParams.for_mode(forms.MODE_P),
        params_c=mg.SmootherParams.for_mode(forms.MODE_C),
    )


def _preset_fsi3i() -> RunConfig:
    cfg = _preset_fsi2i()
    return dataclasses.replace(
        cfg, benchmark="fsi3i",
        solid=mat.SolidParams(mu_s=2.0e6, rho_s=1.0e3), v_in=2.0,
        t_end=8.0)


def _preset_cavity() -> RunConfig:
    return RunConfig(
        benchmark="cavity",
        geometry=msh.GeometryParams(),
        fluid=mat.FluidParams(eta_f=1.0e-2, rho_f=1.0),
        solid=mat.SolidParams(mu_s=1.0, rho_s=1.0),
        v_in=1.0,
        scheme=stp.GcsiConfig(k=2, tau=0.05, stages=("P", "C"), eta_V=None),
        refine=2,
        t_end=2.5,
        output_every=0,
        point=(0.5, 0.5),
        params_p=mg.SmootherParams.for_mode(forms.MODE_P),
        params_c=mg.SmootherParams.for_mode(forms.MODE_C),
    )


def _preset_stokes() -> RunConfig:
    cfg = _preset_cavity()
    return dataclasses.replace(
        cfg, benchmark="stokes_manufactured",
        fluid=mat.FluidParams(eta_f=1.0, rho_f=1.0),
        solid=mat.SolidParams(mu_s=1.0e3, rho_s=1.0),
        v_in=0.0, refine=3, t_end=1.0,
        scheme=stp.GcsiConfig(k=1, tau=1.0, stages=("P",), eta_V=None))


PRESETS = {
    "fsi2i": _preset_fsi2i,
    "fsi3i": _preset_fsi3i,
    "cavity": _preset_cavity,
    "stokes_manufactured": _preset_stokes,
}


# ---------------------------------------------------------------------------
# config grammar: "section.key = value" lines, '#' comments

def _cast_bool(s: str) -> bool:
    if s == "true":
        return True
    if s == "false":
        return False
    raise ValueError("expected true or false")


def _cast_stages(s: str) -> tuple:
    return tuple(part.strip().upper() for part in s.split(","))


def _cast_opt_float(s: str):
    return None if s == "none" else float(s)


def _cast_tols(s: str):
    return None if s == "none" else tuple(float(p) for p in s.split(","))


# dotted key -> (component attribute on RunConfig or None, field, caster)
_KEYS: dict[str, tuple] = {}
for _f in ("L", "H", "l", "h", "cx", "cy", "r"):
    _KEYS[f"geometry.{_f}"] = ("geometry", _f, float)
for _f in ("eta_f", "rho_f"):
    _KEYS[f"fluid.{_f}"] = ("fluid", _f, float)
for _f in ("mu_s", "rho_s"):
    _KEYS[f"solid.{_f}"] = ("solid", _f, float)
_KEYS["flow.v_in"] = (None, "v_in", float)
_KEYS["scheme.k"] = ("scheme", "k", int)
_KEYS["scheme.tau"] = ("scheme", "tau", float)
_KEYS["scheme.stages"] = ("scheme", "stages", _cast_stages)
_KEYS["scheme.eta_v"] = ("scheme", "eta_V", _cast_opt_float)
_KEYS["scheme.tols"] = ("scheme", "tols", _cast_tols)
_KEYS["scheme.maxiter"] = ("scheme", "maxiter", int)
_KEYS["scheme.restart"] = ("scheme", "restart", int)
_KEYS["scheme.stabilize"] = ("scheme", "stabilize", _cast_bool)
for _sect, _attr in (("solver_p", "params_p"), ("solver_c", "params_c")):
    for _key, _fld, _c in (("k_a", "k_A", int), ("k_s", "k_S", int),
                           ("n_s", "n_S", int), ("m", "m", int),
                           ("n", "n", int), ("alpha_s", "alpha_S", float)):
        _KEYS[f"{_sect}.{_key}"] = (_attr, _fld, _c)
_KEYS["run.refine"] = (None, "refine", int)
_KEYS["run.t_end"] = (None, "t_end", float)
_KEYS["run.output_every"] = (None, "output_every", int)
_KEYS["run.out_dir"] = (None, "out_dir", str)
_KEYS["run.seed"] = (None, "seed", int)
_KEYS["track.x"] = ("point", 0, float)
_KEYS["track.y"] = ("point", 1, float)


def parse_config(text: str) -> RunConfig:
    """Parse config text into a validated RunConfig.

    Unknown keys, bad values, and a missing benchmark line are reported
    with their line numbers.
    """
    pairs = []
    benchmark = None
    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {ln}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key == "benchmark":
            if benchmark is not None:
                raise ConfigError(f"line {ln}: duplicate benchmark key")
            if value not in PRESETS:
                raise ConfigError(
                    f"line {ln}: unknown benchmark {value!r}; "
                    f"choose from {sorted(PRESETS)}")
            benchmark = value
            continue
        if key not in _KEYS:
            raise ConfigError(f"line {ln}: unknown key {key!r}")
        pairs.append((ln, key, value))
    if benchmark is None:
        raise ConfigError("missing required key: benchmark")

    cfg = PRESETS[benchmark]()
    comp = {
        "geometry": cfg.geometry, "fluid": cfg.fluid, "solid": cfg.solid,
        "scheme": cfg.scheme, "params_p": cfg.params_p,
        "params_c": cfg.params_c,
    }
    scalars = {"v_in": cfg.v_in, "refine": cfg.refine, "t_end": cfg.t_end,
               "output_every": cfg.output_every, "out_dir": cfg.out_dir,
               "seed": cfg.seed}
    point = list(cfg.point)
    for ln, key, value in pairs:
        target, field, cast = _KEYS[key]
        try:
            val = cast(value)
        except ValueError as exc:
            raise ConfigError(
                f"line {ln}: invalid value for {key}: {value!r} ({exc})")
        try:
            if target == "point":
                point[field] = val
            elif target is None:
                scalars[field] = val
            else:
                comp[target] = dataclasses.replace(comp[target],
                                                   **{field: val})
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"line {ln}: {key}: {exc}")
    return _validate(RunConfig(
        benchmark=benchmark, geometry=comp["geometry"], fluid=comp["fluid"],
        solid=comp["solid"], scheme=comp["scheme"],
        params_p=comp["params_p"], params_c=comp["params_c"],
        point=(point[0], point[1]), **scalars))


# ---------------------------------------------------------------------------
# profiles and probes

def inflow_profile_2d(y, v_in: float, H: float):
    """Parabolic inflow x-velocity with mean v_in across the height H.

    v_x = 6 v_in y (H - y) / H^2, v_y = 0; the peak at mid-height is
    1.5 v_in and the endpoints satisfy no-slip.
    """
    return 6.0 * v_in * y * (H - y) / H ** 2


def _inflow_block_values(dm, geometry: msh.GeometryParams,
                         v_in: float) -> np.ndarray:
    bv = np.zeros(dm.nblock)
    nodes = dm.boundary_nodes[msh.INFLOW]
    bv[nodes] = inflow_profile_2d(dm.q2_coords[nodes, 1], v_in, geometry.H)
    return bv


def _locate_tracking_node(dm, point) -> int:
    d = np.hypot(dm.q2_coords[:, 0] - point[0],
                 dm.q2_coords[:, 1] - point[1])
    node = int(np.argmin(d))
    if d[node] > 1e-9:
        raise ConfigError(
            f"tracking point {tuple(point)} is not a mesh node "
            f"(nearest is {d[node]:.3e} away)")
    return node


def solid_volume(static: ops.StaticCache, u: np.ndarray | None) -> float:
    """Current solid volume as the reference-domain integral of det F."""
    geo = ops.update_geometry(static, u)
    return ops.integrate_functional("reference_solid_volume", geo)


# ---------------------------------------------------------------------------
# time series and oscillation statistics

@dataclass
class TimeSeriesRecord:
    t: float
    ux_A: float
    uy_A: float
    solid_volume: float
    stage_iterations: tuple
    extension_iterations: int


@dataclass
class OscillationStats:
    """Mean/amplitude over the last full period, frequency from crossings."""

    mean: float
    amplitude: float
    frequency: float
    detected: bool

    @property
    def status(self) -> str:
        return "steady oscillations" if self.detected \
            else "no steady oscillations"


def oscillation_stats(t, signal, skip_fraction: float = 0.05) -> OscillationStats:
    """Post-process a displacement trace the way the benchmark tables do.

    The first skip_fraction of the span is dropped (startup transient of
    the impulsively started inflow). Zero crossings of the mean-removed
    signal are interpolated linearly; the frequency is the reciprocal of
    the gap between the last two same-direction crossings and the mean
    and amplitude are (max+min)/2 and (max-min)/2 over that last period.
    """
    t = np.asarray(t, dtype=float)
    y = np.asarray(signal, dtype=float)
    if len(t) >= 2 and skip_fraction > 0:
        keep = t >= t[0] + skip_fraction * (t[-1] - t[0])
        t, y = t[keep], y[keep]
    none = OscillationStats(np.nan, np.nan, np.nan, False)
    if len(t) < 3:
        return none
    yc = y - y.mean()
    sign_flip = (yc[:-1] * yc[1:]) < 0
    idx = np.nonzero(sign_flip)[0]
    if len(idx) < 3:
        return none
    frac = -yc[idx] / (yc[idx + 1] - yc[idx])
    t_cross = t[idx] + frac * (t[idx + 1] - t[idx])
    upward = yc[idx + 1] > yc[idx]
    last = len(idx) - 1
    prev = last - 1
    while prev >= 0 and upward[prev] != upward[last]:
        prev -= 1
    if prev < 0:
        return none
    period = t_cross[last] - t_cross[prev]
    window = (t >= t_cross[prev]) & (t <= t_cross[last])
    hi, lo = y[window].max(), y[window].min()
    return OscillationStats(mean=0.5 * (hi + lo), amplitude=0.5 * (hi - lo),
                            frequency=1.0 / period, detected=True)


# ---------------------------------------------------------------------------
# manufactured generalized Stokes (two-material stripe on the unit square)
#
# Stream function psi = S a(x) b(y) with a = (x(1-x))^2 and b carrying
# cubic factors at the stripe lines y = 0.4, 0.6, so the velocity and its
# full gradient vanish there and the viscosity jump costs no consistency.

STRIPE = (0.4, 0.6)
_AX = np.poly1d([-1.0, 1.0, 0.0]) ** 2
_BY = (np.poly1d([-1.0, 1.0, 0.0]) ** 2
       * np.poly1d([1.0, -STRIPE[0]]) ** 3
       * np.poly1d([-1.0, STRIPE[1]]) ** 3)
_AX1, _AX2, _AX3 = _AX.deriv(1), _AX.deriv(2), _AX.deriv(3)
_BY1, _BY2, _BY3 = _BY.deriv(1), _BY.deriv(2), _BY.deriv(3)
_SCALE = 3.6e4   # max |u| ~ 0.94


def stokes_exact_velocity(x, y):
    return _SCALE * _AX(x) * _BY1(y), -_SCALE * _AX1(x) * _BY(y)


def stokes_exact_pressure(x, y):
    return np.cos(np.pi * x) * np.cos(np.pi * y)


def _stokes_forcing(geo: ops.GeometryCache, eta_q: np.ndarray) -> np.ndarray:
    """f = u - eta lap(u) - grad p for unit reaction, per quadrature point."""
    x, y = geo.x[..., 0], geo.x[..., 1]
    u1, u2 = stokes_exact_velocity(x, y)
    lap1 = _SCALE * (_AX2(x) * _BY1(y) + _AX(x) * _BY3(y))
    lap2 = -_SCALE * (_AX3(x) * _BY(y) + _AX1(x) * _BY2(y))
    px = -np.pi * np.sin(np.pi * x) * np.cos(np.pi * y)
    py = -np.pi * np.cos(np.pi * x) * np.sin(np.pi * y)
    f1 = u1 - eta_q * lap1 - px
    f2 = u2 - eta_q * lap2 - py
    return np.stack([f1, f2], axis=-1)


def _stripe_context(level: int):
    base = msh.build_rect(5, 5, solid_predicate=lambda xc, yc:
                          STRIPE[0] < yc < STRIPE[1])
    hier = msh.build_hierarchy(base, level)
    return mg.build_level_context(
        hier, dirichlet_tags=(msh.INFLOW, msh.OUTFLOW, msh.WALLS),
        pin_pressure=True)


def stokes_stripe_solve(level: int, contrast: float = 1.0e3,
                        tol: float = 1.0e-10,
                        params: mg.SmootherParams | None = None) -> dict:
    """Solve the stripe problem at one level; report errors and iterations.

    The stage problem is posed with gamma tau = 1 and unit densities, so
    the solid's effective viscosity equals `contrast` times the fluid's.
    """
    ctx = _stripe_context(level)
    dm = ctx.fine
    fluid = mat.FluidParams(eta_f=1.0, rho_f=1.0)
    solid = mat.SolidParams(mu_s=contrast, rho_s=1.0)
    specs = mg.build_level_specs(ctx, forms.MODE_P, 1.0, 1.0, (-1.0,),
                                 fluid, solid, u_sharp=None, vcirc=None)
    spec = specs[-1]
    g_v = forms.rhs_velocity(spec, body_q=_stokes_forcing(spec.geo, spec.eta_q))
    g_p = forms.rhs_pressure(spec, None)
    b = forms.lift_dirichlet(spec, np.concatenate([g_v, g_p]),
                             np.zeros(dm.nblock))
    stack = mg.build_stack(specs, ctx.transfers,
                           params or mg.SmootherParams())
    res = kry.fgmres(stack.finest.op.apply, stack.precondition, b,
                     kry.KrylovConfig(tol=tol * np.linalg.norm(b)))
    v, p = res.x[:dm.nv], res.x[dm.nv:]

    geo = spec.geo
    err_v = ops.integrate_functional("l2_error_velocity", geo, state=v,
                                     exact=stokes_exact_velocity)
    # the pinned pressure is defined up to the pin; compare mean-adjusted
    pq = ops.eval_pressure_field(geo, p)
    vol = geo.jxw.sum()
    shift = (pq * geo.jxw).sum() / vol - \
        (stokes_exact_pressure(geo.x[..., 0], geo.x[..., 1])
         * geo.jxw).sum() / vol
    err_p = ops.integrate_functional(
        "l2_error_pressure", geo, state=p,
        exact=lambda X, Y: stokes_exact_pressure(X, Y) + shift)
    return {"h": 0.2 / 2 ** level, "err_v": err_v, "err_p": err_p,
            "iterations": res.iterations, "converged": res.converged}


def stokes_convergence(levels=(1, 2, 3), contrast: float = 1.0e3) -> list[dict]:
    """Errors on a level sweep plus observed orders between neighbours."""
    rows = [stokes_stripe_solve(j, contrast) for j in levels]
    for prev, cur in zip(rows, rows[1:]):
        cur["order_v"] = np.log2(prev["err_v"] / cur["err_v"])
        cur["order_p"] = np.log2(prev["err_p"] / cur["err_p"])
    return rows


def contrast_sweep(level: int = 2, contrasts=(1e1, 1e2, 1e3, 1e4),
                   tol: float = 1.0e-6) -> list[dict]:
    """Iteration counts of the same stripe problem across viscosity jumps."""
    rows = []
    for c in contrasts:
        r = stokes_stripe_solve(level, c, tol)
        rows.append({"contrast": c, "iterations": r["iterations"],
                     "converged": r["converged"], "err_v": r["err_v"]})
    return rows


# ---------------------------------------------------------------------------
# manufactured Navier-Stokes in time (fixed geometry, whole-boundary data)
#
# u = phi(t) (c y^2, c x^2) and p = phi(t) (x + y - 1) are exactly
# representable in the Q2/Q1 pair, so the measured error is temporal.

_NS_C = 0.25
_NS_ETA = 0.05
_NS_RHO = 1.0


def _ns_phi(t: float) -> float:
    return 1.0 + 0.5 * np.sin(2.0 * t)


def _ns_dphi(t: float) -> float:
    return np.cos(2.0 * t)


def ns_exact_velocity(t: float):
    s = _ns_phi(t) * _NS_C
    return lambda X, Y: (s * Y ** 2, s * X ** 2)


def _ns_nodal(dm, t: float) -> np.ndarray:
    x, y = dm.q2_coords[:, 0], dm.q2_coords[:, 1]
    return np.concatenate([_ns_phi(t) * _NS_C * y ** 2,
                           _ns_phi(t) * _NS_C * x ** 2])


def _ns_forcing(t: float, geo: ops.GeometryCache) -> np.ndarray:
    x, y = geo.x[..., 0], geo.x[..., 1]
    phi, dphi, c = _ns_phi(t), _ns_dphi(t), _NS_C
    conv = 2.0 * _NS_RHO * phi ** 2 * c ** 2
    f1 = _NS_RHO * dphi * c * y ** 2 + conv * x ** 2 * y \
        - 2.0 * c * phi * _NS_ETA - phi
    f2 = _NS_RHO * dphi * c * x ** 2 + conv * x * y ** 2 \
        - 2.0 * c * phi * _NS_ETA - phi
    return np.stack([f1, f2], axis=-1)


def ns_time_convergence(k: int, taus, level: int = 2,
                        t_end: float = 1.0) -> list[float]:
    """L2 velocity errors at t_end for a sweep of step sizes."""
    base = msh.build_rect(5, 5)
    hier = msh.build_hierarchy(base, level)
    ctx = mg.build_level_context(
        hier, dirichlet_tags=(msh.INFLOW, msh.OUTFLOW, msh.WALLS),
        pin_pressure=True)
    dm = ctx.fine
    static = ctx.statics[-1]
    fluid = mat.FluidParams(eta_f=_NS_ETA, rho_f=_NS_RHO)
    solid = mat.SolidParams(mu_s=1.0, rho_s=1.0)

    def boundary_values(t):
        bv = np.zeros(dm.nblock)
        nodes = np.unique(np.concatenate(
            [dm.boundary_nodes[tag] for tag in
             (msh.INFLOW, msh.OUTFLOW, msh.WALLS)]))
        exact = _ns_nodal(dm, t)
        bv[nodes] = exact[nodes]
        bv[dm.n2 + nodes] = exact[dm.n2 + nodes]
        return bv

    errors = []
    geo0 = ops.update_geometry(static, None)
    for tau in taus:
        scheme = stp.GcsiConfig(k=k, tau=tau, stages=("P", "C"),
                                eta_V=None, tols=(1e-10, 1e-10))
        stepper = stp.GcsiStepper(ctx, fluid, solid, scheme,
                                  boundary_values, body=_ns_forcing)
        zeros = [np.zeros(dm.nv) for _ in range(k)]
        history = stp.StateHistory(
            u=[z.copy() for z in zeros],
            v=[_ns_nodal(dm, -i * tau) for i in range(k)],
            w=[z.copy() for z in zeros])
        nsteps = int(round(t_end / tau))
        for _ in range(nsteps):
            stepper.run_step(history)
        errors.append(ops.integrate_functional(
            "l2_error_velocity", geo0, state=history.v[0],
            exact=ns_exact_velocity(nsteps * tau)))
    return errors


# ---------------------------------------------------------------------------
# the run loop

def problem_hierarchy(cfg: RunConfig) -> msh.MeshHierarchy:
    """The mesh stack a config implies, as used by the runners and `info`."""
    if cfg.benchmark in ("fsi2i", "fsi3i"):
        return msh.build_turek_hierarchy(cfg.geometry, cfg.refine)
    if cfg.benchmark == "cavity":
        return msh.build_hierarchy(msh.build_rect(8, 8), cfg.refine)
    base = msh.build_rect(5, 5, solid_predicate=lambda xc, yc:
                          STRIPE[0] < yc < STRIPE[1])
    return msh.build_hierarchy(base, cfg.refine)


def _write_row(fh, rec: TimeSeriesRecord) -> None:
    cells = [repr(rec.t), repr(rec.ux_A), repr(rec.uy_A),
             repr(rec.solid_volume)]
    cells += [str(i) for i in rec.stage_iterations]
    cells.append(str(rec.extension_iterations))
    fh.write(",".join(cells) + "\n")


def _csv_header(stages) -> str:
    its = ",".join(f"it_stage{i + 1}" for i in range(len(stages)))
    return f"t,ux_A,uy_A,solid_volume,{its},it_ext"


def _time_loop(cfg: RunConfig, ctx, boundary_values, verbose: bool) -> int:
    dm = ctx.fine
    static = ctx.statics[-1]
    node = _locate_tracking_node(dm, cfg.point)
    has_solid = bool(len(dm.solid_nodes))
    probe = lambda u: float(u[dm.n2 + node])
    stepper = stp.GcsiStepper(ctx, cfg.fluid, cfg.solid, cfg.scheme,
                              boundary_values, params_p=cfg.params_p,
                              params_c=cfg.params_c, probe=probe,
                              verbose=verbose)
    history = stp.initialize(cfg.scheme, dm.nv)
    nsteps = int(round(cfg.t_end / cfg.scheme.tau))
    os.makedirs(cfg.out_dir, exist_ok=True)
    csv_path = os.path.join(cfg.out_dir, CSV_NAME)
    last_t = 0.0
    with open(csv_path, "w", encoding="ascii") as fh:
        fh.write(_csv_header(cfg.scheme.stages) + "\n")
        for n in range(nsteps):
            report = stepper.run_step(history)
            if report.time <= last_t:
                raise stp.DivergenceError("time series not increasing",
                                          step=report.step)
            last_t = report.time
            tracked = history.u[0] if has_solid else history.v[0]
            rec = TimeSeriesRecord(
                t=report.time,
                ux_A=float(tracked[node]),
                uy_A=float(tracked[dm.n2 + node]),
                solid_volume=solid_volume(static, history.u[0])
                if has_solid else 0.0,
                stage_iterations=tuple(s.iterations for s in report.stages),
                extension_iterations=sum(s.extension_iterations
                                         for s in report.stages),
            )
            _write_row(fh, rec)
            fh.flush()
            if cfg.output_every and (n + 1) % cfg.output_every == 0:
                vtk_io.write_fields(
                    dm, history.v[0], stepper.last_p, history.u[0],
                    os.path.join(cfg.out_dir, f"fields_{n + 1:06d}.vtk"),
                    title=f"{cfg.benchmark} t={report.time!r}")
    return 0


def _run_channel(cfg: RunConfig, verbose: bool) -> int:
    ctx = mg.build_level_context(
        problem_hierarchy(cfg),
        dirichlet_tags=(msh.INFLOW, msh.WALLS, msh.CYLINDER))
    bv = _inflow_block_values(ctx.fine, cfg.geometry, cfg.v_in)
    return _time_loop(cfg, ctx, lambda t: bv, verbose)


def _run_cavity(cfg: RunConfig, verbose: bool) -> int:
    hier = problem_hierarchy(cfg)
    ctx = mg.build_level_context(
        hier, dirichlet_tags=(msh.INFLOW, msh.OUTFLOW, msh.WALLS),
        pin_pressure=True)
    dm = ctx.fine
    bv = np.zeros(dm.nblock)
    lid = dm.boundary_nodes[msh.WALLS]
    lid = lid[dm.q2_coords[lid, 1] > 1.0 - 1e-12]
    x = dm.q2_coords[lid, 0]
    # regularized lid: zero speed and slope at the corners
    bv[lid] = cfg.v_in * 16.0 * (x * (1.0 - x)) ** 2
    return _time_loop(cfg, ctx, lambda t: bv, verbose)


def _run_stokes_study(cfg: RunConfig, verbose: bool) -> int:
    contrast = cfg.solid.mu_s / cfg.fluid.eta_f
    rows = stokes_convergence(levels=tuple(range(1, cfg.refine + 1)),
                              contrast=contrast)
    print(f"manufactured generalized Stokes, viscosity contrast {contrast:g}")
    print(f"{'level':>5} {'h':>10} {'err_v':>12} {'order':>6} "
          f"{'err_p':>12} {'order':>6} {'iters':>5}")
    for j, row in zip(range(1, cfg.refine + 1), rows):
        ov = f"{row['order_v']:6.2f}" if "order_v" in row else "     -"
        op = f"{row['order_p']:6.2f}" if "order_p" in row else "     -"
        print(f"{j:>5} {row['h']:>10.4g} {row['err_v']:>12.4e} {ov} "
              f"{row['err_p']:>12.4e} {op} {row['iterations']:>5}")
    return 0


def run_benchmark(cfg: RunConfig, verbose: bool = False) -> int:
    """Execute a configured run; returns a process exit code.

    0 success, 1 bad configuration, 2 linear solver failure, 3 detected
    instability (partial time series is kept), 4 output I/O failure.
    For fluid-only problems the tracked columns ux_A/uy_A carry velocity
    (the pseudo-displacement is identically zero there).
    """
    runners = {
        "fsi2i": _run_channel,
        "fsi3i": _run_channel,
        "cavity": _run_cavity,
        "stokes_manufactured": _run_stokes_study,
    }
    try:
        return runners[cfg.benchmark](cfg, verbose)
    except ConfigError as exc:
        print(f"config error: {exc}", flush=True)
        return 1
    except (kry.SolverFailure, kry.KrylovBreakdownError) as exc:
        print(f"solver failure: {exc}", flush=True)
        return 2
    except stp.DivergenceError as exc:
        print(f"instability detected: {exc}", flush=True)
        return 3
    except OSError as exc:
        print(f"i/o failure: {exc}", flush=True)
        return 4
