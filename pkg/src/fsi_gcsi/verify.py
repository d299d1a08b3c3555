"""Self-contained verification suites behind `fsi-gcsi verify`.

Each suite returns (name, passed, detail) rows; the CLI prints one
PASS/FAIL line per row. The suites exercise the same oracles the test
suite uses: exact BDF algebra, an assembled-matrix operator oracle,
manufactured solutions in space and time, and extension/statistics
identities.
"""

from __future__ import annotations

import numpy as np


def suite_bdf() -> list[tuple[str, bool, str]]:
    from . import stepper as stp
    rows = []
    s1 = stp.bdf_coefficients(1)
    ok = s1.gamma == 1.0 and s1.alphas == (-1.0,)
    rows.append(("bdf k=1 coefficients", ok,
                 f"gamma={s1.gamma}, alphas={s1.alphas}"))
    s2 = stp.bdf_coefficients(2)
    ok = s2.gamma == 2.0 / 3.0 and s2.alphas == (-4.0 / 3.0, 1.0 / 3.0)
    rows.append(("bdf k=2 coefficients", ok,
                 f"gamma={s2.gamma}, alphas={s2.alphas}"))
    tau = 0.1
    t = 2.0 + tau * np.arange(3)   # t-2tau, t-tau, t
    vals = t ** 2
    approx = (vals[2] + s2.alphas[0] * vals[1] + s2.alphas[1] * vals[0]) \
        / (s2.gamma * tau)
    err = abs(approx - 2.0 * t[2])
    rows.append(("bdf k=2 exact on t^2", err <= 1e-12, f"error {err:.2e}"))
    return rows


def suite_operator() -> list[tuple[str, bool, str]]:
    from . import forms, materials as mat, mesh as msh, multigrid as mg
    rows = []
    hier = msh.build_turek_hierarchy(msh.GeometryParams(), 1)
    ctx = mg.build_level_context(
        hier, dirichlet_tags=(msh.INFLOW, msh.WALLS, msh.CYLINDER))
    dm = ctx.fine
    fluid = mat.FluidParams(eta_f=1.0, rho_f=1.0e3)
    solid = mat.SolidParams(mu_s=0.5e6, rho_s=1.0e4)
    rng = np.random.default_rng(20260301)
    vc = rng.standard_normal(dm.nv)
    for mode, vcirc in ((forms.MODE_P, None), (forms.MODE_C, vc)):
        spec = mg.build_level_specs(ctx, mode, 2.0 / 3.0, 0.004,
                                    (-4.0 / 3.0, 1.0 / 3.0), fluid, solid,
                                    u_sharp=None, vcirc=vcirc)[-1]
        M = spec.assemble()
        worst = 0.0
        for _ in range(10):
            x = rng.standard_normal(dm.nblock)
            worst = max(worst, np.linalg.norm(spec.apply(x) - M @ x)
                        / np.linalg.norm(x))
        rows.append((f"matrix-free vs assembled ({mode} mode)",
                     worst <= 1e-12, f"max rel residual {worst:.2e}"))
    return rows


def suite_stokes() -> list[tuple[str, bool, str]]:
    from . import bench
    rows = bench.stokes_convergence((1, 2, 3))
    last = rows[-1]
    out = [("stokes velocity order >= 2.7", last["order_v"] >= 2.7,
            f"observed {last['order_v']:.2f}"),
           ("stokes pressure order >= 1.7", last["order_p"] >= 1.7,
            f"observed {last['order_p']:.2f}")]
    for j, row in zip((1, 2, 3), rows):
        out.append((f"stokes level {j} solve converged", row["converged"],
                    f"err_v={row['err_v']:.3e}, its={row['iterations']}"))
    return out


def suite_temporal() -> list[tuple[str, bool, str]]:
    from . import bench
    out = []
    for k, taus in ((1, (0.2, 0.1, 0.05, 0.025)),
                    (2, (0.05, 0.025, 0.0125, 0.00625))):
        errs = bench.ns_time_convergence(k, taus)
        slope = np.polyfit(np.log(taus), np.log(errs), 1)[0]
        out.append((f"temporal order k={k} within 0.3", abs(slope - k) <= 0.3,
                    f"slope {slope:.2f}, errors "
                    + ", ".join(f"{e:.2e}" for e in errs)))
    return out


def suite_extension() -> list[tuple[str, bool, str]]:
    from . import extension as ext, mesh as msh, multigrid as mg
    rows = []
    val = float(ext.mesh_stiffness(*ext.TRACK_POINT))
    rows.append(("mesh stiffness at the tip = 51", val == 51.0, f"{val!r}"))
    hier = msh.build_turek_hierarchy(msh.GeometryParams(), 1)
    ctx = mg.build_level_context(
        hier, dirichlet_tags=(msh.INFLOW, msh.WALLS, msh.CYLINDER))
    dm = ctx.fine
    prob = ext.ExtensionProblem(ctx)
    rng = np.random.default_rng(7)
    vs = [rng.standard_normal(dm.nv) for _ in range(2)]
    ws = [prob.domain_velocity(v, tol=1e-13) for v in vs]
    w_lin = prob.domain_velocity(2.0 * vs[0] - 3.0 * vs[1], tol=1e-13)
    err = np.linalg.norm(w_lin - (2.0 * ws[0] - 3.0 * ws[1])) \
        / np.linalg.norm(w_lin)
    rows.append(("extension linear to 1e-10", err <= 1e-10, f"rel {err:.2e}"))
    sd = dm.vector_dofs(dm.solid_nodes)
    err_i = np.abs(ws[0][sd] - vs[0][sd]).max()
    rows.append(("solid data reproduced exactly", err_i == 0.0,
                 f"max abs {err_i:.2e}"))
    return rows


def suite_oscillation() -> list[tuple[str, bool, str]]:
    from . import bench
    t = np.arange(0.0, 16.0, 0.005)
    y = 1.23e-3 + 80.77e-3 * np.sin(4.0 * np.pi * t)
    st = bench.oscillation_stats(t, y)
    rows = [("oscillation detected", st.detected, st.status)]
    for name, got, want in (("mean", st.mean, 1.23e-3),
                            ("amplitude", st.amplitude, 80.77e-3),
                            ("frequency", st.frequency, 2.0)):
        rel = abs(got - want) / abs(want)
        rows.append((f"oscillation {name} within 1%", rel <= 0.01,
                     f"got {got:.6g}, want {want:.6g}"))
    flat = bench.oscillation_stats(t, np.ones_like(t))
    rows.append(("constant signal rejected", not flat.detected, flat.status))
    return rows


def suite_contrast() -> list[tuple[str, bool, str]]:
    from . import bench
    rows = bench.contrast_sweep()
    its = [r["iterations"] for r in rows]
    ok = all(r["converged"] for r in rows) and max(its) <= 2 * min(its)
    detail = ", ".join(f"1e{int(np.log10(r['contrast']))}:{r['iterations']}"
                       for r in rows)
    return [("contrast sweep growth <= 2x", ok, detail)]


SUITES = {
    "bdf": suite_bdf,
    "operator": suite_operator,
    "stokes": suite_stokes,
    "temporal": suite_temporal,
    "extension": suite_extension,
    "oscillation": suite_oscillation,
    "contrast": suite_contrast,
}


def run_suite(name: str) -> int:
    """Run one suite (or 'all'); print PASS/FAIL lines; 0 iff all pass."""
    names = list(SUITES) if name == "all" else [name]
    if any(n not in SUITES for n in names):
        print(f"unknown suite {name!r}; choose from "
              f"{list(SUITES) + ['all']}")
        return 1
    failed = 0
    for n in names:
        for check, ok, detail in SUITES[n]():
            print(f"{'PASS' if ok else 'FAIL'}  {check}: {detail}",
                  flush=True)
            failed += 0 if ok else 1
    return 0 if failed == 0 else 1
