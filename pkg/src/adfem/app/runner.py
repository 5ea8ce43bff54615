"""Batch drivers behind the ``run``, ``verify`` and ``bench`` subcommands."""
from __future__ import annotations

import logging
import os
import time
from dataclasses import dataclass, field

import numpy as np

from .. import verify as vf
from ..assembly import JacobianMethod
from ..elements.kernels import FIELD_NAMES
from ..newton import newton_solve
from ..problems import l2_error, manufactured_exact, oldroydb_problem, poisson_problem
from . import output, plotting
from .config import CaseConfig
from .meshgen import generate_rect_mesh
from .meshio import read_mesh, write_fields

log = logging.getLogger(__name__)

CHANNEL_SETS = ("inflow", "outflow", "wall_top", "wall_bottom")


class AppError(RuntimeError):
    """Failure with a machine-readable code and a process exit status."""

    def __init__(self, code, message, status=1):
        super().__init__(message)
        self.code = code
        self.status = status


@dataclass
class RunResult:
    status: int
    summary: dict
    artifacts: dict = field(default_factory=dict)


def _out(cfg, name):
    os.makedirs(cfg.out, exist_ok=True)
    return os.path.join(cfg.out, name)


def build_mesh(cfg, order, nx=None, ny=None):
    spec = cfg.mesh
    if not spec.generated:
        mesh = read_mesh(spec.file)
        if mesh.order != order:
            raise AppError("E_MESH", f"{spec.file}: case needs an order-{order} mesh, file has order {mesh.order}", 3)
        return mesh
    if cfg.case == "poisson_square":
        return generate_rect_mesh(nx or spec.nx, ny or spec.ny, order, 1.0, 1.0)
    return generate_rect_mesh(nx or spec.nx, ny or spec.ny, order, spec.length, spec.height)


def _channel_problem(cfg, mesh, method=None):
    missing = [s for s in CHANNEL_SETS if s not in mesh.boundary]
    if missing:
        raise AppError("E_MESH", f"mesh lacks boundary set(s): {', '.join(missing)}", 3)
    return oldroydb_problem(mesh, cfg.params, cfg.expm, cfg.channel,
                            method or cfg.jacobian_method, cfg.threads)


def _totals(hist):
    asm = hist.initial_assembly_s + sum(r.assembly_s for r in hist.records)
    sol = sum(r.solve_s for r in hist.records)
    return asm, sol


def run_case(cfg: CaseConfig):
    """Solve the configured case and write fields, CSVs, report and figures."""
    t0 = time.perf_counter()
    summary = {"case": cfg.case, "jacobian_method": cfg.jacobian_method.value,
               "expm_policy": cfg.expm.small_norm_policy.value, "threads": cfg.threads, "seed": cfg.seed}
    if cfg.case == "poisson_square":
        levels = []
        for k in range(cfg.refinements):
            nx, ny = cfg.mesh.nx * 2 ** k, cfg.mesh.ny * 2 ** k
            mesh = build_mesh(cfg, 1, nx, ny)
            prob = poisson_problem(mesh, c=cfg.poisson_c, method=cfg.jacobian_method, threads=cfg.threads)
            u, hist = newton_solve(prob, prob.initial_guess(), cfg.newton)
            levels.append({"mesh": f"{nx}x{ny}", "l2_error": l2_error(mesh, u, manufactured_exact),
                           "iterations": hist.iterations, "converged": hist.converged})
        errs = [lv["l2_error"] for lv in levels]
        summary["levels"] = levels
        summary["l2_ratios"] = [a / b for a, b in zip(errs, errs[1:])]
        names, field_idx, label = ("u",), 0, "u"
    else:
        mesh = build_mesh(cfg, 2)
        prob = _channel_problem(cfg, mesh)
        u, hist = newton_solve(prob, np.zeros(prob.ndofs), cfg.newton)
        summary["weissenberg"] = cfg.weissenberg
        summary["mean_inflow_velocity"] = cfg.channel.mean_velocity()
        summary["params"] = vars(cfg.params)
        names, field_idx, label = FIELD_NAMES, 3, "u1"

    summary.update(converged=hist.converged, iterations=hist.iterations,
                   initial_residual=hist.initial_residual, final_residual=hist.final_residual,
                   empirical_order=hist.empirical_order(), message=hist.message,
                   ndofs=int(prob.ndofs), elements=int(mesh.n_elements))
    art = {
        "fields": _out(cfg, "fields.vtk"),
        "convergence_csv": _out(cfg, "convergence.csv"),
        "residuals_csv": _out(cfg, "residuals.csv"),
        "timing_csv": _out(cfg, "timing.csv"),
        "timing_txt": _out(cfg, "timing.txt"),
        "summary": _out(cfg, "summary.json"),
        "convergence_png": _out(cfg, "convergence.png"),
        "field_png": _out(cfg, "field.png"),
    }
    write_fields(art["fields"], mesh, u, names)
    output.write_convergence_csv(art["convergence_csv"], hist)
    output.write_residuals_csv(art["residuals_csv"], hist)
    asm, sol = _totals(hist)
    total = time.perf_counter() - t0
    entry = output.TimingEntry(cfg.jacobian_method.value, f"{mesh.n_elements} el", asm, sol, total, hist.iterations)
    output.write_timing_report(art["timing_csv"], art["timing_txt"], [entry])
    plotting.plot_convergence(art["convergence_png"], {cfg.jacobian_method.value: hist})
    ndf = len(names)
    plotting.plot_field(art["field_png"], mesh, u.reshape(-1, ndf)[:, field_idx], label)
    summary["timing"] = {"assembly_s": asm, "solve_s": sol, "total_s": total}
    output.write_json(art["summary"], summary)
    status = 0 if hist.converged else 5
    if not hist.converged:
        raise AppError("E_NO_CONVERGENCE", hist.message, status)
    return RunResult(status, summary, art)


def verify_case(cfg: CaseConfig):
    """Jacobian oracles, the singular-system regression and the spectral demo."""
    rng = np.random.default_rng(cfg.seed)
    rows = []
    m1 = generate_rect_mesh(8, 8, 1)
    pp = poisson_problem(m1, c=cfg.poisson_c)
    up = rng.normal(size=pp.ndofs)
    rep = {}
    for pair, tol in ((("ad_identity", "manual"), 1e-13), (("ad_identity", "fd_global"), 1e-5),
                      (("ad_identity", "ad_blocked"), 1e-13)):
        r = vf.compare_jacobians(pp, up, pair)
        rep["poisson:" + "/".join(pair)] = r.as_dict()
        rows.append(("poisson " + " vs ".join(pair), r.max_rel, tol, r.max_rel <= tol))

    mesh = build_mesh(cfg, 2)
    cp = _channel_problem(cfg, mesh, JacobianMethod.AD_IDENTITY)
    uc = rng.normal(0.0, 0.3, cp.ndofs)
    for pair, tol in ((("ad_identity", "ad_blocked"), 1e-13), (("ad_identity", "fd_global"), 1e-5)):
        r = vf.compare_jacobians(cp, uc, pair)
        rep["oldroydb:" + "/".join(pair)] = r.as_dict()
        rows.append(("oldroydb " + " vs ".join(pair), r.max_rel, tol, r.max_rel <= tol))

    sing = vf.reproduce_singular_system(mesh, cfg.params, cfg.channel, seed=cfg.seed)
    naive, fix = sing.outcomes["naive_identity"], sing.outcomes["taylor_fix"]
    rows.append(("naive_identity psi block max", naive.psi_block_max, 1e-14, naive.psi_block_max <= 1e-14))
    rows.append(("naive_identity LU singular", float(naive.singular), 1, naive.singular and not naive.solved))
    rows.append(("taylor_fix solves", float(fix.solved), 1, fix.solved and not fix.singular))
    rows.append(("taylor_fix psi block vs mass/lambda", fix.mass_error, 1e-10, fix.mass_error <= 1e-10))
    rep["singular_system"] = sing.as_dict()

    spec = vf.spectral_instability()
    rows.append(("spectral tangent deviation", spec.spectral_deviation, "> 1e3", spec.spectral_deviation > 1e3))
    rows.append(("scaling/squaring tangent deviation", spec.scaling_squaring_deviation, 1e-8,
                 spec.scaling_squaring_deviation <= 1e-8))
    rep["spectral"] = vars(spec)
    rep["seed"] = cfg.seed

    art = {"csv": _out(cfg, "verify.csv"), "json": _out(cfg, "verify.json")}
    output.write_checks_csv(art["csv"], rows)
    output.write_json(art["json"], rep)
    failed = [r[0] for r in rows if not r[3]]
    if failed:
        raise AppError("E_VERIFY", f"{len(failed)} check(s) failed: {', '.join(failed)}", 7)
    return RunResult(0, {"checks": len(rows), "failed": failed}, art)


def bench_case(cfg: CaseConfig):
    """Fit the AD cost ratio and tabulate matrix-calculation time per method and mesh."""
    b = cfg.bench
    alpha = vf.measure_alpha(p_values=b.p_values, trials=b.trials, elements=b.elements, seed=cfg.seed)
    entries, histories = [], {}
    for nx, ny in b.meshes:
        mesh = build_mesh(cfg, 2, nx, ny)
        for meth in b.methods:
            prob = _channel_problem(cfg, mesh, JacobianMethod(meth))
            t = time.perf_counter()
            u, hist = newton_solve(prob, np.zeros(prob.ndofs), cfg.newton)
            total = time.perf_counter() - t
            asm, sol = _totals(hist)
            entries.append(output.TimingEntry(meth, f"{nx}x{ny}", asm, sol, total, hist.iterations))
            histories[f"{meth} {nx}x{ny}"] = hist
    art = {
        "alpha_json": _out(cfg, "alpha.json"),
        "alpha_csv": _out(cfg, "alpha.csv"),
        "alpha_png": _out(cfg, "alpha.png"),
        "timing_csv": _out(cfg, "timing.csv"),
        "timing_txt": _out(cfg, "timing.txt"),
        "convergence_png": _out(cfg, "convergence.png"),
    }
    output.write_json(art["alpha_json"], alpha.as_dict())
    with open(art["alpha_csv"], "w") as fh:
        fh.write("strategy,p,ratio\n")
        for name, fit in alpha.fits.items():
            for p, r in zip(alpha.p_values, fit.ratios):
                fh.write(f"{name},{p},{r!r}\n")
    plotting.plot_alpha(art["alpha_png"], alpha)
    text = output.write_timing_report(art["timing_csv"], art["timing_txt"], entries)
    plotting.plot_convergence(art["convergence_png"], histories)
    summary = {name: {"alpha": f.alpha, "r2": f.r2, "inconclusive": f.inconclusive}
               for name, f in alpha.fits.items()}
    summary["timing"] = text
    return RunResult(0, summary, art)
