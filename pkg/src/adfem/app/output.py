"""Delimited and JSON report files."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np


def write_convergence_csv(path, history):
    """One row per Newton iteration: iteration,residual_norm,assembly_s,solve_s."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "residual_norm", "assembly_s", "solve_s"])
        for r in history.records:
            w.writerow([r.iteration, repr(r.residual_norm), f"{r.assembly_s:.6f}", f"{r.solve_s:.6f}"])


def write_residuals_csv(path, history):
    """Timing-free convergence record; byte-identical across serial reruns."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "residual_norm", "linear_iterations"])
        w.writerow([0, repr(history.initial_residual), 0])
        for r in history.records:
            w.writerow([r.iteration, repr(r.residual_norm), r.linear_iterations])


@dataclass
class TimingEntry:
    method: str
    mesh: str
    assembly_s: float
    solve_s: float
    total_s: float
    iterations: int

    @property
    def assembly_pct(self):
        return 100.0 * self.assembly_s / self.total_s if self.total_s > 0 else 0.0


def write_timing_report(csv_path, txt_path, entries):
    """Matrix-calculation time per (method, mesh), absolute and as % of total."""
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["method", "mesh", "iterations", "assembly_s", "solve_s", "total_s", "assembly_pct"])
        for e in entries:
            w.writerow([e.method, e.mesh, e.iterations, f"{e.assembly_s:.6f}", f"{e.solve_s:.6f}",
                        f"{e.total_s:.6f}", f"{e.assembly_pct:.3f}"])
    methods = list(dict.fromkeys(e.method for e in entries))
    meshes = list(dict.fromkeys(e.mesh for e in entries))
    cell = {(e.method, e.mesh): e for e in entries}

    def table(title, fmt):
        width = max([len(m) for m in methods] + [len("method")])
        cols = [max(len(m), 12) for m in meshes]
        lines = [title, "method".ljust(width) + "".join(f"  {m:>{c}}" for m, c in zip(meshes, cols))]
        for meth in methods:
            row = meth.ljust(width)
            for m, c in zip(meshes, cols):
                e = cell.get((meth, m))
                row += f"  {fmt(e) if e else '-':>{c}}"
            lines.append(row)
        return lines

    out = table("matrix calculation time [s]", lambda e: f"{e.assembly_s:.4f}")
    out += [""] + table("matrix calculation [% of total]", lambda e: f"{e.assembly_pct:.2f}")
    with open(txt_path, "w") as fh:
        fh.write("\n".join(out) + "\n")
    return "\n".join(out)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else str(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


def write_json(path, data):
    with open(path, "w") as fh:
        json.dump(_jsonable(data), fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_checks_csv(path, rows):
    """``check,value,threshold,passed`` rows."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["check", "value", "threshold", "passed"])
        for name, value, threshold, ok in rows:
            w.writerow([name, repr(float(value)), threshold, "pass" if ok else "fail"])
