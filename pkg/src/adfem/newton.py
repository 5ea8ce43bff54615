"""Newton-Raphson over assembled systems, with GMRES and dense LU solvers.

A *problem* is anything with ``assemble(u) -> (A, b)`` where ``b = -F(u)``
with boundary conditions already applied, so that ``A du = b`` is the Newton
step and ``||b||`` is the residual norm the iteration drives to zero.
"""
from __future__ import annotations

import logging
import time
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .assembly import BsrMatrix

log = logging.getLogger(__name__)


class LinearSolverError(ArithmeticError):
    pass


class SingularMatrixError(LinearSolverError):
    pass


class StagnationError(LinearSolverError):
    pass


@dataclass(frozen=True)
class GmresConfig:
    restart: int = 50
    tol: float = 1e-10
    max_iters: int = 2000
    lu_fallback: bool = True


@dataclass(frozen=True)
class DenseLUConfig:
    cap: int = 5000
    pivot_tol: float = 1e-12


@dataclass(frozen=True)
class NewtonConfig:
    abs_tol: float = 1e-12
    rel_tol: float = 1e-10
    max_iters: int = 25
    linear: object = field(default_factory=DenseLUConfig)
    keep_iterates: bool = False

    def __post_init__(self):
        if not (self.abs_tol > 0 and self.rel_tol > 0):
            raise ValueError("tolerances must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")


# --------------------------------------------------------------------------
# linear solvers


def _as_operator(A):
    if isinstance(A, BsrMatrix):
        return A.to_scipy()
    return A


def _dense(A):
    if isinstance(A, BsrMatrix):
        return A.to_dense()
    if hasattr(A, "toarray"):
        return A.toarray()
    return np.asarray(A, dtype=float)


def dense_lu(A, b, cfg=DenseLUConfig()):
    """Partial-pivoting LU solve; raises on a (numerically) singular pivot."""
    M = _dense(A)
    n = M.shape[0]
    if M.shape != (n, n):
        raise ValueError("matrix must be square")
    if n > cfg.cap:
        raise LinearSolverError(f"dense LU capped at {cfg.cap} unknowns, got {n}")
    scale = np.abs(M).max() if M.size else 0.0
    if scale == 0.0:
        raise SingularMatrixError("matrix is zero")
    with warnings.catch_warnings():
        # the pivot check below reports singularity with more context
        warnings.simplefilter("ignore", sla.LinAlgWarning)
        lu, piv = sla.lu_factor(M, check_finite=True)
    pivots = np.abs(np.diag(lu))
    worst = int(np.argmin(pivots))
    if pivots[worst] <= cfg.pivot_tol * scale:
        raise SingularMatrixError(
            f"singular pivot {pivots[worst]:.3e} at position {worst} (scale {scale:.3e})"
        )
    return sla.lu_solve((lu, piv), np.asarray(b, dtype=float))


def gmres(A, b, cfg=GmresConfig(), x0=None):
    """Restarted GMRES (modified Gram-Schmidt, Givens rotations).

    Returns ``(x, iterations)``.  Raises :class:`StagnationError` when a full
    restart cycle brings no reduction of the residual.
    """
    op = _as_operator(A)
    b = np.asarray(b, dtype=float)
    n = b.size
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros(n), 0
    target = cfg.tol * bnorm
    m = max(1, min(cfg.restart, n))
    its = 0
    r = b - op @ x
    beta = np.linalg.norm(r)
    while its < cfg.max_iters:
        if beta <= target:
            return x, its
        cycle_start = beta
        V = np.zeros((m + 1, n))
        H = np.zeros((m + 1, m))
        cs, sn = np.zeros(m), np.zeros(m)
        g = np.zeros(m + 1)
        g[0] = beta
        V[0] = r / beta
        k = 0
        for k in range(m):
            its += 1
            w = op @ V[k]
            for i in range(k + 1):
                H[i, k] = w @ V[i]
                w = w - H[i, k] * V[i]
            H[k + 1, k] = np.linalg.norm(w)
            breakdown = H[k + 1, k] <= 1e-14 * np.linalg.norm(H[:k + 2, k])
            if not breakdown:
                V[k + 1] = w / H[k + 1, k]
            for i in range(k):
                t = cs[i] * H[i, k] + sn[i] * H[i + 1, k]
                H[i + 1, k] = -sn[i] * H[i, k] + cs[i] * H[i + 1, k]
                H[i, k] = t
            den = np.hypot(H[k, k], H[k + 1, k])
            cs[k], sn[k] = (1.0, 0.0) if den == 0 else (H[k, k] / den, H[k + 1, k] / den)
            H[k, k] = cs[k] * H[k, k] + sn[k] * H[k + 1, k]
            H[k + 1, k] = 0.0
            g[k + 1] = -sn[k] * g[k]
            g[k] = cs[k] * g[k]
            if abs(g[k + 1]) <= target or breakdown or its >= cfg.max_iters:
                break
        y = sla.solve_triangular(H[:k + 1, :k + 1], g[:k + 1], check_finite=False)
        x = x + V[:k + 1].T @ y
        r = b - op @ x
        beta = np.linalg.norm(r)
        if beta <= target:
            return x, its
        if beta >= cycle_start * (1 - 1e-12):
            raise StagnationError(f"GMRES stagnated at relative residual {beta / bnorm:.3e}")
    raise StagnationError(f"GMRES did not converge in {cfg.max_iters} iterations "
                          f"(relative residual {beta / bnorm:.3e})")


def solve_linear(A, b, cfg):
    """Dispatch on the linear configuration; returns ``(x, iterations)``."""
    if isinstance(cfg, DenseLUConfig):
        return dense_lu(A, b, cfg), 1
    try:
        return gmres(A, b, cfg)
    except StagnationError as err:
        if not cfg.lu_fallback:
            raise
        log.warning("%s; falling back to dense LU", err)
        return dense_lu(A, b), -1


# --------------------------------------------------------------------------
# Newton


@dataclass
class IterationRecord:
    iteration: int
    residual_norm: float      # ||F(u^k)|| after this step
    linear_iterations: int
    assembly_s: float         # assembly at u^k
    solve_s: float            # linear solve producing u^k
    wall_s: float


@dataclass
class NewtonHistory:
    initial_residual: float = float("nan")
    initial_assembly_s: float = 0.0
    records: list = field(default_factory=list)
    converged: bool = False
    iterates: list = field(default_factory=list)
    message: str = ""

    @property
    def iterations(self):
        return len(self.records)

    @property
    def residuals(self):
        return np.array([self.initial_residual] + [r.residual_norm for r in self.records])

    @property
    def final_residual(self):
        return self.records[-1].residual_norm if self.records else self.initial_residual

    def empirical_order(self, floor=None):
        """Order estimate from the last three residuals above round-off."""
        res = self.residuals
        if floor is None:
            floor = 100 * np.finfo(float).eps * max(1.0, res[0])
        res = res[res > floor]
        if len(res) < 3:
            return float("nan")
        r0, r1, r2 = res[-3:]
        return float(np.log(r2 / r1) / np.log(r1 / r0))


def newton_solve(problem, u0, cfg=NewtonConfig()):
    """Plain Newton iteration ``A du = -F(u)``; returns ``(u, history)``.

    Non-convergence is reported in the history, not raised.  Linear solver
    failures propagate.
    """
    u = np.array(u0, dtype=float)
    hist = NewtonHistory()
    t = time.perf_counter()
    A, b = problem.assemble(u)
    hist.initial_assembly_s = time.perf_counter() - t
    r0 = float(np.linalg.norm(b))
    hist.initial_residual = r0
    if cfg.keep_iterates:
        hist.iterates.append(u.copy())
    if not np.isfinite(r0):
        hist.message = "non-finite initial residual"
        return u, hist
    if r0 <= cfg.abs_tol:
        hist.converged = True
        hist.message = "initial guess satisfies the tolerance"
        return u, hist
    for k in range(1, cfg.max_iters + 1):
        t_iter = time.perf_counter()
        du, lin_its = solve_linear(A, b, cfg.linear)
        t_solve = time.perf_counter() - t_iter
        u = u + du
        t = time.perf_counter()
        A, b = problem.assemble(u)
        t_asm = time.perf_counter() - t
        r = float(np.linalg.norm(b))
        hist.records.append(IterationRecord(k, r, lin_its, t_asm, t_solve,
                                            time.perf_counter() - t_iter))
        if cfg.keep_iterates:
            hist.iterates.append(u.copy())
        log.info("newton %d: |F| = %.3e", k, r)
        if not np.isfinite(r):
            hist.message = f"residual became non-finite at iteration {k}"
            return u, hist
        if r <= cfg.abs_tol or r <= cfg.rel_tol * r0:
            hist.converged = True
            hist.message = f"converged in {k} iterations"
            return u, hist
    hist.message = f"no convergence in {cfg.max_iters} iterations (|F| = {hist.final_residual:.3e})"
    return u, hist
