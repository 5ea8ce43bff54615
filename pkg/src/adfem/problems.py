"""Boundary-value problems: assembler + Jacobian method + Dirichlet data."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import matexp as me
from .assembly import Assembler, JacobianMethod, apply_dirichlet, normalize_constraints
from .elements.kernels import P, PSI11, PSI12, PSI22, U1, U2, OldroydBKernel, OldroydBParams, PoissonKernel
from .elements.reference import P1, P2


class FEProblem:
    """Implements the Newton problem protocol ``assemble(u) -> (A, b)``."""

    def __init__(self, mesh, kernel, constraints=(), method=JacobianMethod.AD_BLOCKED,
                 threads=1, chunk=1024):
        self.mesh = mesh
        self.kernel = kernel
        self.method = JacobianMethod(method)
        self.assembler = Assembler(mesh, kernel, chunk=chunk, threads=threads)
        self.dofs, self.values = normalize_constraints(constraints, self.ndofs)

    @property
    def ndofs(self):
        return self.assembler.ndofs

    @property
    def dofmap(self):
        return self.assembler.dofmap

    def initial_guess(self):
        """Zero field with the boundary data already in place."""
        u = np.zeros(self.ndofs)
        u[self.dofs] = self.values
        return u

    def assemble_raw(self, u, method=None):
        return self.assembler.assemble(u, self.method if method is None else method)

    def assemble(self, u):
        A, b = self.assembler.assemble(u, self.method)
        return apply_dirichlet(A, b, (self.dofs, self.values), u)

    def residual(self, u):
        return self.assembler.residual(u)

    def with_method(self, method):
        other = object.__new__(FEProblem)
        other.__dict__.update(self.__dict__)
        other.method = JacobianMethod(method)
        return other


# --------------------------------------------------------------------------
# Poisson with a manufactured solution


def manufactured_exact(x, y):
    return x * y * (1 - x) * (1 - y)


def manufactured_source(c):
    def f(x, y):
        lap = -2 * y * (1 - y) - 2 * x * (1 - x)
        u = manufactured_exact(x, y)
        return -lap + c * u ** 3
    return f


def poisson_problem(mesh, c=1.0, source=None, method=JacobianMethod.AD_BLOCKED,
                    boundary_value=None, threads=1):
    """``-lap u + c u^3 = f`` with Dirichlet data on every boundary set.

    ``source`` defaults to the manufactured solution ``x y (1-x)(1-y)``;
    ``boundary_value(x, y)`` defaults to zero.
    """
    ref = P1 if mesh.order == 1 else P2
    kernel = PoissonKernel(ref=ref, c=c, source=manufactured_source(c) if source is None else source)
    nodes = np.unique(np.concatenate(list(mesh.boundary.values()))) if mesh.boundary else np.array([], int)
    xy = mesh.nodes[nodes]
    vals = np.zeros(len(nodes)) if boundary_value is None else boundary_value(xy[:, 0], xy[:, 1])
    return FEProblem(mesh, kernel, (nodes, vals), method, threads)


def l2_error(mesh, u, exact, ref=None):
    """L2 norm of ``u_h - exact`` by the degree-5 rule on every element."""
    from .elements.reference import geometry

    ref = ref or (P1 if mesh.order == 1 else P2)
    rule = P2  # reuse the 7-point rule
    coords = mesh.coords()
    geo = geometry(coords, rule)
    N = ref.shape(rule.quad_points)
    uh = np.einsum("qa,ba->bq", N, np.asarray(u)[mesh.elements])
    err = uh - exact(geo.x[..., 0], geo.x[..., 1])
    return float(np.sqrt(np.sum(err ** 2 * geo.jxw)))


# --------------------------------------------------------------------------
# Oldroyd-B channel


def poiseuille_log_conformation(shear_rate, lam):
    """Log of the fully developed Oldroyd-B conformation under simple shear."""
    w = lam * np.asarray(shear_rate, dtype=float)
    C = np.empty(w.shape + (2, 2))
    C[..., 0, 0] = 1 + 2 * w * w
    C[..., 0, 1] = C[..., 1, 0] = w
    C[..., 1, 1] = 1.0
    ev, vec = np.linalg.eigh(C)
    psi = np.einsum("...ik,...k,...jk->...ij", vec, np.log(ev), vec)
    return me.Sym2.from_array(psi)


@dataclass(frozen=True)
class ChannelSetup:
    umax: float = 3.0
    height: float = 1.0
    reference_length: float = 1.0
    pressure_pin: bool = False

    def mean_velocity(self):
        return 2.0 / 3.0 * self.umax

    def weissenberg(self, lam):
        return lam * self.mean_velocity() / self.reference_length


def channel_constraints(mesh, params, setup=ChannelSetup(), kernel=None):
    """Parabolic inflow (u and Psi), no-slip walls, inactive midpoint pressures."""
    ndf = 6
    H = setup.height
    inflow = mesh.boundary["inflow"]
    walls = np.unique(np.concatenate([mesh.boundary["wall_top"], mesh.boundary["wall_bottom"]]))
    inflow_only = np.setdiff1d(inflow, walls)
    y = mesh.nodes[inflow_only, 1] / H
    u_in = 4 * setup.umax * y * (1 - y)
    psi = poiseuille_log_conformation(4 * setup.umax * (1 - 2 * y) / H, params.lam)
    dofs, vals = [], []

    def put(nodes, fld, v):
        dofs.append(np.asarray(nodes) * ndf + fld)
        vals.append(np.broadcast_to(np.asarray(v, dtype=float), np.shape(nodes)))

    put(inflow_only, U1, u_in)
    put(inflow_only, U2, 0.0)
    put(inflow_only, PSI11, psi.m11)
    put(inflow_only, PSI12, psi.m12)
    put(inflow_only, PSI22, psi.m22)
    # at the inflow corners the wall shear fixes Psi as well
    corners = np.intersect1d(inflow, walls)
    yc = mesh.nodes[corners, 1] / H
    psic = poiseuille_log_conformation(4 * setup.umax * (1 - 2 * yc) / H, params.lam)
    put(corners, PSI11, psic.m11)
    put(corners, PSI12, psic.m12)
    put(corners, PSI22, psic.m22)
    put(walls, U1, 0.0)
    put(walls, U2, 0.0)
    put(np.setdiff1d(np.arange(mesh.n_nodes), mesh.vertex_nodes()), P, 0.0)
    if setup.pressure_pin:
        outflow = mesh.boundary["outflow"]
        put(np.intersect1d(outflow, mesh.vertex_nodes())[:1], P, 0.0)
    return np.concatenate(dofs), np.concatenate(vals)


def oldroydb_problem(mesh, params=OldroydBParams(), expm_cfg=me.DEFAULT_EXPM,
                     setup=ChannelSetup(), method=JacobianMethod.AD_BLOCKED, threads=1):
    if mesh.order != 2:
        raise ValueError("the Oldroyd-B element needs a P2 mesh")
    kernel = OldroydBKernel(params=params, expm_cfg=expm_cfg)
    return FEProblem(mesh, kernel, channel_constraints(mesh, params, setup), method, threads)
