"""Element residuals, written once over generic scalars.

Kernels are evaluated on a batch of elements at once: ``coords`` has shape
``(B, nen, 2)`` and ``ue`` has shape ``(B, ndf * nen)`` in DOF-major layout.
``ue`` may be a plain array, a :class:`~adfem.tangent.Tangent`, or a list
of ``ndf`` per-field blocks of length ``nen`` (so that blocks not being
differentiated stay plain arrays); the returned residual is a Tangent as soon
as any input is.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import matexp as me
from .. import tangent as tg
from .reference import P1, P2, RefElement, geometry

# Oldroyd-B field order inside ue
PSI11, PSI12, PSI22, U1, U2, P = range(6)
FIELD_NAMES = ("psi11", "psi12", "psi22", "u1", "u2", "p")


@dataclass(frozen=True)
class OldroydBParams:
    rho: float = 1.0
    mu_s: float = 0.59
    mu_p: float = 0.41
    lam: float = 0.05

    def __post_init__(self):
        for name in ("rho", "mu_s", "mu_p", "lam"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be strictly positive")


def _blocks(ue, ndf, nen):
    if isinstance(ue, (list, tuple)):
        if len(ue) != ndf:
            raise ValueError(f"expected {ndf} field blocks, got {len(ue)}")
        return list(ue)
    return [ue[..., k * nen:(k + 1) * nen] for k in range(ndf)]


def _at_q(N, blk):
    return tg.einsum("qa,ba->bq", N, blk)


def _grad_at_q(G, blk):
    g = tg.einsum("bqad,ba->bqd", G, blk)
    return g[..., 0], g[..., 1]


def _test(val, N, jxw):
    # integral of val * N_a over each element
    return tg.einsum("bq,qa->ba", val * jxw, N)


def _test_grad(vx, vy, G, jxw):
    return tg.einsum("bq,bqa->ba", vx * jxw, G[..., 0]) + tg.einsum("bq,bqa->ba", vy * jxw, G[..., 1])


# --------------------------------------------------------------------------
# Poisson with a cubic reaction


@dataclass(frozen=True)
class PoissonKernel:
    """``-lap u + c u^3 = source``; ``source`` is a constant or ``f(x, y)``."""

    ref: RefElement = P1
    c: float = 1.0
    source: object = 0.0
    ndf: int = field(default=1, init=False)

    @property
    def nen(self):
        return self.ref.nen

    def _source(self, geo):
        if callable(self.source):
            return np.asarray(self.source(geo.x[..., 0], geo.x[..., 1]), dtype=float)
        return np.full(geo.jxw.shape, float(self.source))

    def residual(self, coords, ue, first=0):
        geo = geometry(coords, self.ref, first)
        N = self.ref.N
        (ue,) = _blocks(ue, 1, self.nen)
        u = _at_q(N, ue)
        ux, uy = _grad_at_q(geo.grads, ue)
        r = _test_grad(ux, uy, geo.grads, geo.jxw)
        if self.c != 0:
            r = r + _test(u * u * u * self.c, N, geo.jxw)
        return r - _test(self._source(geo), N, geo.jxw)

    def manual_jacobian(self, coords, ue, first=0):
        """Hand-derived element Jacobian."""
        geo = geometry(coords, self.ref, first)
        N = self.ref.N
        A = np.einsum("bqid,bqjd,bq->bij", geo.grads, geo.grads, geo.jxw)
        if self.c != 0:
            u = np.einsum("qa,ba->bq", N, np.asarray(ue, dtype=float))
            A = A + np.einsum("bq,qi,qj->bij", 3 * self.c * u * u * geo.jxw, N, N)
        return A


# --------------------------------------------------------------------------
# Oldroyd-B in log-conformation form


def constitutive(psi, grad_u, conv, lam, cfg=me.DEFAULT_EXPM):
    """Pointwise stationary log-conformation residual as a :class:`Sym2`.

    ``grad_u = (L11, L12, L21, L22)`` with ``Lij = d u_i / d x_j``;
    ``conv`` is the Sym2 of ``(u . grad) Psi``.
    """
    l11, l12, l21, l22 = grad_u
    e12 = (l12 + l21) * 0.5
    w = (l12 - l21) * 0.5
    g_psi = me.gamma(psi)
    # [Psi, Omega] with Omega = [[0, w], [-w, 0]]
    comm = me.Sym2(psi.m12 * w * -2.0, (psi.m11 - psi.m22) * w, psi.m12 * w * 2.0)
    e_neg = me.expm(-psi, cfg)
    relax = me.Sym2(1.0 - e_neg.m11, -e_neg.m12, 1.0 - e_neg.m22) * (1.0 / lam)
    strain = me.Sym2(l11 * 2.0, e12 * 2.0, l22 * 2.0)
    k = (g_psi * e12 - psi.m12 * ((l11 - l22) * 0.5)) * me.f_func(psi) * 2.0
    rank = me.Sym2(-psi.m12 * k, g_psi * k, psi.m12 * k)
    return conv + comm + relax - strain - rank


@dataclass(frozen=True)
class OldroydBKernel:
    """Mixed P2 (Psi, u) / P1 (p) stationary Oldroyd-B element.

    The pressure block has nen entries; only the three vertex values are
    active and the midpoint rows are identically zero.
    """

    params: OldroydBParams = OldroydBParams()
    expm_cfg: me.ExpmConfig = me.DEFAULT_EXPM
    ref: RefElement = P2
    ndf: int = field(default=6, init=False)

    @property
    def nen(self):
        return self.ref.nen

    @property
    def inactive_local(self):
        """Local indices (into ue) of the unused midpoint pressures."""
        return [P * self.nen + a for a in range(3, self.nen)]

    def residual(self, coords, ue, first=0):
        prm = self.params
        geo = geometry(coords, self.ref, first)
        N, G, jxw = self.ref.N, geo.grads, geo.jxw
        Np = P1.shape(self.ref.quad_points)
        b = _blocks(ue, self.ndf, self.nen)

        psi = me.Sym2(_at_q(N, b[PSI11]), _at_q(N, b[PSI12]), _at_q(N, b[PSI22]))
        u1, u2 = _at_q(N, b[U1]), _at_q(N, b[U2])
        p = _at_q(Np, b[P][..., :3])
        l11, l12 = _grad_at_q(G, b[U1])
        l21, l22 = _grad_at_q(G, b[U2])

        def advect(blk):
            gx, gy = _grad_at_q(G, blk)
            return u1 * gx + u2 * gy

        conv = me.Sym2(advect(b[PSI11]), advect(b[PSI12]), advect(b[PSI22]))
        c = constitutive(psi, (l11, l12, l21, l22), conv, prm.lam, self.expm_cfg)

        e_pos = me.expm(psi, self.expm_cfg)
        cp = prm.mu_p / prm.lam
        tp = me.Sym2((e_pos.m11 - 1.0) * cp, e_pos.m12 * cp, (e_pos.m22 - 1.0) * cp)
        s11 = l11 * (2 * prm.mu_s) + tp.m11 - p
        s22 = l22 * (2 * prm.mu_s) + tp.m22 - p
        s12 = (l12 + l21) * prm.mu_s + tp.m12

        r_u1 = _test((u1 * l11 + u2 * l12) * prm.rho, N, jxw) + _test_grad(s11, s12, G, jxw)
        r_u2 = _test((u1 * l21 + u2 * l22) * prm.rho, N, jxw) + _test_grad(s12, s22, G, jxw)
        r_p = _test(-(l11 + l22), Np, jxw)
        pad = np.zeros(np.shape(tg.value_of(b[P]))[:-1] + (self.nen - 3,))
        parts = [_test(c.m11, N, jxw), _test(c.m12, N, jxw), _test(c.m22, N, jxw),
                 r_u1, r_u2, r_p, pad]
        return tg.concatenate(parts, axis=-1)


def mass_matrix(coords, ref=P2):
    """Consistent mass matrices for a batch of elements."""
    geo = geometry(coords, ref)
    return np.einsum("bq,qi,qj->bij", geo.jxw, ref.N, ref.N)
