"""Lagrange triangles on the reference element and affine geometry."""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

DEGENERATE_DET = 1e-14


class DegenerateElementError(ValueError):
    """Element whose coordinate map has (near) zero Jacobian determinant."""


class ElementKind(enum.Enum):
    P1_TRI = "P1"
    P2_TRI = "P2"


def _rule_deg2():
    pts = np.array([[1 / 6, 1 / 6], [2 / 3, 1 / 6], [1 / 6, 2 / 3]])
    return pts, np.full(3, 1 / 6)


def _rule_deg5():
    # 7-point rule exact for degree 5 on the unit triangle (area 1/2)
    r15 = np.sqrt(15.0)
    a1, b1 = (6 - r15) / 21, (9 + 2 * r15) / 21
    a2, b2 = (6 + r15) / 21, (9 - 2 * r15) / 21
    w1, w2 = (155 - r15) / 2400, (155 + r15) / 2400
    pts = [[1 / 3, 1 / 3],
           [a1, a1], [b1, a1], [a1, b1],
           [a2, a2], [b2, a2], [a2, b2]]
    w = [9 / 80, w1, w1, w1, w2, w2, w2]
    return np.array(pts), np.array(w)


def _p1(xi):
    x, y = xi[:, 0], xi[:, 1]
    n = np.stack([1 - x - y, x, y], axis=1)
    dn = np.broadcast_to(np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]]), (len(xi), 3, 2))
    return n, np.array(dn)


def _p2(xi):
    l1, l2 = xi[:, 0], xi[:, 1]
    l0 = 1 - l1 - l2
    lam = (l0, l1, l2)
    # d(lambda_i)/d(xi, eta)
    dl = (np.array([-1.0, -1.0]), np.array([1.0, 0.0]), np.array([0.0, 1.0]))
    n, dn = [], []
    for i in range(3):
        n.append(lam[i] * (2 * lam[i] - 1))
        dn.append(np.outer(4 * lam[i] - 1, dl[i]))
    for i, j in ((0, 1), (1, 2), (2, 0)):
        n.append(4 * lam[i] * lam[j])
        dn.append(4 * (np.outer(lam[j], dl[i]) + np.outer(lam[i], dl[j])))
    return np.stack(n, axis=1), np.stack(dn, axis=1)


@dataclass(frozen=True)
class RefElement:
    """Reference triangle with its shape functions and quadrature rule.

    Node order for P2 is v0, v1, v2, m01, m12, m20.
    """

    kind: ElementKind
    nen: int
    degree: int
    quad_points: np.ndarray
    quad_weights: np.ndarray

    def shape(self, xi):
        return (_p1 if self.kind is ElementKind.P1_TRI else _p2)(np.atleast_2d(xi))[0]

    def grad(self, xi):
        return (_p1 if self.kind is ElementKind.P1_TRI else _p2)(np.atleast_2d(xi))[1]

    @property
    def N(self):
        """Shape values at the quadrature points, ``(nq, nen)``."""
        return self.shape(self.quad_points)

    @property
    def dN(self):
        """Reference gradients at the quadrature points, ``(nq, nen, 2)``."""
        return self.grad(self.quad_points)

    @property
    def nq(self):
        return len(self.quad_weights)


P1 = RefElement(ElementKind.P1_TRI, 3, 2, *_rule_deg2())
P2 = RefElement(ElementKind.P2_TRI, 6, 5, *_rule_deg5())


def ref_for(nen):
    return {3: P1, 6: P2}[nen]


@dataclass(frozen=True)
class Geometry:
    """Affine map data for a batch of elements at the quadrature points."""

    det: np.ndarray      # (B,)
    grads: np.ndarray    # (B, nq, nen, 2) physical shape gradients
    jxw: np.ndarray      # (B, nq) quadrature weight times |det|
    x: np.ndarray        # (B, nq, 2) physical quadrature points


def geometry(coords, ref, first=0):
    """Affine geometry from the vertex coordinates (first three nodes).

    ``coords`` has shape ``(B, nen, 2)``; ``first`` offsets element ids in
    the degeneracy error message.
    """
    coords = np.asarray(coords, dtype=float)
    if coords.ndim == 2:
        coords = coords[None]
    v = coords[:, :3, :]
    jac = np.stack([v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]], axis=-1)  # (B, 2(dim), 2(ref))
    det = jac[:, 0, 0] * jac[:, 1, 1] - jac[:, 0, 1] * jac[:, 1, 0]
    bad = np.flatnonzero(np.abs(det) <= DEGENERATE_DET)
    if bad.size:
        raise DegenerateElementError(
            f"element {first + bad[0]} is degenerate (|det J| = {abs(det[bad[0]]):.3e})"
        )
    inv = np.empty_like(jac)
    inv[:, 0, 0] = jac[:, 1, 1] / det
    inv[:, 1, 1] = jac[:, 0, 0] / det
    inv[:, 0, 1] = -jac[:, 0, 1] / det
    inv[:, 1, 0] = -jac[:, 1, 0] / det
    grads = np.einsum("qnk,bkd->bqnd", ref.dN, inv)
    jxw = np.abs(det)[:, None] * ref.quad_weights[None, :]
    xq = v[:, :1, :] + np.einsum("qk,bdk->bqd", ref.quad_points, jac)
    return Geometry(det, grads, jxw, xq)
