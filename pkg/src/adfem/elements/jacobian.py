"""Element Jacobians: AD with identity or DOF-blocked seeding, FD, manual."""
from __future__ import annotations

import enum

import numpy as np

from .. import tangent as tg


class Seeding(enum.Enum):
    IDENTITY = "identity"
    BLOCK_PER_DOF = "block_per_dof"


def elem_jacobian_ad(kernel, coords, ue, seeding=Seeding.IDENTITY, first=0):
    """Return ``(b_e, A_e)`` for a batch: ``b_e = -F_e``, ``A_e = dF_e/du_e``.

    Identity seeding runs one evaluation with ``p = ndf * nen``.  Blocked
    seeding runs ``ndf`` evaluations with ``p = nen``, lifting only the block
    being differentiated; the other blocks enter as plain constants, so the
    arithmetic that depends on them alone carries no derivatives at all.
    """
    seeding = Seeding(seeding)
    ue = np.asarray(ue, dtype=float)
    ndf, nen = kernel.ndf, kernel.nen
    n = ndf * nen
    if ue.shape[-1] != n:
        raise ValueError(f"ue has length {ue.shape[-1]}, kernel expects {n}")
    if seeding is Seeding.IDENTITY or ndf == 1:
        r = kernel.residual(coords, tg.lift(ue, tg.SeedMatrix.identity(n)), first)
        return -np.asarray(tg.value_of(r)), np.array(tg.deriv_of(r, n))

    A = np.empty(ue.shape[:-1] + (n, n))
    blocks = [ue[..., k * nen:(k + 1) * nen] for k in range(ndf)]
    eye = tg.SeedMatrix.identity(nen)
    value = None
    for k in range(ndf):
        parts = list(blocks)
        parts[k] = tg.lift(blocks[k], eye)
        r = kernel.residual(coords, parts, first)
        A[..., k * nen:(k + 1) * nen] = tg.deriv_of(r, nen)
        if value is None:
            value = np.asarray(tg.value_of(r))
    return -value, A


def elem_jacobian_fd(kernel, coords, ue, h=1e-6, first=0):
    """Central differences, column by column, with step ``h * (1 + |u_j|)``."""
    if not h > 0:
        raise ValueError("h must be positive")
    ue = np.asarray(ue, dtype=float)
    n = ue.shape[-1]
    A = np.empty(ue.shape[:-1] + (n, n))
    for j in range(n):
        step = h * (1.0 + np.abs(ue[..., j]))
        up, dn = ue.copy(), ue.copy()
        up[..., j] += step
        dn[..., j] -= step
        # the realised step differs from `step` by rounding; use it exactly
        span = up[..., j] - dn[..., j]
        diff = kernel.residual(coords, up, first) - kernel.residual(coords, dn, first)
        A[..., j] = diff / span[..., None]
    return A


def elem_jacobian_manual(kernel, coords, ue, first=0):
    if not hasattr(kernel, "manual_jacobian"):
        raise NotImplementedError(f"{type(kernel).__name__} has no hand-written Jacobian")
    return kernel.manual_jacobian(coords, ue, first)


def elem_residual(kernel, coords, ue, first=0):
    return np.asarray(kernel.residual(coords, np.asarray(ue, dtype=float), first))
