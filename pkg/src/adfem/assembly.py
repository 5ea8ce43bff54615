"""Meshes, DOF maps, block sparse storage and global assembly.

Global DOFs are numbered node-major (``node * ndf + field``), so every node
pair that shares an element owns one dense ``ndf x ndf`` block of the global
matrix.  Element vectors use the DOF-major layout of the kernels; the scatter
reorders between the two.
"""
from __future__ import annotations

import enum
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .elements import jacobian as jac


class MeshError(ValueError):
    pass


class ConstraintError(ValueError):
    pass


class ElementError(RuntimeError):
    """A kernel failed; ``element`` is the global id of the culprit."""

    def __init__(self, element, cause):
        super().__init__(f"element {element}: {cause}")
        self.element = element
        self.cause = cause


@dataclass
class Mesh:
    nodes: np.ndarray
    elements: np.ndarray
    boundary: dict = field(default_factory=dict)

    def __post_init__(self):
        self.nodes = np.asarray(self.nodes, dtype=float)
        self.elements = np.asarray(self.elements, dtype=np.int64)
        self.boundary = {k: np.asarray(v, dtype=np.int64) for k, v in self.boundary.items()}

    @property
    def n_nodes(self):
        return len(self.nodes)

    @property
    def n_elements(self):
        return len(self.elements)

    @property
    def nen(self):
        return self.elements.shape[1]

    @property
    def order(self):
        return {3: 1, 6: 2}[self.nen]

    def vertex_nodes(self):
        """Nodes that are a corner of at least one element."""
        return np.unique(self.elements[:, :3])

    def signed_areas(self):
        v = self.nodes[self.elements[:, :3]]
        a, b = v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]
        return 0.5 * (a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0])

    def validate(self):
        if self.nodes.ndim != 2 or self.nodes.shape[1] != 2:
            raise MeshError("nodes must have shape (N, 2)")
        if self.elements.ndim != 2 or self.nen not in (3, 6):
            raise MeshError("elements must have 3 (P1) or 6 (P2) nodes")
        if self.elements.size and (self.elements.min() < 0 or self.elements.max() >= self.n_nodes):
            raise MeshError("element node index out of range")
        for name, idx in self.boundary.items():
            if idx.size and (idx.min() < 0 or idx.max() >= self.n_nodes):
                raise MeshError(f"boundary set {name!r} has an index out of range")
        bad = np.flatnonzero(self.signed_areas() <= 0)
        if bad.size:
            raise MeshError(f"element {bad[0]} is not positively oriented")
        return self

    def coords(self, elems=slice(None)):
        return self.nodes[self.elements[elems]]


@dataclass(frozen=True)
class DofMap:
    ndf: int
    nen: int
    n_nodes: int
    eta: np.ndarray  # (E, ndf * nen), DOF-major per element

    @property
    def ndofs(self):
        return self.ndf * self.n_nodes

    def dof(self, node, fld):
        return np.asarray(node) * self.ndf + fld

    def gather(self, u, elems=slice(None)):
        return np.asarray(u)[self.eta[elems]]


def build_dofmap(mesh, ndf):
    mesh.validate()
    if ndf < 1:
        raise MeshError("ndf must be >= 1")
    el = mesh.elements
    eta = (el[:, None, :] * ndf + np.arange(ndf)[None, :, None]).reshape(len(el), ndf * mesh.nen)
    return DofMap(ndf, mesh.nen, mesh.n_nodes, eta)


# --------------------------------------------------------------------------
# block sparse row storage


@dataclass
class BsrMatrix:
    """Block sparse row matrix with one ``ndf x ndf`` block per node pair."""

    ndf: int
    n_nodes: int
    indptr: np.ndarray
    indices: np.ndarray
    data: np.ndarray
    # (E, nen, nen) -> block index of the pair (elements[e, a], elements[e, b])
    elem_blocks: np.ndarray = None

    @property
    def shape(self):
        n = self.ndf * self.n_nodes
        return (n, n)

    @property
    def nnzb(self):
        return len(self.indices)

    @property
    def m_B(self):
        """Largest number of blocks in a block row (max node degree + 1)."""
        return int(np.diff(self.indptr).max()) if self.n_nodes else 0

    def block_rows(self):
        return np.repeat(np.arange(self.n_nodes), np.diff(self.indptr))

    def copy(self):
        return BsrMatrix(self.ndf, self.n_nodes, self.indptr, self.indices,
                         self.data.copy(), self.elem_blocks)

    def zeros_like(self):
        return BsrMatrix(self.ndf, self.n_nodes, self.indptr, self.indices,
                         np.zeros_like(self.data), self.elem_blocks)

    def to_scipy(self):
        return sp.bsr_matrix((self.data, self.indices, self.indptr), shape=self.shape)

    def to_dense(self):
        return self.to_scipy().toarray()

    def __matmul__(self, x):
        return self.to_scipy() @ np.asarray(x)

    def matvec(self, x):
        return self @ x

    def diagonal_block(self, node):
        row = slice(self.indptr[node], self.indptr[node + 1])
        k = self.indptr[node] + np.searchsorted(self.indices[row], node)
        return self.data[k]


def sparsity_pattern(mesh, dofmap):
    """Zeroed BSR matrix whose blocks are exactly the co-occurring node pairs."""
    el = mesh.elements
    nen, n = el.shape[1], mesh.n_nodes
    rows = np.repeat(el, nen, axis=1).ravel()
    cols = np.tile(el, (1, nen)).ravel()
    keys = rows * n + cols
    uniq = np.unique(keys)
    brow, bcol = uniq // n, uniq % n
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.add.at(indptr, brow + 1, 1)
    indptr = np.cumsum(indptr)
    elem_blocks = np.searchsorted(uniq, keys).reshape(len(el), nen, nen)
    data = np.zeros((len(uniq), dofmap.ndf, dofmap.ndf))
    return BsrMatrix(dofmap.ndf, n, indptr, bcol.astype(np.int64), data, elem_blocks)


def scatter_matrices(A, Ae, elems):
    """Accumulate DOF-major element matrices ``Ae`` into ``A`` in element order."""
    ndf, nen = A.ndf, A.elem_blocks.shape[1]
    blocks = Ae.reshape(len(Ae), ndf, nen, ndf, nen).transpose(0, 2, 4, 1, 3)
    target = A.elem_blocks[elems]
    flat = (target[..., None, None] * ndf * ndf
            + np.arange(ndf)[:, None] * ndf + np.arange(ndf)[None, :])
    A.data += np.bincount(flat.ravel(), weights=blocks.ravel(),
                          minlength=A.data.size).reshape(A.data.shape)
    return A


def scatter_vectors(n, be, eta):
    return np.bincount(np.asarray(eta).ravel(), weights=np.asarray(be).ravel(), minlength=n)


# --------------------------------------------------------------------------
# global assembly


class JacobianMethod(enum.Enum):
    AD_IDENTITY = "ad_identity"
    AD_BLOCKED = "ad_blocked"
    FD = "fd"
    MANUAL = "manual"


def element_system(kernel, coords, ue, method, first=0, fd_h=1e-6):
    method = JacobianMethod(method)
    if method is JacobianMethod.AD_IDENTITY:
        return jac.elem_jacobian_ad(kernel, coords, ue, jac.Seeding.IDENTITY, first)
    if method is JacobianMethod.AD_BLOCKED:
        return jac.elem_jacobian_ad(kernel, coords, ue, jac.Seeding.BLOCK_PER_DOF, first)
    b = -jac.elem_residual(kernel, coords, ue, first)
    if method is JacobianMethod.FD:
        return b, jac.elem_jacobian_fd(kernel, coords, ue, fd_h, first)
    return b, jac.elem_jacobian_manual(kernel, coords, ue, first)


class Assembler:
    """Caches the pattern and element coordinates of one (mesh, kernel) pair."""

    def __init__(self, mesh, kernel, chunk=1024, threads=1):
        if mesh.nen != kernel.nen:
            raise MeshError(f"mesh has {mesh.nen} nodes per element, kernel expects {kernel.nen}")
        self.mesh = mesh
        self.kernel = kernel
        self.dofmap = build_dofmap(mesh, kernel.ndf)
        self.pattern = sparsity_pattern(mesh, self.dofmap)
        self.coords = mesh.coords()
        self.chunk = max(1, int(chunk))
        self.threads = max(1, int(threads))
        E = mesh.n_elements
        self.chunks = [(s, min(s + self.chunk, E)) for s in range(0, E, self.chunk)]

    @property
    def ndofs(self):
        return self.dofmap.ndofs

    def _guarded(self, fn, s, e):
        try:
            return fn(s, e)
        except ElementError:
            raise
        except Exception as err:
            # find the first failing element of the chunk
            for i in range(s, e):
                try:
                    fn(i, i + 1)
                except Exception as inner:
                    raise ElementError(i, inner) from inner
            raise ElementError(s, err) from err

    def _map(self, fn):
        if self.threads == 1 or len(self.chunks) == 1:
            return [self._guarded(fn, s, e) for s, e in self.chunks]
        with ThreadPoolExecutor(self.threads) as pool:
            futures = [pool.submit(self._guarded, fn, s, e) for s, e in self.chunks]
            return [f.result() for f in futures]

    def residual(self, u):
        """Global residual F(u) (no boundary conditions)."""
        u = np.asarray(u, dtype=float)

        def run(s, e):
            return jac.elem_residual(self.kernel, self.coords[s:e], self.dofmap.gather(u, slice(s, e)), s)

        parts = self._map(run)
        return scatter_vectors(self.ndofs, np.concatenate(parts), self.dofmap.eta)

    def assemble(self, u, method=JacobianMethod.AD_BLOCKED, fd_h=1e-6):
        """Return ``(A, b)`` with ``A = sum P_e A_e P_e^T`` and ``b = sum P_e b_e``."""
        u = np.asarray(u, dtype=float)
        if u.shape != (self.ndofs,):
            raise ValueError(f"u has shape {u.shape}, expected ({self.ndofs},)")

        def run(s, e):
            return element_system(self.kernel, self.coords[s:e],
                                  self.dofmap.gather(u, slice(s, e)), method, s, fd_h)

        A = self.pattern.zeros_like()
        bs = []
        for (s, e), (be, Ae) in zip(self.chunks, self._map(run)):
            scatter_matrices(A, Ae, slice(s, e))
            bs.append(be)
        b = scatter_vectors(self.ndofs, np.concatenate(bs), self.dofmap.eta)
        return A, b


def assemble(mesh, dofmap, kernel, u_global, jac_method=JacobianMethod.AD_BLOCKED, threads=1):
    """One-shot global assembly; see :class:`Assembler` for repeated use."""
    asm = Assembler(mesh, kernel, threads=threads)
    if asm.dofmap.ndf != dofmap.ndf:
        raise MeshError("dofmap does not match the kernel")
    return asm.assemble(u_global, jac_method)


# --------------------------------------------------------------------------
# boundary conditions


def normalize_constraints(constraints, ndofs=None):
    """Merge ``(dof, value)`` pairs; equal duplicates collapse, conflicts raise."""
    if isinstance(constraints, tuple) and len(constraints) == 2 and np.ndim(constraints[0]) == 1:
        dofs, vals = constraints
    else:
        pairs = list(constraints)
        dofs = [d for d, _ in pairs]
        vals = [v for _, v in pairs]
    dofs = np.asarray(dofs, dtype=np.int64).ravel()
    vals = np.asarray(vals, dtype=float).ravel()
    if dofs.size == 0:
        return dofs, vals
    if ndofs is not None and (dofs.min() < 0 or dofs.max() >= ndofs):
        raise ConstraintError("constrained dof out of range")
    order = np.argsort(dofs, kind="stable")
    dofs, vals = dofs[order], vals[order]
    same = dofs[1:] == dofs[:-1]
    clash = same & (vals[1:] != vals[:-1])
    if clash.any():
        d = dofs[1:][clash][0]
        raise ConstraintError(f"dof {d} constrained to conflicting values")
    keep = np.concatenate([[True], ~same])
    return dofs[keep], vals[keep]


def apply_dirichlet(A, b, constraints, u_current):
    """Row/column elimination in the Newton-increment convention.

    Constrained rows become identity rows with right-hand side
    ``prescribed - current``; their column couplings are moved to ``b``.
    Returns new ``(A, b)``; the inputs are left untouched.
    """
    n = A.shape[0]
    dofs, vals = normalize_constraints(constraints, n)
    A = A.copy()
    b = np.array(b, dtype=float)
    if dofs.size == 0:
        return A, b
    delta = np.zeros(n)
    delta[dofs] = vals - np.asarray(u_current, dtype=float)[dofs]
    b -= A @ delta
    mask = np.zeros(n, dtype=bool)
    mask[dofs] = True
    mask = mask.reshape(A.n_nodes, A.ndf)
    rows = A.block_rows()
    keep_r = ~mask[rows]
    keep_c = ~mask[A.indices]
    A.data *= keep_r[:, :, None] & keep_c[:, None, :]
    diag = np.flatnonzero(rows == A.indices)
    dm = mask[rows[diag]]
    bi, fi = np.nonzero(dm)
    A.data[diag[bi], fi, fi] = 1.0
    b[dofs] = delta[dofs]
    return A, b
