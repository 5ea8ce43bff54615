"""Mesh text format and legacy-ASCII VTK field files.

Mesh format::

    nodes N elements E ndim 2 order K
    x y                       (N lines)
    i0 i1 i2 [i3 i4 i5]       (E lines, P2 order: v0 v1 v2 m01 m12 m20)
    set NAME count C
    j0 j1 ...                 (C indices, any line breaks)

Blank lines and ``#`` comments are ignored.
"""
from __future__ import annotations

import logging
import re

import numpy as np

from ..assembly import Mesh, MeshError

log = logging.getLogger(__name__)

_HEADER = re.compile(r"nodes\s+(\d+)\s+elements\s+(\d+)\s+ndim\s+(\d+)\s+order\s+(\d+)$")
_SET = re.compile(r"set\s+(\S+)\s+count\s+(\d+)$")
# reversing the orientation of a P2 triangle: swap v1/v2 and fix the midpoints
_FLIP = {3: [0, 2, 1], 6: [0, 2, 1, 5, 4, 3]}
VTK_CELL = {3: 5, 6: 22}


class MeshParseError(MeshError):
    def __init__(self, path, line, msg):
        super().__init__(f"{path}:{line}: {msg}")
        self.line = line


def write_mesh(path, mesh):
    with open(path, "w") as fh:
        fh.write(f"nodes {mesh.n_nodes} elements {mesh.n_elements} ndim 2 order {mesh.order}\n")
        for x, y in mesh.nodes.tolist():
            fh.write(f"{x!r} {y!r}\n")
        for el in mesh.elements:
            fh.write(" ".join(str(int(i)) for i in el) + "\n")
        for name, idx in mesh.boundary.items():
            fh.write(f"set {name} count {len(idx)}\n")
            fh.write(" ".join(str(int(i)) for i in idx) + "\n")


def _lines(path):
    with open(path) as fh:
        for no, raw in enumerate(fh, 1):
            text = raw.split("#", 1)[0].strip()
            if text:
                yield no, text


def read_mesh(path):
    """Parse, validate and (if needed) re-orient a mesh file."""
    lines = list(_lines(path))
    if not lines:
        raise MeshParseError(path, 1, "empty mesh file")
    no, head = lines[0]
    m = _HEADER.match(head)
    if not m:
        raise MeshParseError(path, no, "expected 'nodes N elements E ndim 2 order K'")
    n, e, ndim, order = map(int, m.groups())
    if ndim != 2:
        raise MeshParseError(path, no, f"only ndim 2 is supported, got {ndim}")
    if order not in (1, 2):
        raise MeshParseError(path, no, f"order must be 1 or 2, got {order}")
    nen = 3 if order == 1 else 6
    if len(lines) < 1 + n + e:
        raise MeshParseError(path, lines[-1][0], "file ends before all nodes and elements were read")

    nodes = np.empty((n, 2))
    for k in range(n):
        no, text = lines[1 + k]
        parts = text.split()
        try:
            if len(parts) != 2:
                raise ValueError
            nodes[k] = [float(p) for p in parts]
        except ValueError:
            raise MeshParseError(path, no, f"expected 'x y', got {text!r}") from None

    elements = np.empty((e, nen), dtype=np.int64)
    for k in range(e):
        no, text = lines[1 + n + k]
        parts = text.split()
        try:
            if len(parts) != nen:
                raise ValueError
            idx = [int(p) for p in parts]
        except ValueError:
            raise MeshParseError(path, no, f"expected {nen} node indices, got {text!r}") from None
        bad = [i for i in idx if not 0 <= i < n]
        if bad:
            raise MeshParseError(path, no, f"node index {bad[0]} out of range [0, {n})")
        elements[k] = idx

    boundary = {}
    rest = lines[1 + n + e:]
    pos = 0
    while pos < len(rest):
        no, text = rest[pos]
        sm = _SET.match(text)
        if not sm:
            raise MeshParseError(path, no, f"expected 'set NAME count K', got {text!r}")
        name, count = sm.group(1), int(sm.group(2))
        idx = []
        pos += 1
        while len(idx) < count:
            if pos >= len(rest):
                raise MeshParseError(path, no, f"set {name!r} ends after {len(idx)} of {count} indices")
            ino, itext = rest[pos]
            try:
                vals = [int(t) for t in itext.split()]
            except ValueError:
                raise MeshParseError(path, ino, f"bad index in set {name!r}") from None
            bad = [i for i in vals if not 0 <= i < n]
            if bad:
                raise MeshParseError(path, ino, f"node index {bad[0]} out of range [0, {n})")
            idx.extend(vals)
            pos += 1
        if len(idx) != count:
            raise MeshParseError(path, no, f"set {name!r} has {len(idx)} indices, header says {count}")
        boundary[name] = np.array(idx, dtype=np.int64)

    mesh = Mesh(nodes, elements, boundary)
    area = mesh.signed_areas()
    flip = np.flatnonzero(area < 0)
    if flip.size:
        log.warning("%s: repaired orientation of %d element(s), first is %d", path, flip.size, flip[0])
        mesh.elements[flip] = mesh.elements[flip][:, _FLIP[nen]]
    return mesh.validate()


# --------------------------------------------------------------------------
# legacy VTK


def write_fields(path, mesh, u, names):
    """Write nodal fields (node-major ``u``, one column per name) as legacy VTK."""
    u = np.asarray(u, dtype=float).reshape(mesh.n_nodes, len(names))
    with open(path, "w") as fh:
        fh.write("# vtk DataFile Version 3.0\nadfem fields\nASCII\nDATASET UNSTRUCTURED_GRID\n")
        fh.write(f"POINTS {mesh.n_nodes} double\n")
        for x, y in mesh.nodes.tolist():
            fh.write(f"{x!r} {y!r} 0.0\n")
        nen = mesh.nen
        fh.write(f"CELLS {mesh.n_elements} {mesh.n_elements * (nen + 1)}\n")
        for el in mesh.elements:
            fh.write(f"{nen} " + " ".join(str(int(i)) for i in el) + "\n")
        fh.write(f"CELL_TYPES {mesh.n_elements}\n")
        fh.write(f"{VTK_CELL[nen]}\n" * mesh.n_elements)
        fh.write(f"POINT_DATA {mesh.n_nodes}\n")
        for k, name in enumerate(names):
            fh.write(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n")
            fh.write("\n".join(repr(float(v)) for v in u[:, k]) + "\n")


def read_fields(path):
    """Read a file written by :func:`write_fields`; returns ``(mesh, fields)``."""
    with open(path) as fh:
        lines = fh.read().splitlines()
    body = "\n".join(lines[4:]).split()
    it = iter(body)
    fields = {}
    nodes = elements = None
    for tok in it:
        if tok == "POINTS":
            n = int(next(it))
            next(it)
            nodes = np.array([[float(next(it)) for _ in range(3)] for _ in range(n)])[:, :2]
        elif tok == "CELLS":
            ncell = int(next(it))
            next(it)
            cells = []
            for _ in range(ncell):
                k = int(next(it))
                cells.append([int(next(it)) for _ in range(k)])
            elements = np.array(cells, dtype=np.int64)
        elif tok == "CELL_TYPES":
            for _ in range(int(next(it))):
                next(it)
        elif tok == "POINT_DATA":
            npd = int(next(it))
        elif tok == "SCALARS":
            name = next(it)
            next(it), next(it), next(it), next(it)  # type, ncomp, LOOKUP_TABLE, default
            fields[name] = np.array([float(next(it)) for _ in range(npd)])
    if nodes is None or elements is None:
        raise MeshError(f"{path}: missing POINTS or CELLS section")
    return Mesh(nodes, elements), fields
