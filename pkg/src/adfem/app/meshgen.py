"""Structured triangulations of a rectangular channel."""
from __future__ import annotations

import numpy as np

from ..assembly import Mesh


def generate_rect_mesh(nx, ny, order=1, length=1.0, height=1.0):
    """Triangulate ``[0, length] x [0, height]`` with ``nx * ny`` split squares.

    Every cell is cut along its rising diagonal.  P2 meshes reuse a grid of
    twice the resolution, whose odd points are exactly the edge midpoints.
    Boundary sets: ``inflow`` (x=0), ``outflow`` (x=length), ``wall_bottom``
    and ``wall_top``; corners belong to both adjacent sets.
    """
    if nx < 2 or ny < 2:
        raise ValueError("generated meshes need nx, ny >= 2")
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    s = order
    mx, my = s * nx, s * ny
    xs = np.linspace(0.0, length, mx + 1)
    ys = np.linspace(0.0, height, my + 1)
    X, Y = np.meshgrid(xs, ys)
    nodes = np.column_stack([X.ravel(), Y.ravel()])

    def nid(i, j):
        return j * (mx + 1) + i

    i, j = np.meshgrid(np.arange(nx) * s, np.arange(ny) * s)
    i, j = i.ravel(), j.ravel()
    v00, v10, v11, v01 = nid(i, j), nid(i + s, j), nid(i + s, j + s), nid(i, j + s)
    if order == 1:
        lower = np.column_stack([v00, v10, v11])
        upper = np.column_stack([v00, v11, v01])
    else:
        c = nid(i + 1, j + 1)
        lower = np.column_stack([v00, v10, v11, nid(i + 1, j), nid(i + 2, j + 1), c])
        upper = np.column_stack([v00, v11, v01, c, nid(i + 1, j + 2), nid(i, j + 1)])
    elements = np.stack([lower, upper], axis=1).reshape(-1, lower.shape[1])

    ii, jj = np.meshgrid(np.arange(mx + 1), np.arange(my + 1))
    ii, jj = ii.ravel(), jj.ravel()
    boundary = {
        "inflow": np.flatnonzero(ii == 0),
        "outflow": np.flatnonzero(ii == mx),
        "wall_bottom": np.flatnonzero(jj == 0),
        "wall_top": np.flatnonzero(jj == my),
    }
    return Mesh(nodes, elements, boundary).validate()
