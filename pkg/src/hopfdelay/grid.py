"""Uniform finite-difference lattices with zero Dirichlet ghosts.

Interior unknowns are numbered 0..N-1.  In 2D the lattice covers a bounding
box and only the points where the ``inside`` predicate holds are unknowns;
every other lattice point acts as a zero-value ghost.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import DimensionError, InvalidGridError


@dataclass(frozen=True, eq=False)
class Grid:
    dim: int
    coords: np.ndarray          # (N, dim) interior node coordinates
    spacing: tuple              # (h,) or (hx, hy)
    weights: np.ndarray         # (N,) quadrature weights
    descriptor: dict = field(default_factory=dict)
    # 2D only: lattice index of each interior node and the lookup back
    lattice_ij: Optional[np.ndarray] = None
    lattice_shape: Optional[tuple] = None
    index_map: Optional[np.ndarray] = None   # lattice -> interior id, -1 for ghost
    origin: tuple = ()

    @property
    def n(self):
        return self.coords.shape[0]

    @property
    def h(self):
        return self.spacing[0]

    @property
    def x(self):
        return self.coords[:, 0]

    @property
    def y(self):
        if self.dim < 2:
            raise DimensionError("1D grid has no y coordinate")
        return self.coords[:, 1]

    def measure(self):
        return float(self.weights.sum())

    def check(self, f):
        f = np.asarray(f)
        if f.shape != (self.n,):
            raise DimensionError(f"field of shape {f.shape} does not match grid with {self.n} interior nodes")
        return f

    def nearest_node(self, point):
        """Index of the interior node closest to ``point``.

        Raises :class:`InvalidGridError` if the point is farther than one
        lattice cell from every interior node (i.e. outside the domain).
        """
        p = np.atleast_1d(np.asarray(point, dtype=float))
        if p.size != self.dim:
            raise DimensionError(f"probe {point!r} has {p.size} coordinates, grid is {self.dim}D")
        d2 = ((self.coords - p) ** 2).sum(axis=1)
        i = int(np.argmin(d2))
        if np.sqrt(d2[i]) > np.sqrt(self.dim) * max(self.spacing) * (1 + 1e-9):
            raise InvalidGridError(f"probe {tuple(p)} lies outside the domain")
        return i


def build_interval_grid(a, b, n_interior):
    if not a < b:
        raise InvalidGridError(f"interval endpoints must satisfy a < b, got ({a}, {b})")
    if n_interior < 3:
        raise InvalidGridError(f"need at least 3 interior nodes, got {n_interior}")
    h = (b - a) / (n_interior + 1)
    x = a + h * np.arange(1, n_interior + 1)
    return Grid(
        dim=1,
        coords=x[:, None],
        spacing=(h,),
        weights=np.full(n_interior, h),
        descriptor={"kind": "interval", "a": a, "b": b},
        origin=(a,),
    )


def build_masked_grid_2d(bbox, nx, ny, inside: Callable, descriptor=None):
    """Lattice of ``nx`` x ``ny`` interior points strictly inside ``bbox``.

    ``bbox = (x0, x1, y0, y1)``; spacing is ``(x1-x0)/(nx+1)`` so that the box
    edges are ghost lines.  ``inside(x, y)`` must accept arrays.
    """
    if nx < 8 or ny < 8:
        raise InvalidGridError(f"2D grids need nx, ny >= 8, got {nx}x{ny}")
    x0, x1, y0, y1 = map(float, bbox)
    if not (x0 < x1 and y0 < y1):
        raise InvalidGridError(f"degenerate bounding box {bbox!r}")
    hx = (x1 - x0) / (nx + 1)
    hy = (y1 - y0) / (ny + 1)
    xs = x0 + hx * np.arange(1, nx + 1)
    ys = y0 + hy * np.arange(1, ny + 1)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    mask = np.asarray(inside(X, Y), dtype=bool)
    if mask.shape != X.shape:
        mask = np.broadcast_to(mask, X.shape)
    if not mask.any():
        raise InvalidGridError("inside predicate selects no lattice points")
    ij = np.argwhere(mask)
    index_map = -np.ones(X.shape, dtype=np.int64)
    index_map[ij[:, 0], ij[:, 1]] = np.arange(len(ij))
    coords = np.column_stack([xs[ij[:, 0]], ys[ij[:, 1]]])
    return Grid(
        dim=2,
        coords=coords,
        spacing=(hx, hy),
        weights=np.full(len(ij), hx * hy),
        descriptor=dict(descriptor or {"kind": "implicit"}, bbox=(x0, x1, y0, y1)),
        lattice_ij=ij,
        lattice_shape=X.shape,
        index_map=index_map,
        origin=(x0, y0),
    )


def disk_grid(center, radius, nx, ny=None):
    """Closed disk ``|p - center| <= radius`` inside its bounding square."""
    cx, cy = center
    ny = nx if ny is None else ny
    bbox = (cx - radius, cx + radius, cy - radius, cy + radius)

    def inside(X, Y):
        return (X - cx) ** 2 + (Y - cy) ** 2 <= radius ** 2

    return build_masked_grid_2d(bbox, nx, ny, inside,
                                {"kind": "disk", "center": (cx, cy), "radius": radius})


def integrate(g: Grid, f):
    f = g.check(f)
    return g.weights @ f


def inner_product(g: Grid, f, h):
    """Discrete ``<f, h> = sum_i w_i conj(f_i) h_i`` (conjugate-linear in ``f``)."""
    f = g.check(f)
    h = g.check(h)
    return complex(np.sum(g.weights * np.conj(f) * h))


def norm(g: Grid, f):
    f = g.check(f)
    return float(np.sqrt(np.sum(g.weights * np.abs(f) ** 2)))


def write_snapshot_csv(path, g: Grid, values):
    """Write ``x[,y],value`` rows, one per interior node."""
    values = g.check(values)
    header = ["x", "value"] if g.dim == 1 else ["x", "y", "value"]
    cplx = np.iscomplexobj(values)
    if cplx:
        header = header[:-1] + ["value_re", "value_im"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for c, v in zip(g.coords, values):
            row = [repr(float(t)) for t in c]
            row += [repr(float(v.real)), repr(float(v.imag))] if cplx else [repr(float(v))]
            w.writerow(row)
