"""Sparse advection-diffusion operators and the linear solves built on them.

The flux-form operator ``A u = div(d grad u - b u)`` is discretized with
central face fluxes; the adjoint ``div(d grad v) + b . grad v`` is realized as
the quadrature-weighted transpose ``W^-1 A^T W`` so that
``<v, A u>_h == <A_adj v, u>_h`` holds to rounding.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable, Sequence, Union

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import exprlang
from .errors import DegenerateKernelError, DimensionError, InvalidCoefficientError, NearSingularError
from .grid import Grid

Coef = Union[float, str, Callable]


def _as_callable(c: Coef):
    if callable(c):
        return c
    if isinstance(c, str):
        return exprlang.compile_expr(c)
    value = float(c)
    return lambda x, y=0.0: np.full(np.broadcast(x, y).shape, value) if np.ndim(x) or np.ndim(y) else value


@dataclass(frozen=True)
class CoefficientFields:
    """Diffusivity ``d``, advection ``b`` (one entry per axis) and ``m = f(x, 0)``.

    Each entry is a number, an expression string, or a vectorized callable
    ``f(x, y)``.
    """

    d: Coef = 1.0
    b: Sequence[Coef] = (0.0,)
    m: Coef = 1.0

    def d_at(self, x, y=0.0):
        return _finite("d", np.broadcast_to(_as_callable(self.d)(x, y), np.shape(x)).astype(float))

    def b_at(self, axis, x, y=0.0):
        b = self.b if axis < len(self.b) else ()
        if axis >= len(b):
            return np.zeros(np.shape(x))
        return _finite(f"b[{axis}]", np.broadcast_to(_as_callable(b[axis])(x, y), np.shape(x)).astype(float))

    def m_at(self, x, y=0.0):
        return _finite("m", np.broadcast_to(_as_callable(self.m)(x, y), np.shape(x)).astype(float))


def _finite(name, v):
    if not np.all(np.isfinite(v)):
        raise InvalidCoefficientError(f"coefficient {name} is not finite on the grid")
    return v


@dataclass(frozen=True, eq=False)
class DiscreteOperator:
    A: sp.csr_matrix
    A_adj: sp.csr_matrix
    grid: Grid
    coeffs: CoefficientFields
    m: np.ndarray

    @property
    def n(self):
        return self.grid.n


def _face_terms(d_face, b_face, h, upwind):
    """Coefficients of u_left and u_right in the flux through one face.

    Flux (positive in +axis direction) = d (u_R - u_L)/h - b * u_face.
    """
    if upwind:
        bl = np.where(b_face > 0, b_face, 0.0)
        br = np.where(b_face < 0, b_face, 0.0)
    else:
        bl = br = 0.5 * b_face
    cL = -d_face / h - bl
    cR = d_face / h - br
    return cL, cR


def assemble(g: Grid, c: CoefficientFields, upwind=False) -> DiscreteOperator:
    n = g.n
    rows, cols, vals = [], [], []
    if g.dim == 1:
        (h,) = g.spacing
        a = g.origin[0]
        xf = a + h * (np.arange(n + 1) + 0.5)            # faces 0..n, face k between node k-1 and k
        d_face = c.d_at(xf)
        b_face = c.b_at(0, xf)
        _check_d(d_face, c.d_at(g.x))
        cL, cR = _face_terms(d_face, b_face, h, upwind)
        left = np.arange(-1, n)      # node left of face k
        right = np.arange(0, n + 1)  # node right of face k
        _scatter_faces(rows, cols, vals, left, right, cL, cR, h, n)
    else:
        hx, hy = g.spacing
        x0, y0 = g.origin
        nx, ny = g.lattice_shape
        imap = np.full((nx + 2, ny + 2), -1, dtype=np.int64)
        imap[1:-1, 1:-1] = g.index_map
        _check_d(None, c.d_at(g.x, g.y))
        # faces whose two lattice endpoints include at least one interior node
        for axis, hh in ((0, hx), (1, hy)):
            if axis == 0:
                Lidx = imap[:-1, 1:-1]
                Ridx = imap[1:, 1:-1]
                I, J = np.meshgrid(np.arange(nx + 1), np.arange(ny), indexing="ij")
                xf = x0 + hx * (I + 0.5)
                yf = y0 + hy * (J + 1)
            else:
                Lidx = imap[1:-1, :-1]
                Ridx = imap[1:-1, 1:]
                I, J = np.meshgrid(np.arange(nx), np.arange(ny + 1), indexing="ij")
                xf = x0 + hx * (I + 1)
                yf = y0 + hy * (J + 0.5)
            sel = (Lidx >= 0) | (Ridx >= 0)
            xf, yf, Lsel, Rsel = xf[sel], yf[sel], Lidx[sel], Ridx[sel]
            d_face = c.d_at(xf, yf)
            b_face = c.b_at(axis, xf, yf)
            _check_d(d_face, None)
            cL, cR = _face_terms(d_face, b_face, hh, upwind)
            _scatter_faces(rows, cols, vals, Lsel, Rsel, cL, cR, hh, n)
    A = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))
    A.sum_duplicates()
    m = c.m_at(*((g.x,) if g.dim == 1 else (g.x, g.y)))
    return DiscreteOperator(A=A, A_adj=weighted_transpose(A, g.weights), grid=g, coeffs=c, m=m)


def _check_d(d_face, d_node):
    for v in (d_face, d_node):
        if v is not None and np.any(v <= 0):
            raise InvalidCoefficientError("diffusivity d must be positive on the closed domain")


def _scatter_faces(rows, cols, vals, left, right, cL, cR, h, n):
    # flux F_k = cL u_L + cR u_R ; node right of face gets -F/h, node left gets +F/h
    left = np.asarray(left)
    right = np.asarray(right)
    for node, sign in ((left, 1.0), (right, -1.0)):
        ok = (node >= 0) & (node < n)
        for other, coef in ((left, cL), (right, cR)):
            ok2 = ok & (other >= 0) & (other < n)
            rows.append(node[ok2])
            cols.append(other[ok2])
            vals.append(sign * coef[ok2] / h)


def weighted_transpose(A, w):
    """``W^-1 A^T W`` for diagonal quadrature weights ``w``."""
    w = np.asarray(w, dtype=float)
    return sp.csr_matrix(sp.diags(1.0 / w) @ A.T @ sp.diags(w))


def adjoint_assemble(g: Grid, c: CoefficientFields, upwind=False):
    return assemble(g, c, upwind=upwind).A_adj


class Factorization:
    """Sparse LU of a square matrix with a cheap 1-norm condition estimate."""

    def __init__(self, M, cond_limit=1e12):
        self.M = sp.csc_matrix(M)
        self.complex = np.iscomplexobj(self.M.data)
        with warnings.catch_warnings():
            warnings.simplefilter("error", category=spla.MatrixRankWarning)
            try:
                self.lu = spla.splu(self.M)
            except (RuntimeError, spla.MatrixRankWarning) as exc:
                raise NearSingularError(f"matrix is singular: {exc}") from exc
        self._cond = None
        self.cond_limit = cond_limit
        if cond_limit is not None and self.condition() > cond_limit:
            raise NearSingularError("shifted matrix is numerically singular", self.condition())

    def solve(self, rhs):
        rhs = np.asarray(rhs)
        if rhs.shape[0] != self.M.shape[0]:
            raise DimensionError(f"rhs has {rhs.shape[0]} entries, matrix is {self.M.shape[0]}")
        if np.iscomplexobj(rhs) and not self.complex:
            return self.lu.solve(np.ascontiguousarray(rhs.real)) + 1j * self.lu.solve(np.ascontiguousarray(rhs.imag))
        dtype = complex if self.complex else float
        return self.lu.solve(np.ascontiguousarray(rhs, dtype=dtype))

    def condition(self):
        if self._cond is None:
            n = self.M.shape[0]
            dtype = self.M.dtype
            lu = self.lu
            inv = spla.LinearOperator(
                (n, n), dtype=dtype,
                matvec=lambda v: lu.solve(np.ascontiguousarray(v, dtype=dtype)),
                rmatvec=lambda v: lu.solve(np.ascontiguousarray(v, dtype=dtype), trans="H"),
            )
            with np.errstate(all="ignore"):
                inv_norm = spla.onenormest(inv)
            self._cond = float(spla.norm(self.M, 1) * inv_norm)
            if not np.isfinite(self._cond):
                self._cond = np.inf
        return self._cond


def shifted_matrix(opA, shift_diag=None, z=0.0):
    n = opA.shape[0]
    M = sp.csr_matrix(opA)
    if shift_diag is not None:
        M = M + sp.diags(np.asarray(shift_diag))
    if z != 0:
        M = M - z * sp.identity(n, format="csr")
    return M


def solve_shifted(opA, shift_diag, z, rhs, cond_limit=1e12, return_condition=False):
    """Solve ``(A + diag(shift_diag) - z I) x = rhs`` by sparse LU.

    Raises :class:`NearSingularError` carrying the condition estimate when the
    shifted matrix is singular to ``cond_limit``.
    """
    M = shifted_matrix(opA, shift_diag, z)
    fac = Factorization(M, cond_limit=cond_limit)
    x = fac.solve(rhs)
    r = M @ x - rhs
    rn = np.linalg.norm(rhs)
    if np.linalg.norm(r) > 1e-10 * max(rn, np.finfo(float).tiny):
        x = x - fac.solve(r)        # one step of iterative refinement
    if return_condition:
        return x, fac.condition()
    return x


def solve_bordered(L, ker, coker, rhs, weights=None):
    """Solve ``L x = Q rhs`` on the complement of ``ker`` for singular ``L``.

    ``Q`` removes the ``coker`` component of ``rhs``; the solution satisfies
    ``<ker, x>_h = 0``.  Realized as the bordered system
    ``[[L, ker], [ker^T W, 0]] [x; s] = [Q rhs; 0]``.
    """
    n = L.shape[0]
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=float)
    ker = np.asarray(ker)
    coker = np.asarray(coker)
    rhs = np.asarray(rhs)
    cc = np.sum(w * np.conj(coker) * coker)
    rhs_p = rhs - (np.sum(w * np.conj(coker) * rhs) / cc) * coker
    B = sp.bmat([[sp.csr_matrix(L), sp.csr_matrix(ker.reshape(-1, 1))],
                 [sp.csr_matrix((w * np.conj(ker)).reshape(1, -1)), None]], format="csc")
    try:
        fac = Factorization(B, cond_limit=1e14)
    except NearSingularError as exc:
        raise DegenerateKernelError(f"bordered matrix is singular: {exc}") from exc
    b = np.concatenate([rhs_p, np.zeros(1, dtype=rhs_p.dtype)])
    sol = fac.solve(b)
    r = B @ sol - b
    sol = sol - fac.solve(r)
    return sol[:n]


def write_coo(path, A):
    """Dump ``A`` as ``row col value`` lines (0-based)."""
    C = sp.coo_matrix(A)
    with open(path, "w", encoding="utf-8") as fh:
        for i, j, v in zip(C.row, C.col, C.data):
            fh.write(f"{i} {j} {v!r}\n")
