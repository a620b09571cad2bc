"""Per-capita growth laws ``f(x, u)`` with exact u-derivatives up to third order."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import exprlang
from .errors import ConfigError, DomainError

KINDS = ("hutchinson", "logistic_heterogeneous", "food_limited", "weak_allee", "custom_polynomial")


def _field(src, default):
    if src is None:
        src = default
    if isinstance(src, str):
        return exprlang.compile_expr(src)
    if callable(src):
        return src
    value = float(src)
    return lambda x, y=0.0: np.full(np.shape(x), value) if np.ndim(x) else value


@dataclass(frozen=True)
class GrowthModel:
    """Growth law.  ``params`` by kind:

    * ``food_limited``: ``c`` (default 0.5), f = (1 - u)/(1 + c u)
    * ``logistic_heterogeneous``: ``m``, ``a`` expressions, f = m(x) - a(x) u
    * ``custom_polynomial``: ``coeffs`` [c0, c1, ...], f = sum c_k u^k
    * ``hutchinson``: f = 1 - u
    * ``weak_allee``: f = 2 (1 - u)(u + 1/2)
    """

    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown model kind {self.kind!r}; expected one of {', '.join(KINDS)}")
        if self.kind == "custom_polynomial":
            coeffs = self.params.get("coeffs")
            if not coeffs:
                raise ConfigError("custom_polynomial needs a non-empty 'coeffs' list")
        if self.kind == "logistic_heterogeneous":
            # compile eagerly so syntax errors surface at construction
            object.__setattr__(self, "_m", _field(self.params.get("m"), 1.0))
            object.__setattr__(self, "_a", _field(self.params.get("a"), 1.0))

    @property
    def c(self):
        return float(self.params.get("c", 0.5))

    def eval(self, u, x=None, y=None):
        """Return ``(f, f_u, f_uu, f_uuu)`` at ``u`` (scalar or array)."""
        u = np.asarray(u, dtype=float)
        zero = np.zeros_like(u)
        kind = self.kind
        if kind == "hutchinson":
            return 1.0 - u, zero - 1.0, zero, zero
        if kind == "weak_allee":
            return 1.0 + u - 2.0 * u * u, 1.0 - 4.0 * u, zero - 4.0, zero
        if kind == "food_limited":
            c = self.c
            s = 1.0 + c * u
            if np.any(s == 0):
                raise DomainError(f"food-limited growth has a pole at u = {-1.0 / c}")
            k = 1.0 + c
            return (1.0 - u) / s, -k / s**2, 2.0 * c * k / s**3, -6.0 * c * c * k / s**4
        if kind == "custom_polynomial":
            p = np.polynomial.Polynomial(self.params["coeffs"])
            return p(u), p.deriv(1)(u), p.deriv(2)(u), p.deriv(3)(u)
        # logistic_heterogeneous
        xx = 0.0 if x is None else x
        yy = 0.0 if y is None else y
        m = np.broadcast_to(self._m(xx, yy), u.shape)
        a = np.broadcast_to(self._a(xx, yy), u.shape)
        return m - a * u, -a + zero, zero, zero

    def on_grid(self, g, u):
        """Evaluate at every interior node of ``g``."""
        u = np.broadcast_to(np.asarray(u, dtype=float), (g.n,))
        if g.dim == 1:
            return self.eval(u, g.x)
        return self.eval(u, g.x, g.y)

    def m_field(self, g):
        return self.on_grid(g, 0.0)[0]


def eval_growth(model: GrowthModel, x, u):
    """Scalar evaluation at point ``x`` (number or (x, y) pair)."""
    xy = np.atleast_1d(np.asarray(x, dtype=float))
    y = xy[1] if xy.size > 1 else 0.0
    return tuple(float(v) for v in model.eval(np.float64(u), xy[0], y))


_STENCILS = {
    1: ((-1, 1), (-0.5, 0.5)),
    2: ((-1, 0, 1), (1.0, -2.0, 1.0)),
    3: ((-2, -1, 1, 2), (-0.5, 1.0, -1.0, 0.5)),
}


def _richardson(f, u, order, h, levels=3):
    offsets, coefs = _STENCILS[order]
    table = []
    for k in range(levels):
        hk = h / 2**k
        table.append(sum(c * f(u + o * hk) for o, c in zip(offsets, coefs)) / hk**order)
    for j in range(1, levels):
        table = [(4**j * table[i + 1] - table[i]) / (4**j - 1) for i in range(len(table) - 1)]
    return table[0]


def finite_difference_check(model: GrowthModel, x, u, h=1e-5):
    """Worst relative error of analytic f_u, f_uu, f_uuu against differences of f.

    Central differences with two Richardson levels; the k-th derivative uses
    base step ``h * (100, 2000, 8000)[k-1]`` so rounding stays below truncation.
    """
    def f(v):
        return eval_growth(model, x, v)[0]

    exact = eval_growth(model, x, u)
    worst = 0.0
    for order, scale in ((1, 100.0), (2, 2000.0), (3, 8000.0)):
        approx = _richardson(f, u, order, h * scale)
        worst = max(worst, abs(exact[order] - approx) / max(1.0, abs(exact[order])))
    return worst
