"""Small-amplitude steady states bifurcating from zero at the principal eigenvalue.

The stationary problem is ``F(u) = A u + lam * u * f(x, u) = 0``.  Near
``lam*`` the nontrivial branch is ``u ~ t phi`` with ``t = (lam - lam*) beta*``
unless the quadratic coefficient ``b`` vanishes, in which case the branch is a
pitchfork governed by ``lam''(0)``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .errors import (
    DomainError,
    NoConvergenceError,
    TrivialSolutionError,
    WrongRegimeError,
)
from .grid import integrate, norm
from .operators import DiscreteOperator, Factorization, solve_bordered
from .spectral import EigenPair, h_ratio

LAMBDA2 = "Lambda2"
LAMBDA1 = "Lambda1"
DEGENERATE = "Degenerate"


@dataclass(frozen=True)
class BifurcationScalars:
    a: float
    b_scalar: float
    beta_star: float          # nan when degenerate
    h_star: float
    regime: str
    lambda_star: float

    def to_dict(self):
        return {"a": self.a, "b": self.b_scalar,
                "beta_star": None if math.isnan(self.beta_star) else self.beta_star,
                "h_star": self.h_star, "regime": self.regime, "lambda_star": self.lambda_star}


@dataclass(frozen=True, eq=False)
class SteadyBranchPoint:
    lam: float
    u: np.ndarray
    t_pred: float
    newton_residual: float
    newton_iters: int
    trivial: bool = False

    @property
    def max_u(self):
        return float(np.max(self.u))

    def row(self, g):
        return {"lambda": self.lam, "t_pred": self.t_pred, "max_u": self.max_u,
                "l2_u": norm(g, self.u), "newton_iters": self.newton_iters,
                "residual": self.newton_residual}


def bifurcation_scalars(ep: EigenPair, model, grid=None) -> BifurcationScalars:
    g = grid if grid is not None else ep.grid
    f0, fu0, _, _ = model.on_grid(g, 0.0)
    phi, phis = ep.phi, ep.phi_star
    a = float(integrate(g, f0 * phi * phis))
    b = float(ep.lambda_star * integrate(g, fu0 * phi**2 * phis))
    if abs(b) <= 1e-8 * abs(a):
        regime, beta = DEGENERATE, math.nan
    else:
        regime = LAMBDA2 if b < 0 else LAMBDA1
        beta = a / (-b)
    return BifurcationScalars(a=a, b_scalar=b, beta_star=beta, h_star=h_ratio(ep, f0),
                              regime=regime, lambda_star=ep.lambda_star)


def predictor_amplitude(lam, s: BifurcationScalars, lambda2=None, sign=1.0):
    """Leading-order amplitude ``t`` of ``u ~ t phi``."""
    dl = lam - s.lambda_star
    if s.regime != DEGENERATE:
        return dl * s.beta_star
    if lambda2 is None:
        raise WrongRegimeError("degenerate regime needs lambda''(0) for the predictor")
    if dl == 0:
        return 0.0
    rad = 2.0 * dl / lambda2
    if rad < 0:
        raise DomainError(f"no real branch at lambda = {lam}: 2(lambda - lambda*)/lambda''(0) = {rad:.3e} < 0")
    return math.copysign(math.sqrt(rad), sign)


def predict_steady(lam, s: BifurcationScalars, ep: EigenPair, lambda2=None, sign=1.0):
    """``t phi`` with the leading-order amplitude."""
    return predictor_amplitude(lam, s, lambda2, sign) * ep.phi


def residual(op: DiscreteOperator, model, lam, u):
    f = model.on_grid(op.grid, u)[0]
    return op.A @ u + lam * u * f


def newton_steady(lam, u0, model, op: DiscreteOperator, t_pred=None, phi=None,
                  tol=1e-10, maxiter=25, max_halvings=8) -> SteadyBranchPoint:
    """Damped Newton for ``A u + lam u f(x, u) = 0`` starting at ``u0``.

    When ``t_pred`` is nonzero a nontrivial solution is required: convergence
    to ``||u||_h <= 0.1 |t_pred| ||phi||_h`` raises TrivialSolutionError.
    """
    g = op.grid
    u = np.array(u0, dtype=float)
    F = residual(op, model, lam, u)
    r = norm(g, F)
    it = 0
    while r > tol:
        if it >= maxiter:
            raise NoConvergenceError(f"Newton at lambda={lam} stalled at residual {r:.3e} after {it} steps")
        f, fu, _, _ = model.on_grid(g, u)
        J = sp.csc_matrix(op.A + sp.diags(lam * (f + u * fu)))
        step = Factorization(J, cond_limit=None).solve(-F)
        alpha = 1.0
        for _ in range(max_halvings + 1):
            trial = u + alpha * step
            F_trial = residual(op, model, lam, trial)
            r_trial = norm(g, F_trial)
            if np.isfinite(r_trial) and r_trial < r:
                break
            alpha *= 0.5
        else:
            if not np.isfinite(r_trial) or r_trial > 10 * r:
                raise NoConvergenceError(f"Newton at lambda={lam} diverged (residual {r_trial:.3e})")
        u, F, r = trial, F_trial, r_trial
        it += 1
    scale = norm(g, phi) if phi is not None else 1.0
    threshold = 0.1 * abs(t_pred) * scale if t_pred else 0.0
    trivial = norm(g, u) <= max(threshold, 1e-12)
    if trivial and t_pred:
        raise TrivialSolutionError(
            f"Newton at lambda={lam} collapsed to the zero solution (||u|| = {norm(g, u):.2e})")
    return SteadyBranchPoint(lam=float(lam), u=u, t_pred=float(t_pred or 0.0),
                             newton_residual=float(r), newton_iters=it, trivial=bool(trivial))


def continue_branch(lambda_values, s: BifurcationScalars, ep: EigenPair, model, op,
                    lambda2=None, sign=1.0):
    """Newton at each ``lambda`` from the asymptotic predictor ``t phi``.

    When that start fails (collapse to zero or no convergence) the previous
    branch point is tried as a second start.
    """
    points = []
    u_prev = None
    for lam in lambda_values:
        t = predictor_amplitude(lam, s, lambda2, sign)
        starts = [t * ep.phi] + ([u_prev] if u_prev is not None else [])
        for i, u0 in enumerate(starts):
            try:
                pt = newton_steady(lam, u0, model, op, t_pred=t, phi=ep.phi)
                break
            except (NoConvergenceError, TrivialSolutionError) as exc:
                if i == len(starts) - 1:
                    raise type(exc)(f"branch continuation failed at lambda={lam}: {exc}") from exc
        points.append(pt)
        u_prev = pt.u
    return points


def second_order_correction(ep: EigenPair, model, op, ordering="derived"):
    """``h''[phi]^2`` from the bordered solve on ``L = A + lam* m``.

    ``ordering="derived"`` applies the projected inverse to ``f_u(x,0) phi^2``;
    ``ordering="printed"`` multiplies ``L^-1[phi^2]`` by ``f_u(x,0)`` afterwards.
    """
    g = op.grid
    lam = ep.lambda_star
    f0, fu0, _, _ = model.on_grid(g, 0.0)
    L = sp.csr_matrix(op.A + sp.diags(lam * f0))
    if ordering == "derived":
        return -2.0 * lam * solve_bordered(L, ep.phi, ep.phi_star, fu0 * ep.phi**2, g.weights)
    if ordering == "printed":
        return -2.0 * lam * fu0 * solve_bordered(L, ep.phi, ep.phi_star, ep.phi**2, g.weights)
    raise ValueError(f"unknown ordering {ordering!r}")


def lambda_second_derivative(ep: EigenPair, s: BifurcationScalars, model, op):
    """``lam''(0)`` for the pitchfork case, as ``(printed, derived)`` orderings."""
    if s.regime != DEGENERATE:
        raise WrongRegimeError(f"lambda''(0) applies to the degenerate regime, not {s.regime}")
    g = op.grid
    lam = ep.lambda_star
    _, fu0, fuu0, _ = model.on_grid(g, 0.0)
    phi, phis = ep.phi, ep.phi_star
    cubic = 3.0 * lam * integrate(g, fuu0 * phi**3 * phis)
    out = []
    for ordering in ("printed", "derived"):
        H = second_order_correction(ep, model, op, ordering)
        out.append(float(-(cubic + 6.0 * lam * integrate(g, fu0 * phi * H * phis)) / (3.0 * s.a)))
    return tuple(out)


BRANCH_FIELDS = ("lambda", "t_pred", "max_u", "l2_u", "newton_iters", "residual")


def write_branch_csv(path, g, points):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=BRANCH_FIELDS)
        w.writeheader()
        for p in points:
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in p.row(g).items()})
