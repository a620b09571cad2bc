import math

import numpy as np
import pytest

from conftest import problem_1d
from hopfdelay import spectral, steady
from hopfdelay.errors import DomainError, TrivialSolutionError, WrongRegimeError
from hopfdelay.grid import integrate


def _setup(kind, n=199, **kw):
    pb = problem_1d(kind, n, **kw)
    ep = spectral.principal_eigenpair(pb.op, pb.m)
    return pb, ep, steady.bifurcation_scalars(ep, pb.model, pb.grid)


@pytest.mark.parametrize("kind, params, b, regime", [
    ("hutchinson", {}, -1 / 6, steady.LAMBDA2),
    ("weak_allee", {}, 1 / 6, steady.LAMBDA1),
    ("food_limited", {"c": 0.5}, -0.25, steady.LAMBDA2),
])
def test_scalars_closed_forms(kind, params, b, regime):
    # phi = phi* = sin(x)/2, so a = pi/8 and b = fu(0) lambda* int phi^3 = fu(0)/6
    _, ep, s = _setup(kind, params=params)
    assert s.a == pytest.approx(math.pi / 8, rel=1e-4)
    assert s.b_scalar == pytest.approx(b, rel=1e-4)
    assert s.regime == regime
    assert s.beta_star == pytest.approx(s.a / -s.b_scalar)


def test_predictor_domain_errors():
    _, _, s = _setup("hutchinson")
    assert steady.predictor_amplitude(1.1, s) > 0
    deg = steady.BifurcationScalars(1.0, 0.0, math.nan, 1.0, steady.DEGENERATE, 1.0)
    with pytest.raises(WrongRegimeError):
        steady.predictor_amplitude(1.1, deg)
    with pytest.raises(DomainError):
        steady.predictor_amplitude(1.1, deg, lambda2=-1.0)
    assert steady.predictor_amplitude(0.9, deg, lambda2=-1.0, sign=-1) == pytest.approx(-math.sqrt(0.2))


def test_branch_continuation_residuals():
    pb, ep, s = _setup("hutchinson")
    pts = steady.continue_branch([1.02, 1.05, 1.1, 1.2], s, ep, pb.model, pb.op)
    assert all(p.newton_residual <= 1e-10 for p in pts)
    amps = [p.max_u for p in pts]
    assert amps == sorted(amps) and all(np.all(p.u > 0) for p in pts)


def test_newton_rejects_collapse():
    pb, ep, s = _setup("hutchinson")
    # below lambda* the only nonnegative steady state is zero
    with pytest.raises(TrivialSolutionError):
        steady.newton_steady(0.95, 0.01 * ep.phi, pb.model, pb.op, t_pred=0.1, phi=ep.phi)


def test_weak_allee_branch_lies_below_threshold():
    pb, ep, s = _setup("weak_allee")
    t = steady.predictor_amplitude(0.97, s)
    pt = steady.newton_steady(0.97, t * ep.phi, pb.model, pb.op, t_pred=t, phi=ep.phi)
    assert pt.max_u > 0 and pt.newton_residual < 1e-10


def test_lambda_second_derivative_symmetric_pitchfork():
    # f = 1 - u^2 has f_u(0) = 0, so both orderings reduce to -(1/a) lam* int f_uu phi^3 phi* ... = 0.375
    pb, ep, s = _setup("custom_polynomial", n=399, params={"coeffs": [1, 0, -1]})
    assert s.regime == steady.DEGENERATE
    printed, derived = steady.lambda_second_derivative(ep, s, pb.model, pb.op)
    assert printed == pytest.approx(0.375, rel=1e-4) and derived == pytest.approx(0.375, rel=1e-4)


def _newton_lambda2(pb, ep, s, lam2, dl):
    """lambda''(0) from solved branch points: lam - lam* = lam'' t^2 / 2 + O(t^4) for an odd branch."""
    vals = []
    for d in dl:
        lam = ep.lambda_star + d
        t = steady.predictor_amplitude(lam, s, lam2)
        pt = steady.newton_steady(lam, t * ep.phi, pb.model, pb.op, t_pred=t, phi=ep.phi)
        tt = integrate(pb.grid, pt.u * ep.phi_star) / integrate(pb.grid, ep.phi * ep.phi_star)
        vals.append(2 * d / tt**2)
    # Richardson in d (error is O(d))
    return 2 * vals[1] - vals[0]


def test_lambda_second_derivative_orderings_against_newton():
    pb, ep, s = _setup("logistic_heterogeneous", n=399, params={"m": 1.0, "a": "cos(x)"})
    assert s.regime == steady.DEGENERATE
    printed, derived = steady.lambda_second_derivative(ep, s, pb.model, pb.op)
    oracle = _newton_lambda2(pb, ep, s, derived, [math.copysign(2e-4, derived), math.copysign(1e-4, derived)])
    assert derived == pytest.approx(oracle, rel=2e-2)
    assert abs(printed - oracle) > 10 * abs(derived - oracle)


def test_branch_csv(tmp_path):
    pb, ep, s = _setup("hutchinson", n=99)
    pts = steady.continue_branch([1.05, 1.1], s, ep, pb.model, pb.op)
    p = tmp_path / "b.csv"
    steady.write_branch_csv(p, pb.grid, pts)
    lines = p.read_text().splitlines()
    assert lines[0].split(",") == list(steady.BRANCH_FIELDS) and len(lines) == 3
