"""End-to-end analyses shared by the CLI and the acceptance tests."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import spectral, steady
from .errors import InconsistencyError, WrongRegimeError
from .normalform import NormalForm, normal_form
from .spectral import EigenPair, HopfCrossing, Linearization, Transversality
from .steady import BifurcationScalars, SteadyBranchPoint

ORACLE_TOL = 1e-8


@dataclass
class OracleLog:
    """Iterative-versus-dense eigenvalue comparisons."""

    entries: list = field(default_factory=list)

    def add(self, name, iterative, dense):
        iterative, dense = complex(iterative), complex(dense)
        rel = abs(iterative - dense) / max(1.0, abs(dense))
        self.entries.append({"quantity": name, "iterative": [iterative.real, iterative.imag],
                             "dense": [dense.real, dense.imag], "rel_diff": rel})
        return rel

    @property
    def worst(self):
        return max((e["rel_diff"] for e in self.entries), default=0.0)

    def check(self, tol=ORACLE_TOL):
        if self.worst > tol:
            bad = [e["quantity"] for e in self.entries if e["rel_diff"] > tol]
            raise InconsistencyError(f"dense oracle disagrees on {', '.join(bad)} (worst {self.worst:.2e})")


def eigen(problem, dense=False, oracle: Optional[OracleLog] = None) -> EigenPair:
    ep = spectral.principal_eigenpair(problem.op, problem.m, dense=dense)
    if oracle is not None:
        other = spectral.principal_eigenpair(problem.op, problem.m, dense=not dense)
        it, dn = (other, ep) if dense else (ep, other)
        oracle.add("lambda_star", it.lambda_star, dn.lambda_star)
        oracle.add("lambda_star_adjoint", it.lambda_adjoint, dn.lambda_adjoint)
    return ep


@dataclass
class HopfAnalysis:
    lam: float
    eigenpair: EigenPair
    scalars: BifurcationScalars
    steady: SteadyBranchPoint
    linearization: Linearization
    crossing: HopfCrossing
    transversality: Transversality
    normal_form: NormalForm
    rho0: float                 # rightmost real eigenvalue at tau = 0

    def report(self):
        c = self.crossing
        tr = self.transversality
        out = {"lambda": self.lam, "lambda_star": self.eigenpair.lambda_star,
               "regime": self.scalars.regime, "max_u": self.steady.max_u,
               "crossing": c.report(), "rho_tau0": self.rho0,
               "transversality": {"n": tr.n, "tau": tr.tau, "dmu_dtau": [tr.dmu_dtau.real, tr.dmu_dtau.imag],
                                  "fd_re": tr.fd_re},
               "normal_form": self.normal_form.report()}
        return out


def steady_state(problem, ep, lam, sign=1.0):
    s = steady.bifurcation_scalars(ep, problem.model, problem.grid)
    lam2 = None
    if s.regime == steady.DEGENERATE:
        lam2 = steady.lambda_second_derivative(ep, s, problem.model, problem.op)[1]
    t = steady.predictor_amplitude(lam, s, lam2, sign)
    pt = steady.newton_steady(lam, t * ep.phi, problem.model, problem.op, t_pred=t, phi=ep.phi)
    return s, pt


def hopf(problem, lam, n=0, n_max=3, ep=None, dense=False, oracle: Optional[OracleLog] = None) -> HopfAnalysis:
    """Eigenpair, steady state, crossing, transversality and normal form at ``lam``."""
    if ep is None:
        ep = eigen(problem, dense=dense, oracle=oracle)
    if abs(lam - ep.lambda_star) <= 1e-4 * ep.lambda_star:
        raise WrongRegimeError(f"lambda = {lam} is at the bifurcation point lambda* = {ep.lambda_star:.8g}; "
                               "the steady branch and its crossings are undefined there")
    s, pt = steady_state(problem, ep, lam)
    lin = spectral.linearize(problem.op, problem.model, lam, pt.u)
    nu0, th0 = spectral.crossing_seed(ep, lam, s.h_star)
    crossing = spectral.find_hopf_crossing(lin, nu0, th0, ep.phi, ep.phi_star, n_max=max(n_max, n))
    tr = spectral.transversality(lin, crossing, n)
    rho0, _ = spectral.rightmost_real_eigenvalue(lin.J0 + lin.J1)
    nf = normal_form(lin, crossing, tr, n, unstable_at_zero_delay=rho0 > 0)
    if oracle is not None:
        mu = spectral.dense_eigenvalues(lin.pencil(crossing.theta))
        oracle.add("i_nu", 1j * crossing.nu, mu[np.argmin(np.abs(mu - 1j * crossing.nu))])
        mu_a = spectral.dense_eigenvalues(lin.adjoint_pencil(crossing.theta))
        oracle.add("adjoint_minus_i_nu", -1j * crossing.nu, mu_a[np.argmin(np.abs(mu_a + 1j * crossing.nu))])
        r = spectral.dense_eigenvalues(lin.J0 + lin.J1)
        oracle.add("rho_tau0", rho0, r[np.argmax(r.real)])
    return HopfAnalysis(lam=lam, eigenpair=ep, scalars=s, steady=pt, linearization=lin, crossing=crossing,
                        transversality=tr, normal_form=nf, rho0=float(rho0))
