"""Principal eigenpairs, delayed characteristic crossings and transversality.

Conventions: fields live on interior nodes, ``<f, g>_h = sum w conj(f) g``.
The linearization about a steady state ``u`` is split as

    J0 = A + lam * diag(f(x, u))        (instantaneous part)
    J1 = lam * diag(u * f_u(x, u))      (delayed part)

so that ``mu`` is a characteristic root for delay ``tau`` iff
``J0 + exp(-mu tau) J1 - mu I`` is singular.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .errors import (
    InconsistencyError,
    NearSingularError,
    NoConvergenceError,
    NoCrossingError,
    NotPrincipalError,
    ViolatedLemmaError,
    WrongBranchError,
)
from .grid import Grid, integrate, inner_product, norm
from .operators import DiscreteOperator, Factorization, weighted_transpose

log = logging.getLogger(__name__)

DENSE_LIMIT = 1500


@dataclass(frozen=True, eq=False)
class EigenPair:
    lambda_star: float
    phi: np.ndarray
    phi_star: np.ndarray
    residual: float
    adjoint_residual: float
    lambda_adjoint: float
    grid: Grid
    iterations: int = 0


# ---------------------------------------------------------------------------
# principal eigenpair of -A phi = lam m phi


def _inverse_iteration_generalized(A, m, w, tol, maxiter):
    n = A.shape[0]
    negA = -sp.csr_matrix(A)
    M = sp.diags(m)
    x = np.ones(n)
    x /= w @ x
    sigma = 0.0
    fac = Factorization(negA, cond_limit=None)
    lam = np.nan
    lam_prev = np.inf
    for it in range(1, maxiter + 1):
        y = fac.solve(m * x)
        lam = sigma + (y @ x) / (y @ y)
        s = w @ y
        if s == 0:
            raise NoConvergenceError("inverse iteration collapsed to zero")
        x = y / s
        r = np.sqrt(w @ (A @ x + lam * m * x) ** 2) / np.sqrt(w @ x**2)
        if r <= tol:
            return lam, x, r, it
        if sigma == 0.0 and abs(lam - lam_prev) <= 1e-4 * abs(lam) and lam > 0:
            # Rayleigh-type shift once the iteration has settled on the positive root
            sigma = lam * (1.0 - 1e-9)
            try:
                fac = Factorization(negA - sigma * M, cond_limit=None)
            except NearSingularError:
                return lam, x, r, it
        lam_prev = lam
    raise NoConvergenceError(f"principal eigenvalue iteration did not converge in {maxiter} steps (residual {r:.2e})")


def principal_eigenpair(op: DiscreteOperator, m=None, tol=1e-10, maxiter=10_000, dense=False) -> EigenPair:
    """Smallest positive ``lam`` with ``-A phi = lam m phi`` and ``phi > 0``.

    Both the forward and the adjoint eigenfunctions are normalized to unit
    integral.  ``dense=True`` replaces the iteration by a dense generalized
    eigendecomposition (verification path, N <= 1500).
    """
    g = op.grid
    m = op.m if m is None else np.asarray(m, dtype=float)
    if not np.max(m) > 0:
        raise NotPrincipalError("max m must be positive for a positive principal eigenvalue")
    w = g.weights
    if dense:
        lam, phi = _dense_principal(op.A, m)
        lam_a, phis = _dense_principal(op.A_adj, m)
        its = 0
    else:
        lam, phi, _, its = _inverse_iteration_generalized(op.A, m, w, tol, maxiter)
        lam_a, phis, _, its_a = _inverse_iteration_generalized(op.A_adj, m, w, tol, maxiter)
        its = max(its, its_a)
    phi = phi / integrate(g, phi)
    phis = phis / integrate(g, phis)
    for name, v in (("phi", phi), ("phi_star", phis)):
        if np.any(v <= 0):
            raise NotPrincipalError(f"{name} has non-positive components ({int(np.sum(v <= 0))} nodes)")
    if not lam > 0:
        raise NotPrincipalError(f"eigenvalue {lam} is not positive")
    if abs(lam - lam_a) > 1e-8 * abs(lam):
        raise InconsistencyError(f"forward ({lam!r}) and adjoint ({lam_a!r}) principal eigenvalues disagree")
    res = norm(g, op.A @ phi + lam * m * phi) / norm(g, phi)
    res_a = norm(g, op.A_adj @ phis + lam * m * phis) / norm(g, phis)
    return EigenPair(lambda_star=float(lam), phi=phi, phi_star=phis, residual=res,
                     adjoint_residual=res_a, lambda_adjoint=float(lam_a), grid=g, iterations=its)


def _dense_principal(A, m):
    n = A.shape[0]
    if n > DENSE_LIMIT:
        raise ValueError(f"dense oracle limited to N <= {DENSE_LIMIT}, got {n}")
    vals, vecs = sla.eig(-A.toarray(), np.diag(m))
    best = None
    for k in np.argsort(np.where(np.isfinite(vals), vals.real, np.inf)):
        v = vals[k]
        if not np.isfinite(v) or v.real <= 0 or abs(v.imag) > 1e-8 * abs(v):
            continue
        vec = vecs[:, k].real
        vec = vec * np.sign(vec[np.argmax(np.abs(vec))])
        if np.all(vec > -1e-12 * np.abs(vec).max()):
            best = (float(v.real), np.abs(vec))
            break
    if best is None:
        raise NotPrincipalError("dense oracle found no positive eigenvalue with a positive eigenvector")
    return best


def h_ratio(ep: EigenPair, m) -> float:
    """``int m phi phi* / int phi phi*``; positive for a valid eigenpair."""
    g = ep.grid
    m = np.asarray(m, dtype=float) * np.ones(g.n)
    val = integrate(g, m * ep.phi * ep.phi_star) / integrate(g, ep.phi * ep.phi_star)
    if not val > 0:
        raise ViolatedLemmaError(f"h ratio {val!r} is not positive; discretization failure")
    return float(val)


# ---------------------------------------------------------------------------
# eigenvalue kernel


def dense_eigenvalues(M):
    M = M.toarray() if sp.issparse(M) else np.asarray(M)
    if M.shape[0] > DENSE_LIMIT:
        raise ValueError(f"dense oracle limited to N <= {DENSE_LIMIT}, got {M.shape[0]}")
    return sla.eigvals(M)


def _nearest_dense(M, seed):
    M = M.toarray() if sp.issparse(M) else np.asarray(M)
    vals, vecs = sla.eig(M)
    k = int(np.argmin(np.abs(vals - seed)))
    return complex(vals[k]), vecs[:, k]


def rightmost_eigenvalue(M, seed, x0=None, tol=1e-12, maxiter=200, dense=False):
    """Eigenvalue of ``M`` nearest ``seed`` by shift-invert iteration.

    The shift is refreshed with the Rayleigh quotient whenever the iteration
    stalls, so convergence is quadratic near the end.  Returns ``(mu, x)``
    with ``x`` of unit Euclidean norm.
    """
    if dense:
        mu, x = _nearest_dense(M, seed)
        return mu, x / np.linalg.norm(x)
    M = sp.csr_matrix(M, dtype=complex)
    n = M.shape[0]
    I = sp.identity(n, format="csr", dtype=complex)
    scale = max(1.0, sp.linalg.norm(M, 1))
    if x0 is None:
        rng = np.random.default_rng(12345)
        x = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    else:
        x = np.asarray(x0, dtype=complex).copy()
    x /= np.linalg.norm(x)
    sigma = complex(seed)
    fac = _shift_factor(M, I, sigma, scale)
    mu = sigma
    best = np.inf
    stall = 0
    for it in range(maxiter):
        y = fac.solve(x)
        ny = np.linalg.norm(y)
        if not np.isfinite(ny) or ny == 0:
            raise NoConvergenceError("shift-invert iteration produced a non-finite vector")
        x = y / ny
        Mx = M @ x
        mu = np.vdot(x, Mx)
        r = np.linalg.norm(Mx - mu * x)
        if r <= tol * scale:
            return complex(mu), x
        if r < 0.5 * best:
            best = r
            stall = 0
        else:
            stall += 1
        if stall >= 2 or it % 4 == 3:
            sigma = mu
            fac = _shift_factor(M, I, sigma, scale)
            stall = 0
    raise NoConvergenceError(f"shift-invert iteration did not converge (residual {r:.2e})")


def _shift_factor(M, I, sigma, scale):
    try:
        return Factorization(M - sigma * I, cond_limit=None)
    except NearSingularError:
        # shift landed on an eigenvalue to working precision; nudge it
        return Factorization(M - (sigma + 1e-10 * scale) * I, cond_limit=None)


# ---------------------------------------------------------------------------
# linearization and crossings


@dataclass(frozen=True, eq=False)
class Linearization:
    """Linearization of the delayed equation about a steady state ``u``."""

    lam: float
    u: np.ndarray
    J0: sp.csr_matrix
    J1diag: np.ndarray          # diagonal of J1 = lam * u * f_u(u)
    grid: Grid
    A_adj: sp.csr_matrix
    f: np.ndarray
    fu: np.ndarray
    fuu: np.ndarray
    fuuu: np.ndarray

    @property
    def J1(self):
        return sp.diags(self.J1diag, format="csr")

    @property
    def J0_adj(self):
        return sp.csr_matrix(self.A_adj + sp.diags(self.lam * self.f))

    def pencil(self, theta):
        """``J0 + exp(-i theta) J1``."""
        return sp.csr_matrix(self.J0 + sp.diags(np.exp(-1j * theta) * self.J1diag))

    def adjoint_pencil(self, theta):
        """Weighted conjugate transpose of :meth:`pencil`."""
        return sp.csr_matrix(self.J0_adj + sp.diags(np.exp(1j * theta) * self.J1diag))

    def characteristic(self, mu, tau):
        """``Delta(mu, tau) = J0 + exp(-mu tau) J1 - mu I``."""
        n = self.grid.n
        return sp.csr_matrix(self.J0 + sp.diags(np.exp(-mu * tau) * self.J1diag) - mu * sp.identity(n))


def linearize(op: DiscreteOperator, model, lam, u) -> Linearization:
    g = op.grid
    f, fu, fuu, fuuu = model.on_grid(g, u)
    J0 = sp.csr_matrix(op.A + sp.diags(lam * f))
    return Linearization(lam=float(lam), u=np.asarray(u, dtype=float), J0=J0, J1diag=lam * u * fu,
                         grid=g, A_adj=op.A_adj, f=f, fu=fu, fuu=fuu, fuuu=fuuu)


@dataclass(frozen=True, eq=False)
class HopfCrossing:
    lam: float
    nu: float
    theta: float
    psi: np.ndarray
    psi_tilde: np.ndarray
    residual: float
    adjoint_residual: float
    tau_ladder: list
    sweep: Optional[np.ndarray] = field(default=None, repr=False)

    def tau(self, n):
        return (self.theta + 2 * n * math.pi) / self.nu

    def report(self):
        return {"lambda": self.lam, "nu": self.nu, "theta": self.theta,
                "tau": list(self.tau_ladder), "residual": self.residual,
                "adjoint_residual": self.adjoint_residual}


def normalize_against(g: Grid, v, ref):
    """Rotate ``v`` so ``<ref, v>_h`` is real and non-negative, and scale to ``||ref||_h``."""
    p = inner_product(g, ref, v)
    if abs(p) > 0:
        v = v * (abs(p) / p)
    return v * (norm(g, ref) / norm(g, v))


def _mu_at(lin, theta, seed, x0, dense):
    return rightmost_eigenvalue(lin.pencil(theta), seed, x0=x0, dense=dense)


def find_hopf_crossing(lin: Linearization, nu_seed, theta_seed, phi=None, phi_star=None,
                       n_max=3, n_sweep=64, tol=1e-10, dense=False) -> HopfCrossing:
    """Locate ``(nu, theta, psi)`` with ``(J0 + e^{-i theta} J1 - i nu) psi = 0``, ``nu > 0``.

    The eigenvalue ``mu(theta)`` of the pencil closest to ``i nu_seed`` at
    ``theta_seed`` is continued around the circle with ``n_sweep`` points; sign
    changes of ``Re mu`` are refined by bisection until ``|Re mu| <= tol``.
    """
    g = lin.grid
    if not np.any(lin.J1diag):
        raise NoCrossingError("delayed coupling J1 vanishes; the spectrum does not depend on the delay")
    thetas = (theta_seed + 2 * math.pi * np.arange(n_sweep + 1) / n_sweep)
    mus = np.empty(n_sweep + 1, dtype=complex)
    vecs = []
    mu, x = _mu_at(lin, thetas[0], 1j * nu_seed, phi if phi is not None else None, dense)
    for k, th in enumerate(thetas):
        mu, x = _mu_at(lin, th, mu, x, dense)
        mus[k] = mu
        vecs.append(x)
    re = mus.real
    candidates = []
    for k in range(n_sweep):
        if re[k] == 0.0 or re[k] * re[k + 1] < 0:
            candidates.append(k)
    if not candidates:
        raise NoCrossingError(f"Re mu(theta) keeps one sign over [0, 2pi) (range {re.min():.3e}..{re.max():.3e})")
    roots = []
    for k in candidates:
        roots.append(_bisect(lin, thetas[k], thetas[k + 1], mus[k], vecs[k], re[k], tol, dense))
    good = [r for r in roots if r[1].imag > 0]
    if not good:
        raise WrongBranchError("all crossings of the continued branch have nu <= 0; retry with the conjugate branch")
    theta, mu, psi = min(good, key=lambda r: abs(_wrap(r[0] - theta_seed)))
    theta = theta % (2 * math.pi)
    nu = float(mu.imag)
    if phi is not None:
        psi = normalize_against(g, psi, phi)
    else:
        psi = psi / psi[np.argmax(np.abs(psi))]
        psi = psi / norm(g, psi)
    res = norm(g, lin.pencil(theta) @ psi - 1j * nu * psi)
    # adjoint: kernel of the weighted conjugate transpose, eigenvalue conj(i nu) = -i nu
    seed_adj = phi_star if phi_star is not None else np.conj(psi)
    mu_a, psit = rightmost_eigenvalue(lin.adjoint_pencil(theta), -1j * nu, x0=seed_adj, dense=dense)
    if phi_star is not None:
        psit = normalize_against(g, psit, phi_star)
    else:
        psit = psit / norm(g, psit)
    res_a = norm(g, lin.adjoint_pencil(theta) @ psit + 1j * nu * psit)
    ladder = [(theta + 2 * n * math.pi) / nu for n in range(n_max + 1)]
    return HopfCrossing(lam=lin.lam, nu=nu, theta=float(theta), psi=psi, psi_tilde=psit,
                        residual=res, adjoint_residual=res_a, tau_ladder=ladder,
                        sweep=np.column_stack([thetas, mus]))


def _wrap(a):
    return (a + math.pi) % (2 * math.pi) - math.pi


def _bisect(lin, a, b, mu_a, x_a, re_a, tol, dense, maxiter=200):
    mu, x = mu_a, x_a
    if re_a == 0.0:
        return a, mu, x
    for _ in range(maxiter):
        c = 0.5 * (a + b)
        mu, x = _mu_at(lin, c, mu, x, dense)
        if abs(mu.real) <= tol or (b - a) < 1e-15:
            return c, mu, x
        if (mu.real > 0) == (re_a > 0):
            a, re_a = c, mu.real
        else:
            b = c
    raise NoConvergenceError("bisection on theta did not reach the tolerance")


def crossing_seed(ep: EigenPair, lam, h_star):
    """Asymptotic seeds: ``nu ~ |lam - lam*| h``, theta pi/2 above lam*, 3pi/2 below."""
    nu = abs(lam - ep.lambda_star) * h_star
    theta = 0.5 * math.pi if lam > ep.lambda_star else 1.5 * math.pi
    return nu, theta


def simplicity_ratio(lin: Linearization, crossing: HopfCrossing):
    """Ratio of the two smallest singular values of ``Delta(i nu, tau_0)`` (dense)."""
    M = (lin.pencil(crossing.theta) - 1j * crossing.nu * sp.identity(lin.grid.n)).toarray()
    s = sla.svdvals(M)
    s.sort()
    return float(s[1] / s[0]) if s[0] > 0 else np.inf


# ---------------------------------------------------------------------------
# transversality


@dataclass(frozen=True)
class Transversality:
    n: int
    tau: float
    dmu_dtau: complex            # closed form
    fd_re: float                 # centered difference of Re mu(tau)
    S_n: complex

    @property
    def re(self):
        return self.dmu_dtau.real


def duality_scalar(lin: Linearization, crossing: HopfCrossing, n):
    """``S_n = <psi~, psi> + tau_n e^{-i theta} <psi~, J1 psi>``."""
    g = lin.grid
    tau = crossing.tau(n)
    J1psi = lin.J1diag * crossing.psi
    return (inner_product(g, crossing.psi_tilde, crossing.psi)
            + tau * np.exp(-1j * crossing.theta) * inner_product(g, crossing.psi_tilde, J1psi))


def characteristic_root(lin: Linearization, tau, mu0, psi0, tol=1e-10, maxiter=50):
    """Newton on ``[Delta(mu, tau) psi; <psi0, psi> - <psi0, psi0>] = 0``.

    Independent root tracker for the transcendental characteristic equation.
    """
    g = lin.grid
    n = g.n
    w = g.weights
    mu = complex(mu0)
    psi = np.asarray(psi0, dtype=complex).copy()
    c = w * np.conj(psi0)
    target = c @ psi0
    J1 = lin.J1diag
    for it in range(maxiter):
        D = lin.characteristic(mu, tau)
        dD_psi = -tau * np.exp(-mu * tau) * J1 * psi - psi
        F = np.concatenate([D @ psi, [c @ psi - target]])
        B = sp.bmat([[D, sp.csr_matrix(dD_psi.reshape(-1, 1))],
                     [sp.csr_matrix(c.reshape(1, -1)), None]], format="csc")
        delta = Factorization(B, cond_limit=None).solve(-F)
        psi = psi + delta[:n]
        mu = mu + delta[n]
        if abs(delta[n]) <= tol * max(1.0, abs(mu)) and np.linalg.norm(delta[:n]) <= 1e-8 * np.linalg.norm(psi):
            return mu, psi
    raise NoConvergenceError(f"characteristic root tracking at tau={tau} did not converge")


def transversality(lin: Linearization, crossing: HopfCrossing, n=0, rel_step=1e-3) -> Transversality:
    """Closed-form ``dmu/dtau`` at ``tau_n``, checked against root tracking.

    ``dmu/dtau = -i nu e^{-i theta} <psi~, J1 psi> / S_n``.  The finite
    difference uses ``tau_n (1 +- rel_step)``; disagreement in sign raises
    :class:`InconsistencyError`.
    """
    g = lin.grid
    tau = crossing.tau(n)
    S = duality_scalar(lin, crossing, n)
    coupling = inner_product(g, crossing.psi_tilde, lin.J1diag * crossing.psi)
    dmu = -1j * crossing.nu * np.exp(-1j * crossing.theta) * coupling / S
    dt = rel_step * tau
    mu0 = 1j * crossing.nu
    mu_p, _ = characteristic_root(lin, tau + dt, mu0, crossing.psi)
    mu_m, _ = characteristic_root(lin, tau - dt, mu0, crossing.psi)
    fd = (mu_p.real - mu_m.real) / (2 * dt)
    if np.sign(fd) != np.sign(dmu.real):
        raise InconsistencyError(f"closed-form dRe mu/dtau = {dmu.real:.3e} but root tracking gives {fd:.3e}")
    return Transversality(n=n, tau=tau, dmu_dtau=complex(dmu), fd_re=float(fd), S_n=complex(S))


def rightmost_real_eigenvalue(M):
    """Perron root of a Metzler matrix (non-negative off-diagonal), e.g. the tau = 0 linearization."""
    M = sp.csr_matrix(M)
    n = M.shape[0]
    d = M.diagonal()
    off = np.asarray(abs(M).sum(axis=1)).ravel() - np.abs(d)
    sigma = float(np.max(d + off)) + 1.0
    fac = Factorization(sigma * sp.identity(n) - M, cond_limit=None)
    x = np.ones(n) / math.sqrt(n)
    rho = 0.0
    for _ in range(5000):
        y = fac.solve(x)
        rho_new = sigma - 1.0 / (x @ y / (x @ x)) if (x @ y) != 0 else sigma
        x = y / np.linalg.norm(y)
        if abs(rho_new - rho) <= 1e-13 * max(1.0, abs(rho_new)):
            r = np.linalg.norm(M @ x - rho_new * x)
            if r <= 1e-8 * max(1.0, abs(sigma)):
                return float(rho_new), x
        rho = rho_new
    raise NoConvergenceError("Perron iteration did not converge")
