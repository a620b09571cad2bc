"""Normal-form coefficients of the Hopf bifurcation at ``tau_n``.

Everything is evaluated in reduced integral form: with ``q`` the adjoint
crossing field and ``<q, X>_h = sum w conj(q) X``, each coefficient is a
quadrature of the Taylor coefficients of ``lam tau u f(x, u(t - 1))`` (time
rescaled by ``tau``) divided by the duality scalar ``S_n``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateDualityError,
    DegenerateTransversalityError,
    NearSingularError,
    ResonanceError,
)
from .grid import inner_product
from .operators import solve_shifted
from .spectral import HopfCrossing, Linearization, Transversality, duality_scalar

COND_LIMIT = 1e12


def s_n(lin: Linearization, crossing: HopfCrossing, n=0) -> complex:
    """``S_n = int psi conj(q) + lam tau_n e^{-i theta} int f_u u psi conj(q)``."""
    S = complex(duality_scalar(lin, crossing, n))
    if abs(S) < 1e-10:
        raise DegenerateDualityError(f"duality scalar S_{n} = {S:.3e} vanishes")
    return S


def _resolve(lin, shift_diag, z, rhs, what):
    try:
        return solve_shifted(lin.J0, shift_diag, z, rhs, cond_limit=COND_LIMIT)
    except NearSingularError as exc:
        raise ResonanceError(f"{what}: characteristic matrix is singular to working precision",
                             exc.condition) from exc


def resolvent_E(lin: Linearization, crossing: HopfCrossing, n=0):
    """Second-harmonic field: ``Delta(2 i nu, tau_n) E = -2 lam [f_u psi^2 e^{-i theta} + u f_uu psi^2 e^{-2 i theta} / 2]``."""
    th, psi = crossing.theta, crossing.psi
    rhs = -2.0 * lin.lam * (lin.fu * psi**2 * np.exp(-1j * th)
                            + 0.5 * lin.u * lin.fuu * psi**2 * np.exp(-2j * th))
    if not np.any(rhs):
        return np.zeros_like(rhs)
    return _resolve(lin, np.exp(-2j * th) * lin.J1diag, 2j * crossing.nu, rhs, "E")


def resolvent_F(lin: Linearization, crossing: HopfCrossing, n=0):
    """Mean-field correction: ``Delta(0, tau_n) F = -lam [2 cos(theta) f_u |psi|^2 + u f_uu |psi|^2]``."""
    a2 = np.abs(crossing.psi) ** 2
    rhs = -lin.lam * (2.0 * math.cos(crossing.theta) * lin.fu * a2 + lin.u * lin.fuu * a2)
    if not np.any(rhs):
        return np.zeros(lin.grid.n, dtype=complex)
    return _resolve(lin, lin.J1diag, 0.0, rhs.astype(complex), "F")


@dataclass(frozen=True, eq=False)
class GCoefficients:
    g20: complex
    g11: complex
    g02: complex
    g21: complex
    S: complex
    w20: dict = field(repr=False, default_factory=dict)    # {0: field, -1: field}
    w11: dict = field(repr=False, default_factory=dict)


def g_coefficients(lin: Linearization, crossing: HopfCrossing, E, F, n=0) -> GCoefficients:
    g = lin.grid
    tau = crossing.tau(n)
    nu, th = crossing.nu, crossing.theta
    psi, q = crossing.psi, crossing.psi_tilde
    psib = np.conj(psi)
    u, fu, fuu, fuuu = lin.u, lin.fu, lin.fuu, lin.fuuu
    S = s_n(lin, crossing, n)
    lt = lin.lam * tau / S
    em, ep = np.exp(-1j * th), np.exp(1j * th)

    def proj(X):
        return inner_product(g, q, X)

    g20 = 2 * lt * proj(fu * psi**2 * em + 0.5 * u * fuu * psi**2 * em**2)
    g11 = lt * proj(fu * (ep + em) * psi * psib + u * fuu * psi * psib)
    g02 = 2 * lt * proj(fu * psib**2 * ep + 0.5 * u * fuu * psib**2 * ep**2)

    k = 1.0 / (nu * tau)
    p = {0: psi, -1: psi * em}
    w20 = {s: 1j * g20 * k * p[s] + 1j * np.conj(g02) * k / 3 * np.conj(p[s])
           + E * np.exp(2j * nu * tau * s) for s in (0, -1)}
    w11 = {s: -1j * g11 * k * p[s] + 1j * np.conj(g11) * k * np.conj(p[s]) + F for s in (0, -1)}

    d1 = psi * em            # delayed first-order field
    d1b = psib * ep
    cubic = (0.5 * u * fuu * w20[-1] * d1b
             + u * fuu * d1 * w11[-1]
             + fu * (psi * w11[-1] + w11[0] * d1 + 0.5 * w20[0] * d1b + 0.5 * psib * w20[-1])
             + 0.5 * fuu * (2 * psi * psi * psib + psib * d1**2)
             + 0.5 * u * fuuu * d1**2 * d1b)
    g21 = 2 * lt * proj(cubic)
    return GCoefficients(complex(g20), complex(g11), complex(g02), complex(g21), S, w20, w11)


@dataclass(frozen=True, eq=False)
class NormalForm:
    lam: float
    n: int
    tau_n: float
    nu: float
    theta: float
    S_n: complex
    g20: complex
    g11: complex
    g02: complex
    g21: complex
    C1: complex
    mu2: float
    beta2: float
    T2: float
    mu2_rescaled: float             # -Re C1 / Re dLambda/dtau with Lambda = tau mu
    T2_rescaled: float
    dmu_dtau: complex
    direction: str                  # "forward" / "backward"
    center_manifold_stable: bool    # beta2 < 0
    orbit_stability: str            # "stable" / "unstable"
    E: np.ndarray = field(repr=False, default=None)
    F: np.ndarray = field(repr=False, default=None)

    def report(self):
        def c(z):
            return [z.real, z.imag]
        return {"lambda": self.lam, "n": self.n, "tau_n": self.tau_n, "nu": self.nu,
                "theta": self.theta, "S_n": c(self.S_n), "g20": c(self.g20), "g11": c(self.g11),
                "g02": c(self.g02), "g21": c(self.g21), "C1": c(self.C1), "mu2": self.mu2,
                "beta2": self.beta2, "T2": self.T2, "mu2_rescaled": self.mu2_rescaled,
                "T2_rescaled": self.T2_rescaled, "dmu_dtau": c(self.dmu_dtau),
                "direction": self.direction, "orbit_stability": self.orbit_stability,
                "center_manifold_stable": self.center_manifold_stable}


def first_lyapunov(gc: GCoefficients, nu, tau) -> complex:
    return (1j / (2 * nu * tau) * (gc.g11 * gc.g20 - 2 * abs(gc.g11) ** 2 - abs(gc.g02) ** 2 / 3)
            + gc.g21 / 2)


def hopf_quantities(gc: GCoefficients, crossing: HopfCrossing, dmu_dtau, n=0,
                    unstable_at_zero_delay=False, E=None, F=None) -> NormalForm:
    """Direction, stability and period quantities from the g-coefficients.

    The orbit is flagged stable only when ``beta2 < 0`` (attracting on the
    center manifold), it bifurcates at the first crossing ``n = 0`` and the
    steady state has no unstable direction at ``tau = 0``; otherwise the
    remaining unstable directions make it unstable in the full phase space.

    ``mu2`` and ``T2`` use ``dmu/dtau`` directly.  The g-coefficients live in
    delay-rescaled time, where the critical eigenvalue is ``Lambda = tau mu``
    and ``dLambda/dtau = i nu + tau_n dmu/dtau``; ``mu2_rescaled`` and
    ``T2_rescaled`` use that derivative and the frequency ``nu tau_n``.  They
    carry the same signs and give the orbit amplitude
    ``2 |psi| sqrt((tau - tau_n) / mu2_rescaled)`` and period
    ``tau (2 pi / (nu tau_n)) (1 + T2_rescaled (tau - tau_n) / mu2_rescaled)``.
    """
    dmu = complex(dmu_dtau.dmu_dtau if isinstance(dmu_dtau, Transversality) else dmu_dtau)
    if dmu.real == 0.0:
        raise DegenerateTransversalityError("Re dmu/dtau vanishes at the crossing")
    tau = crossing.tau(n)
    C1 = first_lyapunov(gc, crossing.nu, tau)
    mu2 = -C1.real / dmu.real
    beta2 = 2 * C1.real
    T2 = -(C1.imag + mu2 * dmu.imag) / tau
    dLam = 1j * crossing.nu + tau * dmu
    mu2_r = -C1.real / dLam.real
    T2_r = -(C1.imag + mu2_r * dLam.imag) / (crossing.nu * tau)
    cm_stable = beta2 < 0
    stable = cm_stable and n == 0 and not unstable_at_zero_delay
    return NormalForm(lam=crossing.lam, n=n, tau_n=tau, nu=crossing.nu, theta=crossing.theta,
                      S_n=gc.S, g20=gc.g20, g11=gc.g11, g02=gc.g02, g21=gc.g21, C1=complex(C1),
                      mu2=float(mu2), beta2=float(beta2), T2=float(T2),
                      mu2_rescaled=float(mu2_r), T2_rescaled=float(T2_r), dmu_dtau=dmu,
                      direction="forward" if mu2 > 0 else "backward",
                      center_manifold_stable=bool(cm_stable),
                      orbit_stability="stable" if stable else "unstable", E=E, F=F)


def normal_form(lin: Linearization, crossing: HopfCrossing, dmu_dtau, n=0,
                unstable_at_zero_delay=False) -> NormalForm:
    """Full pipeline ``E, F -> g_ij -> C1, mu2, beta2, T2`` at ``tau_n``."""
    E = resolvent_E(lin, crossing, n)
    F = resolvent_F(lin, crossing, n)
    gc = g_coefficients(lin, crossing, E, F, n)
    return hopf_quantities(gc, crossing, dmu_dtau, n, unstable_at_zero_delay, E=E, F=F)


def write_report(path, nf: NormalForm):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(nf.report(), fh, indent=2)
