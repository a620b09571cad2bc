"""Method-of-lines integration of the delayed equation and oscillation diagnosis.

Time stepping is backward-Euler IMEX::

    (I - dt A) u^{k+1} = u^k + dt * lam * u^k * f(x, u^{k-K}),   K = tau / dt

with ``dt`` snapped so that ``K`` is an integer; the delayed field is read from
a ring buffer without interpolation.  The fixed points of the scheme are
exactly the steady states ``A u + lam u f(x, u) = 0``.
"""
from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.signal import find_peaks

from .errors import ConfigError, DivergenceError
from .grid import Grid
from .operators import DiscreteOperator, Factorization

log = logging.getLogger(__name__)

DIVERGENCE_LIMIT = 1e6


def snap_dt(tau, dt):
    """Largest step ``<= dt`` that divides ``tau`` exactly; returns ``(dt, K)``."""
    if not dt > 0:
        raise ConfigError(f"time step must be positive, got {dt}")
    if tau < 0:
        raise ConfigError(f"delay must be non-negative, got {tau}")
    if tau == 0:
        return float(dt), 0
    K = max(1, math.ceil(tau / dt - 1e-9))
    return tau / K, K


class History:
    """Ring buffer holding ``u`` over ``[t - tau, t]`` at spacing ``dt``.

    ``extra`` keeps that many older fields as well (the two-step scheme
    needs ``u`` at lag ``K + 1``).
    """

    def __init__(self, K, initial, extra=0):
        initial = np.asarray(initial, dtype=float)
        self.K = int(K)
        self.size = self.K + 1 + int(extra)
        self.buf = np.tile(initial, (self.size, 1))
        self.step = 0          # index k of the newest field

    def lag(self, j):
        """Field written ``j`` steps before the newest one (``j < size``)."""
        return self.buf[(self.step - j) % self.size]

    def current(self):
        return self.lag(0)

    def delayed(self):
        return self.lag(self.K)

    def push(self, u):
        self.step += 1
        self.buf[self.step % self.size] = u


@dataclass(frozen=True, eq=False)
class TimeSeries:
    t: np.ndarray                   # (T,)
    values: np.ndarray              # (T, k)
    probes: list
    probe_nodes: list
    dt: float
    K: int
    sup: np.ndarray = field(default=None, repr=False)   # sup-norm per sample

    def probe(self, i=0):
        return self.values[:, i]


@dataclass(frozen=True)
class OscillationVerdict:
    verdict: str             # decayed | steady_nonzero | periodic | undetermined
    amplitude: float
    period: float
    transient_used: float
    mean: float = math.nan
    envelope_ratio: float = math.nan


def _initial_field(g: Grid, history_init):
    if callable(history_init):
        v = history_init(g.x) if g.dim == 1 else history_init(g.x, g.y)
    else:
        v = history_init
    return np.broadcast_to(np.asarray(v, dtype=float), (g.n,)).copy()


SCHEMES = ("euler", "sbdf2")


def simulate(grid: Grid, op: DiscreteOperator, model, lam, tau, dt, t_end, history_init,
             probes=None, snapshot_times=(), sample_every=1, scheme="euler"):
    """Integrate from constant-in-time history ``history_init`` up to ``t_end``.

    ``scheme="euler"`` is the first-order IMEX step above; ``"sbdf2"`` is the
    second-order semi-implicit BDF variant
    ``(3 - 2 dt A) u^{k+1} = 4 u^k - u^{k-1} + 2 dt (2 N^k - N^{k-1})`` with
    ``N^k = lam u^k f(x, u^{k-K})``, started by one Euler step.  ``probes`` are
    points in the domain (default: the node nearest the centroid).  Returns
    ``(TimeSeries, {t: field})``.
    """
    if scheme not in SCHEMES:
        raise ConfigError(f"unknown scheme {scheme!r}; expected one of {', '.join(SCHEMES)}")
    dt_req = dt
    dt, K = snap_dt(tau, dt)
    if dt != dt_req:
        log.info("dt snapped from %g to %g so that tau = %d dt", dt_req, dt, K)
    if not t_end > 0:
        raise ConfigError(f"t_end must be positive, got {t_end}")
    if probes is None or len(probes) == 0:
        probes = [tuple(grid.coords.mean(axis=0))]
    nodes = [grid.nearest_node(p) for p in probes]
    u0 = _initial_field(grid, history_init)
    two_step = scheme == "sbdf2"
    hist = History(K, u0, extra=1 if two_step else 0)
    n = grid.n
    I = sp.identity(n, format="csc")
    fac = Factorization(I - dt * op.A, cond_limit=None)
    fac2 = Factorization(3.0 * I - 2.0 * dt * op.A, cond_limit=None) if two_step else None
    N_prev = None
    nsteps = int(math.ceil(t_end / dt - 1e-9))
    snaps_pending = sorted(float(s) for s in snapshot_times)
    snaps = {}
    ts, vals, sups = [0.0], [u0[nodes].copy()], [float(np.max(np.abs(u0)))]
    u = u0
    for k in range(1, nsteps + 1):
        N = lam * u * model.on_grid(grid, hist.delayed())[0]
        if two_step and N_prev is not None:
            u = fac2.solve(4.0 * u - hist.lag(1) + 2.0 * dt * (2.0 * N - N_prev))
        else:
            u = fac.solve(u + dt * N)
        N_prev = N
        hist.push(u)
        t = k * dt
        umax = float(np.max(np.abs(u)))
        if not np.isfinite(umax) or umax > DIVERGENCE_LIMIT:
            raise DivergenceError(f"solution blew up at t = {t:.4g} (sup norm {umax:.3e})")
        while snaps_pending and t >= snaps_pending[0] - 1e-12:
            snaps[snaps_pending.pop(0)] = u.copy()
        if k % sample_every == 0 or k == nsteps:
            ts.append(t)
            vals.append(u[nodes].copy())
            sups.append(umax)
    series = TimeSeries(t=np.array(ts), values=np.array(vals), probes=[tuple(np.atleast_1d(p)) for p in probes],
                        probe_nodes=nodes, dt=dt, K=K, sup=np.array(sups))
    return series, snaps


def diagnose_oscillation(ts, transient_fraction=0.5, amp_tol=1e-4, probe=0, baseline=0.0,
                         envelope_decay=0.5) -> OscillationVerdict:
    """Classify the tail of a probe signal.

    ``ts`` is a :class:`TimeSeries` or a ``(t, y)`` pair; ``baseline`` is
    subtracted first (e.g. the steady-state value at the probe).  Oscillations
    whose per-cycle amplitude shrinks by more than ``envelope_decay`` across
    the tail count as converging rather than periodic.
    """
    if isinstance(ts, TimeSeries):
        t, y = ts.t, ts.probe(probe)
    else:
        t, y = (np.asarray(a, dtype=float) for a in ts)
    y = y - baseline
    t0 = t[0] + transient_fraction * (t[-1] - t[0])
    sel = t >= t0
    tt, yy = t[sel], y[sel]
    used = float(t0 - t[0])
    if len(tt) < 2:
        return OscillationVerdict("undetermined", math.nan, math.nan, used)
    amp = float(0.5 * (yy.max() - yy.min()))
    mean = float(yy.mean())

    def settled():
        v = "steady_nonzero" if abs(yy[-1]) > 10 * amp_tol else "decayed"
        return v

    if amp < amp_tol:
        v = "steady_nonzero" if abs(mean) > 10 * amp_tol else "decayed"
        return OscillationVerdict(v, amp, math.nan, used, mean)
    peaks, _ = find_peaks(yy, prominence=amp_tol)
    if len(peaks) < 2:
        # monotone relaxation inside the tail
        if _monotone_tail(yy, amp_tol):
            return OscillationVerdict(settled(), amp, math.nan, used, mean)
        return OscillationVerdict("undetermined", amp, math.nan, used, mean)
    pt = tt[peaks]
    intervals = np.diff(pt)
    period = float(intervals.mean())
    cycle_amp = np.array([0.5 * (yy[a:b + 1].max() - yy[a:b + 1].min()) for a, b in zip(peaks[:-1], peaks[1:])])
    ratio = math.nan
    if len(cycle_amp) >= 2 and np.all(cycle_amp > 0):
        slope = np.polyfit(pt[:-1], np.log(cycle_amp), 1)[0]
        ratio = float(math.exp(slope * (tt[-1] - tt[0])))
        if ratio < envelope_decay:
            return OscillationVerdict(settled(), amp, math.nan, used, mean, ratio)
    spread = (intervals.max() - intervals.min()) / period
    if len(intervals) >= 4 and spread < 0.1:
        return OscillationVerdict("periodic", amp, period, used, mean, ratio)
    return OscillationVerdict("undetermined", amp, math.nan, used, mean, ratio)


def _monotone_tail(y, amp_tol):
    d = np.diff(y)
    return bool(np.all(d >= -amp_tol * 1e-3) or np.all(d <= amp_tol * 1e-3))


# ---------------------------------------------------------------------------
# delay scans


@dataclass(frozen=True, eq=False)
class SimConfig:
    grid: Grid
    op: DiscreteOperator
    model: object
    lam: float
    t_end: float = 400.0
    dt: Optional[float] = None          # default tau / 200
    steps_per_delay: int = 200
    history_init: object = 0.001
    probes: Optional[Sequence] = None
    transient_fraction: float = 0.5
    amp_tol: float = 1e-4
    baseline: float = 0.0
    sample_every: int = 1
    scheme: str = "euler"

    def step_for(self, tau):
        if self.dt is not None:
            return self.dt
        return tau / self.steps_per_delay if tau > 0 else 0.01


@dataclass(frozen=True)
class ScanRow:
    tau: float
    verdict: str
    amplitude: float
    period: float


@dataclass(frozen=True)
class ScanResult:
    rows: list
    bracket: Optional[tuple]       # (tau_lo, tau_hi) or None

    @property
    def found(self):
        return self.bracket is not None


def run_case(cfg: SimConfig, tau):
    ts, _ = simulate(cfg.grid, cfg.op, cfg.model, cfg.lam, tau, cfg.step_for(tau), cfg.t_end,
                     cfg.history_init, cfg.probes, sample_every=cfg.sample_every, scheme=cfg.scheme)
    v = diagnose_oscillation(ts, cfg.transient_fraction, cfg.amp_tol, baseline=cfg.baseline)
    return ScanRow(float(tau), v.verdict, v.amplitude, v.period), ts


def threshold_scan(cfg: SimConfig, tau_values, threads=1) -> ScanResult:
    """Simulate each delay and report where the verdict flips to periodic."""
    taus = sorted(float(t) for t in tau_values)
    if len(taus) < 2:
        raise ConfigError("a threshold scan needs at least two delay values")
    with ThreadPoolExecutor(max_workers=max(1, int(threads))) as pool:
        rows = [r for r, _ in pool.map(lambda tau: run_case(cfg, tau), taus)]
    return ScanResult(rows=rows, bracket=find_flip(rows))


def find_flip(rows):
    for lo, hi in zip(rows[:-1], rows[1:]):
        if lo.verdict in ("decayed", "steady_nonzero") and hi.verdict == "periodic":
            return (lo.tau, hi.tau)
    return None


def write_timeseries_csv(path, ts: TimeSeries):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["t"] + [f"probe_{i + 1}" for i in range(len(ts.probes))])
        for t, row in zip(ts.t, ts.values):
            w.writerow([repr(float(t))] + [repr(float(v)) for v in row])


def write_scan_csv(path, result: ScanResult):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["tau", "verdict", "amplitude", "period"])
        for r in result.rows:
            w.writerow([repr(r.tau), r.verdict, repr(r.amplitude), repr(r.period)])
