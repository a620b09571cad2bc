"""Acceptance criteria 1-12.  Each test records one PASS/FAIL line (see conftest)."""
import cmath
import dataclasses
import json
import math
import time

import numpy as np
import pytest

from conftest import PI, disk_doc, interval_doc, problem_1d
from hopfdelay import cli, dde, normalform, pipeline, spectral, steady
from hopfdelay.config import build_problem, eta_callable
from hopfdelay.grid import build_interval_grid, build_masked_grid_2d, disk_grid, inner_product, integrate, norm
from hopfdelay.operators import CoefficientFields, assemble


def _eig(n, b=0.0):
    pb = problem_1d("hutchinson", n, b=b)
    return spectral.principal_eigenpair(pb.op, pb.m).lambda_star


def test_c01_eigenvalue_accuracy_and_convergence(record):
    t0 = time.perf_counter()
    errs = [abs(_eig(n) - 1.0) for n in (99, 199, 399)]
    elapsed = time.perf_counter() - t0
    ratios = [errs[0] / errs[1], errs[1] / errs[2]]
    ok = errs[2] < 1e-4 and min(ratios) >= 3.5 and elapsed < 1.0
    record(1, ok, f"err(399)={errs[2]:.2e} (<1e-4), halving ratios {ratios[0]:.3f}, {ratios[1]:.3f} (>=3.5), "
                  f"{elapsed:.2f}s")
    assert ok


def test_c02_advection_shift(record):
    # u = e^{b x / 2} v turns the problem into v'' + (lam - b^2/4) v = 0, so lam* = 1 + b^2 / 4
    t0 = time.perf_counter()
    lam = _eig(399, b=0.5)
    elapsed = time.perf_counter() - t0
    ok = abs(lam - 1.0625) < 1e-3 and elapsed < 1.0
    record(2, ok, f"lambda*={lam:.6f} vs 1.0625 (tol 1e-3), {elapsed:.2f}s")
    assert ok


def _adjoint_grids():
    d2 = "1 + 0.1*x + 0.1*y"
    b2 = ("cos(x)/(sin(x)+2)", "cos(y)/(sin(y)+2)")
    yield "interval", build_interval_grid(0, PI, 199), CoefficientFields(d="1 + 0.5*sin(3*x)", b=("2*cos(x)",))
    yield "rect", build_masked_grid_2d((0, 2, 0, 1), 40, 24, lambda X, Y: np.ones(X.shape, bool)), \
        CoefficientFields(d=d2, b=("x - y", "0.5"))
    yield "disk", disk_grid((PI, PI), PI, 64), CoefficientFields(d=d2, b=b2)
    yield "implicit", build_masked_grid_2d((0, 4, 0, 4), 48, 48,
                                           lambda X, Y: 1 - ((X - 2) / 1.8) ** 2 - ((Y - 2) / 1.2) ** 4 >= 0), \
        CoefficientFields(d="2 + sin(x*y)", b=("y", "-x"))


def test_c03_adjoint_identity(record):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    worst = 0.0
    names = []
    for name, g, cf in _adjoint_grids():
        op = assemble(g, cf)
        names.append(name)
        for _ in range(100):
            u, v = rng.standard_normal((2, g.n))
            rel = abs(inner_product(g, v, op.A @ u) - inner_product(g, op.A_adj @ v, u)) / (norm(g, u) * norm(g, v))
            worst = max(worst, rel)
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-12 and elapsed < 1.0
    record(3, ok, f"worst |<v,Au>-<A*v,u>|/(|u||v|) = {worst:.1e} over 100 pairs x {'/'.join(names)}, "
                  f"{elapsed:.2f}s")
    assert ok


def test_c04_branch_asymptotics(record):
    t0 = time.perf_counter()
    pb = problem_1d("hutchinson", 399)
    ep = spectral.principal_eigenpair(pb.op, pb.m)
    s = steady.bifurcation_scalars(ep, pb.model)
    pts = steady.continue_branch([1.1, 1.02], s, ep, pb.model, pb.op)
    elapsed = time.perf_counter() - t0
    dev = {p.lam: abs(p.max_u / (p.t_pred * ep.phi.max()) - 1) for p in pts}
    res = max(p.newton_residual for p in pts)
    ok = dev[1.1] < 0.15 and dev[1.02] < 0.06 and res <= 1e-10 and elapsed < 5
    record(4, ok, f"|max u/(t max phi) - 1| = {dev[1.1]:.3f} at 1.1 (<0.15), {dev[1.02]:.3f} at 1.02 (<0.06), "
                  f"Newton residual {res:.1e}, {elapsed:.2f}s")
    assert ok


@pytest.fixture(scope="module")
def analyses():
    """Hopf analyses on the 1D interval (n=199): {(kind, lam): HopfAnalysis}, with timings."""
    out, times = {}, {}
    for kind, params, lams in (("hutchinson", {}, (1.1, 1.05, 1.02)),
                               ("food_limited", {"c": 0.5}, (1.1,)),
                               ("weak_allee", {}, (0.95,))):
        pb = problem_1d(kind, 199, params=params)
        for lam in lams:
            t0 = time.perf_counter()
            out[(kind, lam)] = pipeline.hopf(pb, lam)
            times[(kind, lam)] = time.perf_counter() - t0
    return out, times


def test_c05_hopf_asymptotics(record, analyses):
    an, times = analyses
    h = an[("hutchinson", 1.1)].crossing
    w = an[("weak_allee", 0.95)].crossing
    dth = abs(h.theta - PI / 2)
    dnu = abs(h.nu / 0.1 - 1)
    dtau = abs(h.tau(0) / 15.708 - 1)
    dthw = abs(w.theta - 1.5 * PI)
    elapsed = times[("hutchinson", 1.1)] + times[("weak_allee", 0.95)]
    ok = dth < 0.15 and dnu < 0.10 and dtau < 0.10 and dthw < 0.2 and elapsed < 30
    record(5, ok, f"Hutchinson 1.1: |theta-pi/2|={dth:.1e}, nu off {dnu:.1%}, tau0={h.tau(0):.3f} off {dtau:.1%}; "
                  f"weak Allee 0.95: |theta-3pi/2|={dthw:.1e}; {elapsed:.1f}s")
    assert ok


def test_c06_transversality(record, analyses):
    an, times = analyses
    parts, ok = [], True
    for key in (("hutchinson", 1.1), ("food_limited", 1.1), ("weak_allee", 0.95)):
        tr = an[key].transversality
        good = tr.re > 0 and np.sign(tr.fd_re) == np.sign(tr.re)
        ok &= good
        parts.append(f"{key[0]} {key[1]}: closed {tr.re:.4e}, root-tracking {tr.fd_re:.4e}")
    ok &= max(times.values()) < 30
    record(6, ok, "; ".join(parts))
    assert ok


def test_c07_normal_form_limits(record, analyses):
    an, _ = analyses
    lams = (1.1, 1.05, 1.02)
    rows = [an[("hutchinson", l)] for l in lams]
    beta = rows[0].scalars.beta_star
    target = 2j * PI / (beta * (2 + 1j * PI))
    err20, g11, g2002 = [], [], []
    for h in rows:
        dl = h.lam - h.eigenpair.lambda_star
        nf = h.normal_form
        err20.append(abs(dl * nf.g20 - target) / abs(target))
        g11.append(abs(dl * nf.g11))
        g2002.append(abs(dl * (nf.g20 + nf.g02)))
    ep = rows[-1].eigenpair
    s_lim = (1 + 0.5j * PI) * integrate(ep.grid, ep.phi * ep.phi_star)
    s_err = abs(rows[-1].normal_form.S_n - s_lim) / abs(s_lim)

    def decreasing(v):
        return all(a > b for a, b in zip(v, v[1:]))

    ok = decreasing(err20) and decreasing(g11) and decreasing(g2002) and s_err < 0.05 and g11[-1] < 1e-2 \
        and g2002[-1] < 1e-2
    record(7, ok, "(l-l*)g20 rel err " + ", ".join(f"{e:.3f}" for e in err20)
                  + "; |(l-l*)g11| " + ", ".join(f"{e:.1e}" for e in g11)
                  + "; |(l-l*)(g20+g02)| " + ", ".join(f"{e:.1e}" for e in g2002)
                  + f"; S_0 off {s_err:.2%} at 1.02")
    assert ok


def test_c08_sign_predictions(record, analyses):
    an, _ = analyses
    parts, ok = [], True
    for key in (("hutchinson", 1.1), ("food_limited", 1.1)):
        nf = an[key].normal_form
        good = nf.C1.real < 0 and nf.mu2 > 0 and nf.beta2 < 0 and nf.direction == "forward" \
            and nf.orbit_stability == "stable"
        ok &= good
        parts.append(f"{key[0]}: ReC1={nf.C1.real:.3g} mu2={nf.mu2:.3g} beta2={nf.beta2:.3g} {nf.orbit_stability}")
    nf = an[("weak_allee", 0.95)].normal_form
    good = nf.direction == "forward" and nf.orbit_stability == "unstable"
    ok &= good
    parts.append(f"weak Allee: {nf.direction}, {nf.orbit_stability}")
    h = an[("hutchinson", 1.1)]
    worst = 0.0
    for alpha in np.linspace(0.1, 6.0, 7):
        c = h.crossing
        rot = dataclasses.replace(c, psi=c.psi * cmath.exp(1j * alpha))
        nf2 = normalform.normal_form(h.linearization, rot, h.transversality)
        worst = max(worst, abs(nf2.C1 - h.normal_form.C1) / abs(h.normal_form.C1))
    ok &= worst < 1e-8
    parts.append(f"gauge drift of C1 {worst:.1e}")
    record(8, ok, "; ".join(parts))
    assert ok


def test_c09_simulation_matches_theory_1d(record):
    t0 = time.perf_counter()
    pb = problem_1d("hutchinson", 99)
    h = pipeline.hopf(pb, 1.1)
    tau0 = h.crossing.tau(0)
    probe = (PI / 2,)
    base = float(h.steady.u[pb.grid.nearest_node(probe)])
    cfg = dde.SimConfig(grid=pb.grid, op=pb.op, model=pb.model, lam=1.1, t_end=2000.0, probes=[probe],
                        baseline=base, history_init=0.001)
    scan = dde.threshold_scan(cfg, [f * tau0 for f in (0.8, 0.9, 1.1, 1.2)])
    elapsed = time.perf_counter() - t0
    v = {round(r.tau / tau0, 1): r.verdict for r in scan.rows}
    br = scan.bracket
    ok = v[0.8] == "decayed" and v[1.2] == "periodic" and br is not None and br[0] < tau0 < br[1] and elapsed < 120
    record(9, ok, f"tau0={tau0:.3f}: " + ", ".join(f"{k}tau0 {x}" for k, x in v.items())
                  + f"; flip bracket {br}; {elapsed:.0f}s")
    assert ok


def _disk_cfg(kind, lam, params, eta):
    pb = build_problem(disk_doc(kind, 64, params=params))
    return dde.SimConfig(grid=pb.grid, op=pb.op, model=pb.model, lam=lam, t_end=1500.0,
                         history_init=eta_callable(eta), probes=[(PI, PI)], sample_every=4, scheme="sbdf2")


def test_c10_disk_food_limited(record):
    t0 = time.perf_counter()
    cfg = _disk_cfg("food_limited", 1.0, {"c": 0.5}, 0.001)
    rows = {r.tau: r for r in dde.threshold_scan(cfg, [8.0, 12.0, 20.0]).rows}
    elapsed = time.perf_counter() - t0
    r8, r12, r20 = rows[8.0], rows[12.0], rows[20.0]
    ok = (r8.verdict == "steady_nonzero" and r12.verdict == "periodic" and r20.verdict == "periodic"
          and r20.amplitude > r12.amplitude and r20.period > r12.period and elapsed < 600)
    record(10, ok, f"tau=8 {r8.verdict}; tau=12 {r12.verdict} (amp {r12.amplitude:.3g}, period {r12.period:.3g}); "
                   f"tau=20 {r20.verdict} (amp {r20.amplitude:.3g}, period {r20.period:.3g}); {elapsed:.0f}s")
    assert ok


def test_c11_disk_weak_allee(record):
    t0 = time.perf_counter()
    cfg = _disk_cfg("weak_allee", 0.8, {}, 0.5)
    scan = dde.threshold_scan(cfg, [1.5, 5.5, 9.5, 15.5])
    elapsed = time.perf_counter() - t0
    br = scan.bracket
    ok = br == (5.5, 9.5) and elapsed < 600
    record(11, ok, ", ".join(f"tau={r.tau} {r.verdict}" for r in scan.rows)
                   + f"; flip bracket {br} (required (5.5, 9.5)); {elapsed:.0f}s")
    assert ok


def test_c12_dense_oracle(record, tmp_path):
    t0 = time.perf_counter()
    worst, counts = 0.0, 0
    cases = [(interval_doc("hutchinson", 199, analysis={"lambda_list": [1.1, 1.05]}), "1d"),
             (disk_doc("food_limited", 32, params={"c": 0.5}, analysis={"lambda": 1.0}), "disk")]
    for doc, tag in cases:
        cfg = tmp_path / f"{tag}.json"
        cfg.write_text(json.dumps(doc))
        out = tmp_path / tag
        for cmd, report in (("eig", "eig.json"), ("hopf", "hopf.json")):
            assert cli.main([cmd, "--config", str(cfg), "--out", str(out), "--dense-oracle"]) == 0
            d = json.loads((out / report).read_text())["dense_oracle"]
            worst = max(worst, d["worst_rel_diff"])
            counts += len(d["entries"])
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-8 and elapsed < 120
    record(12, ok, f"{counts} eigenvalues checked on N=199 and the 32x32 disk; worst rel diff {worst:.1e}; "
                   f"{elapsed:.0f}s")
    assert ok
