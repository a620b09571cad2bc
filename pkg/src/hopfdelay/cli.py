"""Command-line interface: ``hopfdelay {eig,steady,hopf,simulate,scan} --config run.json``.

Exit codes: 0 success, 2 configuration or parse error, 3 numerical failure.
Failures print a JSON object on stderr.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
import threading
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import dde, pipeline, steady
from .config import Problem, build_problem, eta_callable, load_config, probe_points
from .errors import ConfigError, DimensionError, HopfDelayError
from .grid import write_snapshot_csv
from .spectral import h_ratio

OUT_ENV = "HOPFDELAY_OUT"
EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3

log = logging.getLogger("hopfdelay")


class Output:
    """Output directory with per-file write locks."""

    def __init__(self, directory, prefix):
        self.dir = Path(directory)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.prefix = prefix
        self._locks = {}
        self._guard = threading.Lock()

    def path(self, name):
        return self.dir / f"{self.prefix}{name}"

    def lock(self, name):
        with self._guard:
            return self._locks.setdefault(name, threading.Lock())

    def json(self, name, obj):
        with self.lock(name):
            with open(self.path(name), "w", encoding="utf-8") as fh:
                json.dump(obj, fh, indent=2, default=_jsonable)
        return self.path(name)


def _jsonable(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, complex):
        return [o.real, o.imag]
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"cannot serialize {type(o).__name__}")


def _finite_or_none(v):
    return None if v is None or (isinstance(v, float) and not math.isfinite(v)) else v


# ---------------------------------------------------------------------------
# subcommands


def cmd_eig(pb: Problem, out: Output, args):
    oracle = pipeline.OracleLog() if args.dense_oracle else None
    ep = pipeline.eigen(pb, dense=args.dense_oracle, oracle=oracle)
    report = {"lambda_star": ep.lambda_star, "lambda_adjoint": ep.lambda_adjoint,
              "residual": ep.residual, "adjoint_residual": ep.adjoint_residual,
              "h_star": h_ratio(ep, pb.m), "n": pb.grid.n, "iterations": ep.iterations}
    if oracle is not None:
        report["dense_oracle"] = {"entries": oracle.entries, "worst_rel_diff": oracle.worst}
    out.json("eig.json", report)
    write_snapshot_csv(out.path("phi.csv"), pb.grid, ep.phi)
    write_snapshot_csv(out.path("phi_star.csv"), pb.grid, ep.phi_star)
    if oracle is not None:
        oracle.check()
    return report


def cmd_steady(pb: Problem, out: Output, args):
    lams = pb.lambdas
    if not lams:
        raise ConfigError("steady needs analysis.lambda or analysis.lambda_list")
    ep = pipeline.eigen(pb, dense=args.dense_oracle)
    s = steady.bifurcation_scalars(ep, pb.model, pb.grid)
    report = {"scalars": s.to_dict(), "points": []}
    lam2 = None
    if s.regime == steady.DEGENERATE:
        printed, derived = steady.lambda_second_derivative(ep, s, pb.model, pb.op)
        report["lambda_second_derivative"] = {"printed_ordering": printed, "derived_ordering": derived}
        lam2 = derived
    sign = float(pb.analysis.get("branch_sign", 1))
    # Newton starts from the asymptotic predictor; the previous branch point
    # (ordered outward from lambda*) is the fallback start.
    below = sorted((l for l in lams if l < ep.lambda_star), reverse=True)
    above = sorted(l for l in lams if l >= ep.lambda_star)
    points, failures = [], []
    for side in (above, below):
        u_prev = None
        for lam in side:
            try:
                t = steady.predictor_amplitude(lam, s, lam2, sign)
                starts = [t * ep.phi] + ([u_prev] if u_prev is not None else [])
                for i, start in enumerate(starts):
                    try:
                        pt = steady.newton_steady(lam, start, pb.model, pb.op, t_pred=t, phi=ep.phi)
                        break
                    except HopfDelayError:
                        if i == len(starts) - 1:
                            raise
                points.append(pt)
                u_prev = pt.u
            except HopfDelayError as exc:
                failures.append(dict(exc.to_dict(), **{"lambda": lam}))
    points.sort(key=lambda p: lams.index(p.lam))
    report["points"] = [p.row(pb.grid) for p in points]
    report["failures"] = failures
    out.json("steady.json", report)
    steady.write_branch_csv(out.path("branch.csv"), pb.grid, points)
    if failures:
        raise _Partial(report, failures)
    return report


class _Partial(Exception):
    def __init__(self, report, failures):
        super().__init__(f"{len(failures)} lambda value(s) failed")
        self.report = report
        self.failures = failures


def cmd_hopf(pb: Problem, out: Output, args):
    lams = pb.lambdas
    if not lams:
        raise ConfigError("hopf needs analysis.lambda or analysis.lambda_list")
    n = int(pb.analysis.get("n", 0))
    n_max = int(pb.analysis.get("n_max", 3))
    oracle = pipeline.OracleLog() if args.dense_oracle else None
    ep = pipeline.eigen(pb, dense=args.dense_oracle, oracle=oracle)

    def one(lam):
        res = pipeline.hopf(pb, lam, n=n, n_max=n_max, ep=ep, oracle=oracle)
        rep = res.report()
        out.json(f"hopf_{lam:g}.json", rep)
        out.json(f"crossing_{lam:g}.json", res.crossing.report())
        out.json(f"normal_form_{lam:g}.json", res.normal_form.report())
        return rep

    with ThreadPoolExecutor(max_workers=args.threads) as pool:
        reports = list(pool.map(one, lams))
    summary = {"lambda_star": ep.lambda_star, "results": reports}
    if oracle is not None:
        summary["dense_oracle"] = {"entries": oracle.entries, "worst_rel_diff": oracle.worst}
    out.json("hopf.json", summary)
    if oracle is not None:
        oracle.check()
    return summary


def _sim_config(pb: Problem, args):
    sim = pb.simulation
    if not pb.lambdas:
        raise ConfigError("simulation needs analysis.lambda")
    lam = pb.lambdas[0]
    baseline = 0.0
    probes = probe_points(sim.get("probes"), pb.grid.dim) or None
    if sim.get("baseline", "none") == "steady":
        ep = pipeline.eigen(pb)
        _, pt = pipeline.steady_state(pb, ep, lam)
        node = pb.grid.nearest_node(probes[0]) if probes else pb.grid.nearest_node(pb.grid.coords.mean(axis=0))
        baseline = float(pt.u[node])
    return dde.SimConfig(
        grid=pb.grid, op=pb.op, model=pb.model, lam=lam,
        t_end=float(sim.get("t_end", 400.0)), dt=sim.get("dt"),
        steps_per_delay=int(sim.get("steps_per_delay", 200)),
        history_init=eta_callable(sim.get("eta", 0.001)), probes=probes,
        transient_fraction=float(sim.get("transient_fraction", 0.5)),
        amp_tol=float(sim.get("amp_tol", 1e-4)), baseline=baseline,
        sample_every=int(sim.get("sample_every", 1)), scheme=sim.get("scheme", "euler"))


def cmd_simulate(pb: Problem, out: Output, args):
    cfg = _sim_config(pb, args)
    if "tau" not in pb.simulation:
        raise ConfigError("simulate needs simulation.tau")
    tau = float(pb.simulation["tau"])
    ts, snaps = dde.simulate(cfg.grid, cfg.op, cfg.model, cfg.lam, tau, cfg.step_for(tau), cfg.t_end,
                             cfg.history_init, cfg.probes, pb.simulation.get("snapshot_times", ()),
                             sample_every=cfg.sample_every, scheme=cfg.scheme)
    v = dde.diagnose_oscillation(ts, cfg.transient_fraction, cfg.amp_tol, baseline=cfg.baseline)
    dde.write_timeseries_csv(out.path("timeseries.csv"), ts)
    for t, u in snaps.items():
        write_snapshot_csv(out.path(f"snapshot_t{t:g}.csv"), pb.grid, u)
    report = {"tau": tau, "dt": ts.dt, "K": ts.K, "scheme": cfg.scheme, "verdict": v.verdict,
              "amplitude": v.amplitude, "period": _finite_or_none(v.period), "mean": v.mean,
              "envelope_ratio": _finite_or_none(v.envelope_ratio), "transient_used": v.transient_used,
              "probes": [list(p) for p in ts.probes]}
    out.json("simulate.json", report)
    return report


def cmd_scan(pb: Problem, out: Output, args):
    cfg = _sim_config(pb, args)
    taus = pb.simulation.get("tau_values")
    if not taus:
        raise ConfigError("scan needs simulation.tau_values")
    result = dde.threshold_scan(cfg, taus, threads=args.threads)
    dde.write_scan_csv(out.path("scan.csv"), result)
    report = {"rows": [{"tau": r.tau, "verdict": r.verdict, "amplitude": r.amplitude,
                        "period": _finite_or_none(r.period)} for r in result.rows],
              "bracket": list(result.bracket) if result.bracket else None,
              "threshold_found": result.found}
    out.json("scan.json", report)
    return report


COMMANDS = {"eig": cmd_eig, "steady": cmd_steady, "hopf": cmd_hopf,
            "simulate": cmd_simulate, "scan": cmd_scan}


def build_parser():
    p = argparse.ArgumentParser(prog="hopfdelay", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, help="JSON run configuration")
        sp.add_argument("--out", default=None,
                        help=f"output directory (default: config output.directory, ${OUT_ENV}, or ./hopfdelay-out)")
        sp.add_argument("--threads", type=int, default=1, help="worker threads for lambda sweeps and tau scans")
        sp.add_argument("--dense-oracle", action="store_true",
                        help="use dense eigensolvers and cross-check every reported eigenvalue")
        sp.add_argument("-v", "--verbose", action="store_true")
    return p


def _fail(exc, code):
    payload = exc.to_dict() if isinstance(exc, HopfDelayError) else {"error": type(exc).__name__, "message": str(exc)}
    payload["exit_code"] = code
    print(json.dumps(payload), file=sys.stderr)
    return code


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.threads < 1:
        return _fail(ConfigError("--threads must be >= 1"), EXIT_CONFIG)
    try:
        pb = build_problem(load_config(args.config))
        directory = args.out or pb.output.get("directory") or os.environ.get(OUT_ENV) or "hopfdelay-out"
        out = Output(directory, pb.output.get("prefix", ""))
        report = COMMANDS[args.command](pb, out, args)
    except (ConfigError, DimensionError) as exc:
        return _fail(exc, EXIT_CONFIG)
    except HopfDelayError as exc:
        return _fail(exc, EXIT_NUMERICAL)
    except _Partial as exc:
        print(json.dumps({"error": "partial-failure", "message": str(exc), "failures": exc.failures}),
              file=sys.stderr)
        return EXIT_NUMERICAL
    print(json.dumps({"command": args.command, "output": str(out.dir)}))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
