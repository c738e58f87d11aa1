"""Command-line front end: solve, rates, verify, problem.

Exit codes: 0 ok, 1 check failure, 2 usage error, 3 runtime condition
(discrepancy level not reached).
"""
import argparse
import csv
import datetime
import math
import os
import sys
from dataclasses import dataclass, fields

import numpy as np
import toml

from . import diagnostics as dg
from . import suites
from .flow_filters import FilterKind, FlowFilter
from .problems import add_noise, diagonal_problem, integral_problem, save_problem

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2, 3
VERSION = "0.1.0"


class UsageError(ValueError):
    pass


def parse_grid(text):
    """'log:<lo>:<hi>:<count>' -> strictly increasing positive array."""
    parts = str(text).split(":")
    if len(parts) != 4 or parts[0] != "log":
        raise UsageError(f"grid {text!r} must look like log:<lo>:<hi>:<count>")
    try:
        lo, hi, n = float(parts[1]), float(parts[2]), int(parts[3])
    except ValueError:
        raise UsageError(f"grid {text!r} has non-numeric fields") from None
    if not (0.0 < lo < hi and math.isfinite(hi)) or n < 2:
        raise UsageError(f"grid {text!r} needs 0 < lo < hi and count >= 2")
    return dg.log_grid(lo, hi, n)


@dataclass
class RunConfig:
    method: str = "showalter"
    b: float | None = None
    problem: str = "diag"
    n: int = 500
    p: float = 1.0
    mu: float = 1.0
    seed: int = 0
    delta: float = 1e-3
    t_grid: str = "log:1e-2:1e8:600"
    alpha_grid: str | None = None
    delta_grid: str = "log:1e-6:1e-2:9"
    tau_factor: float = dg.DEFAULT_TAU_FACTOR
    output_dir: str = "regflow_out"
    slope_tol: float = suites.SLOPE_TOL
    residual_tol: float = suites.RESIDUAL_TOL
    noisy_tol: float = suites.NOISY_TOL

    def validate(self):
        try:
            kind = FilterKind(self.method)
        except ValueError:
            raise UsageError(f"unknown method {self.method!r}") from None
        if kind is FilterKind.SHOWALTER and self.b is not None:
            raise UsageError("--b is only valid for heavy-ball and viscosity")
        if kind is not FilterKind.SHOWALTER and self.b is None:
            raise UsageError(f"--b is required for --method {self.method}")
        if self.b is not None and not self.b > 0.0:
            raise UsageError("--b must be > 0")
        if self.problem not in ("diag", "green"):
            raise UsageError(f"unknown problem {self.problem!r} (diag or green)")
        if self.delta < 0.0:
            raise UsageError("--delta must be >= 0")
        if not self.tau_factor > 1.0:
            raise UsageError("--tau-factor must be > 1")
        for g in (self.t_grid, self.delta_grid) + ((self.alpha_grid,) if self.alpha_grid else ()):
            parse_grid(g)
        return self

    def build_filter(self):
        return FlowFilter(self.method, self.b)

    def build_problem(self):
        if self.problem == "diag":
            return diagonal_problem(self.n, self.p, self.mu, seed=self.seed)
        return integral_problem(self.n, seed=self.seed)


_FIELDS = {f.name for f in fields(RunConfig)}


def load_config(args):
    """RunConfig from defaults, then the TOML file, then explicit flags."""
    values = {}
    if getattr(args, "config", None):
        try:
            data = toml.load(args.config)
        except (OSError, toml.TomlDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from None
        data = {k.replace("-", "_"): v for k, v in data.items()}
        unknown = set(data) - _FIELDS
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(sorted(unknown))}")
        values.update(data)
    for name in _FIELDS:
        v = getattr(args, name, None)
        if v is not None:
            values[name] = v
    try:
        return RunConfig(**values)
    except TypeError as exc:
        raise UsageError(str(exc)) from None


def _stamp():
    now = datetime.datetime.now(datetime.timezone.utc).replace(microsecond=0).isoformat()
    return f"generated by regflow {VERSION} at {now}"


def _write_table(path, columns, rows):
    with open(path, "w", newline="") as fh:
        fh.write(f"# {_stamp()}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        w.writerows(rows)


def _num(x):
    return "" if x is None else f"{x:.12e}"


def _sqrt_curve(curve):
    return np.sqrt(curve.values)


def cmd_solve(cfg, fair_time=False, fair_b=3.0):
    f = cfg.build_filter()
    pr = cfg.build_problem()
    dec = pr.decomposition()
    tg = parse_grid(cfg.t_grid)
    nd = add_noise(pr.y, cfg.delta, seed=cfg.seed)
    os.makedirs(cfg.output_dir, exist_ok=True)
    err, res = dg.flow_trajectory(dec, f, nd.y_tilde, tg, pr.x_dagger)
    dg.write_curve_csv(os.path.join(cfg.output_dir, "error_vs_t.csv"), err, _stamp(), ("t", "error_sq"))
    dg.write_curve_csv(os.path.join(cfg.output_dir, "residual_vs_t.csv"), res, _stamp(), ("t", "residual_sq"))
    cols = ["method", "delta", "tau_factor", "threshold", "stopped", "t_stop", "residual_at_stop",
            "error_at_stop", "crossings", "optimal_error"]
    opt = float(np.sqrt(err.values.min()))
    if fair_time:
        _write_fair_time(cfg, dec, pr, nd, tg, f, fair_b)
    if cfg.delta == 0.0:
        _write_table(os.path.join(cfg.output_dir, "stop.csv"), cols,
                     [[f.label, _num(0.0), _num(cfg.tau_factor), _num(0.0), "no", "", "", "", "", _num(opt)]])
        print(f"{f.label}: clean data, no stopping; optimal error {opt:.6e}")
        return EXIT_OK
    try:
        st = dg.discrepancy_stop(dec, f, nd.y_tilde, cfg.delta, cfg.tau_factor, tg, pr.x_dagger)
    except dg.DiscrepancyNotReached as exc:
        thr = cfg.tau_factor * cfg.delta
        _write_table(os.path.join(cfg.output_dir, "stop.csv"), cols,
                     [[f.label, _num(cfg.delta), _num(cfg.tau_factor), _num(thr), "unreached", "",
                       _num(exc.final_residual), "", "", _num(opt)]])
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    _write_table(os.path.join(cfg.output_dir, "stop.csv"), cols,
                 [[f.label, _num(cfg.delta), _num(cfg.tau_factor), _num(st.threshold), "yes", _num(st.t_stop),
                   _num(st.residual_at_stop), _num(st.error_at_stop), st.crossings, _num(opt)]])
    print(f"{f.label}: stopped at t = {st.t_stop:.6e}, residual {st.residual_at_stop:.6e}, "
          f"error {st.error_at_stop:.6e} (grid optimum {opt:.6e})")
    return EXIT_OK


def _write_fair_time(cfg, dec, pr, nd, tg, f, fair_b):
    """Viscosity at t next to the first-order-in-time flows at t^2."""
    if f.kind is not FilterKind.VISCOSITY:
        raise UsageError("--fair-time compares against the viscosity flow; use --method viscosity")
    t = tg[tg ** 2 <= 1e16]
    others = [FlowFilter.showalter(), FlowFilter.heavy_ball(fair_b)]
    ev, _ = dg.flow_trajectory(dec, f, nd.y_tilde, t, pr.x_dagger)
    cols = ["t", f"{f.label}@t"] + [f"{g.label}@t^2" for g in others]
    data = [ev.values] + [dg.flow_trajectory(dec, g, nd.y_tilde, t * t, pr.x_dagger)[0].values for g in others]
    rows = [[_num(x)] + [_num(math.sqrt(d[i])) for d in data] for i, x in enumerate(t)]
    _write_table(os.path.join(cfg.output_dir, "fair_time.csv"), cols, rows)


def cmd_rates(cfg, quick=False, mus=None, b_heavy=3.0, b_viscosity=5.0):
    dlo, dhi, dn = _grid_bounds(cfg.delta_grid)
    tol = {"slope_tol": cfg.slope_tol, "residual_tol": cfg.residual_tol, "noisy_tol": cfg.noisy_tol,
           "delta_lo": dlo, "delta_hi": dhi, "delta_count": dn, "seed": cfg.seed}
    settings = suites.RateSettings.quick(**tol) if quick else suites.RateSettings(**tol)
    filters = [FlowFilter.showalter(), FlowFilter.heavy_ball(b_heavy), FlowFilter.viscosity(b_viscosity)]
    mus = tuple(mus) if mus else (0.5, 1.0, 2.0)
    tasks, results = suites.run_rates(filters, mus, settings)
    out = cfg.output_dir
    os.makedirs(os.path.join(out, "curves"), exist_ok=True)
    rows, checks = [], []
    for (f, mu), res in zip(tasks, results):
        rows.extend(res.rows)
        checks.extend(res.checks)
        for q, curve in res.curves.items():
            name = f"{f.kind.value}{'' if f.b is None else f'_b{f.b:g}'}_mu{mu:g}_{q}.csv"
            dg.write_curve_csv(os.path.join(out, "curves", name), curve, _stamp())
    _write_table(os.path.join(out, "summary.csv"), suites.RATE_COLUMNS, [r.row() for r in rows])
    _write_table(os.path.join(out, "sandwich.csv"), ["suite", "check", "points", "max_violation", "status"],
                 [c.row() for c in checks])
    failed = [r for r in rows if r.status == "fail"] + [c for c in checks if not c.passed]
    for r in rows:
        slope = "" if r.slope is None else f" slope {r.slope:+.3f} (expected {r.expected:+.3f})"
        print(f"{r.status.upper():10s} {r.method}{'' if r.b is None else f'(b={r.b:g})'} mu={r.mu:g} "
              f"{r.quantity}{slope}")
    print(f"sandwich checks: {sum(c.passed for c in checks)}/{len(checks)} pass")
    return EXIT_FAIL if failed else EXIT_OK


def _grid_bounds(text):
    g = parse_grid(text)
    return float(g[0]), float(g[-1]), int(g.size)


def cmd_verify(cfg, only=None, sigma0=None):
    try:
        results = suites.run_verify(only, sigma0=sigma0)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    os.makedirs(cfg.output_dir, exist_ok=True)
    _write_table(os.path.join(cfg.output_dir, "verify_report.csv"),
                 ["suite", "check", "points", "max_violation", "status"], [r.row() for r in results])
    bad = sorted({r.suite for r in results if not r.passed})
    names = list(dict.fromkeys(r.suite for r in results))
    for s in names:
        rs = [r for r in results if r.suite == s]
        print(f"{'FAIL' if s in bad else 'PASS'} {s}: {sum(r.passed for r in rs)}/{len(rs)} checks")
    if bad:
        print(f"failing suites: {', '.join(bad)}", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


def cmd_problem(cfg):
    pr = cfg.build_problem()
    save_problem(pr, cfg.output_dir)
    print(f"wrote {cfg.problem} problem (n={pr.n}) to {cfg.output_dir}")
    return EXIT_OK


def _common(sp):
    sp.add_argument("--config", help="TOML file with run settings; flags override it")
    sp.add_argument("--output-dir", dest="output_dir")
    sp.add_argument("--seed", type=int)


def _problem_args(sp):
    sp.add_argument("--problem", choices=("diag", "green"))
    sp.add_argument("--n", type=int)
    sp.add_argument("--p", type=float)
    sp.add_argument("--mu", type=float)


def build_parser():
    ap = argparse.ArgumentParser(prog="regflow", description="Dynamical regularisation flows for linear "
                                 "ill-posed problems.")
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("solve", help="run one flow with discrepancy stopping")
    _common(sp)
    _problem_args(sp)
    sp.add_argument("--method", choices=[k.value for k in FilterKind])
    sp.add_argument("--b", type=float)
    sp.add_argument("--delta", type=float)
    sp.add_argument("--tau-factor", dest="tau_factor", type=float)
    sp.add_argument("--t-grid", dest="t_grid")
    sp.add_argument("--fair-time", action="store_true", help="also report Showalter/heavy ball at t^2")
    sp.add_argument("--fair-b", type=float, default=3.0, help="heavy-ball damping for --fair-time")

    sp = sub.add_parser("rates", help="convergence-rate benchmark across methods and mu")
    _common(sp)
    sp.add_argument("--quick", action="store_true", help="smaller problems and grids")
    sp.add_argument("--mu", type=float, action="append", dest="mus", help="source order (repeatable)")
    sp.add_argument("--b-heavy", type=float, default=3.0)
    sp.add_argument("--b-viscosity", type=float, default=5.0)
    sp.add_argument("--delta-grid", dest="delta_grid")
    sp.add_argument("--slope-tol", dest="slope_tol", type=float)
    sp.add_argument("--residual-tol", dest="residual_tol", type=float)
    sp.add_argument("--noisy-tol", dest="noisy_tol", type=float)

    sp = sub.add_parser("verify", help="property and oracle suites")
    _common(sp)
    sp.add_argument("--only", action="append", help=f"suite to run (repeatable): {', '.join(suites.SUITES)}")
    sp.add_argument("--corrupt-sigma0", dest="corrupt_sigma0", type=float, help=argparse.SUPPRESS)

    sp = sub.add_parser("problem", help="generate and serialise a test problem")
    _common(sp)
    _problem_args(sp)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args)
        if args.command == "solve":
            return cmd_solve(cfg.validate(), args.fair_time, args.fair_b)
        if args.command == "rates":
            cfg.method, cfg.b = "showalter", None
            cfg.validate()
            return cmd_rates(cfg, args.quick, args.mus, args.b_heavy, args.b_viscosity)
        if args.command == "verify":
            only = [s for item in (args.only or []) for s in item.split(",") if s]
            return cmd_verify(cfg, only or None, args.corrupt_sigma0)
        if cfg.problem == "diag" and cfg.mu < 0.0:
            raise UsageError("--mu must be >= 0")
        return cmd_problem(cfg)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
