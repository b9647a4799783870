"""Command line entry point: ``zrsim <subcommand> [flags]``.

Exit codes: 0 on success (or all checks passed), 2 when an acceptance check
fails, 1 on any error.
"""

from __future__ import annotations

import argparse
import csv
import math
import os
import sys

import numpy as np

from ..core import CONSTANT_RATE, INFINITE, AsymmetryParams, ZRError, read_rate_file
from ..dual_map import run_dual, write_dual_csv
from ..engine import init_rng, run, write_timeline_csv, write_trajectory
from ..hydro import EntropySolution, Flux, write_profile_csv
from ..measures import (
    bernoulli_ex,
    fugacity_of_density,
    mean_density,
    origin_second_burst,
    product_zr,
    sample_initial,
    window_for,
    xi_star,
    xi_star_third,
)
from .harness import EXPERIMENTS, ExperimentConfig, run_experiment
from .report import emit

# flag name -> (type, fallback when neither flag nor config file sets it)
FLAGS = {
    "p": (float, None),
    "rate": (str, "constant"),
    "rho": (str, None),
    "lambda": (float, None),
    "alpha": (float, None),
    "beta": (float, None),
    "t": (float, None),
    "replicas": (int, None),
    "seed": (int, 0),
    "window_margin_sigmas": (float, 8.0),
    "out": (str, "zrsim-out"),
    "format": (str, "csv"),
    "threads": (int, 1),
    "init": (str, None),
    "labels": (int, None),
    "u": (float, None),
    "points": (int, 201),
}


def read_config_file(path) -> dict:
    """``key = value`` lines; ``#`` starts a comment; keys may use - or _."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for n, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{n}: expected key=value")
            k, v = (s.strip() for s in line.split("=", 1))
            k = k.lstrip("-").replace("-", "_")
            if k not in FLAGS:
                raise ValueError(f"{path}:{n}: unknown key {k!r}")
            out[k] = FLAGS[k][0](v)
    return out


class _Parser(argparse.ArgumentParser):
    # usage errors count as errors (exit 1); 2 is reserved for failed checks
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="zrsim", description="Zero-range / exclusion simulator and limit-law checks")
    common = _Parser(add_help=False)
    common.add_argument("--config", help="key=value file mirroring the flags (flags win)")
    for name, (typ, _) in FLAGS.items():
        flag = "--" + name.replace("_", "-")
        kw = {"dest": name, "type": typ, "default": None}
        if name == "format":
            kw["choices"] = ["csv", "json"]
        if name == "rate":
            kw["help"] = "'constant' or a file with g(1), g(2), ... (last value is the tail)"
        if name == "rho":
            kw["help"] = "left density; 'inf' for infinitely many particles per site"
        common.add_argument(flag, **kw)
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("sample-measure", parents=[common], help="draw initial configurations from a step product measure")
    sub.add_parser("simulate", parents=[common], help="run replicas and write observable timelines")
    v = sub.add_parser("verify", parents=[common], help="run one acceptance experiment")
    v.add_argument("experiment", choices=sorted(EXPERIMENTS))
    sub.add_parser("profile", parents=[common], help="write the entropy solution table u, rho, F, F'")
    sub.add_parser("dual-check", parents=[common], help="check the zero-range/exclusion correspondence pathwise")
    return ap


def _settings(args) -> dict:
    s = read_config_file(args.config) if args.config else {}
    for name in FLAGS:
        val = getattr(args, name)
        if val is not None:
            s[name] = val
    for name, (_, fallback) in FLAGS.items():
        s.setdefault(name, fallback)
    return s


def _asym(s):
    return AsymmetryParams(1.0 if s["p"] is None else s["p"])


def _rate(s):
    return CONSTANT_RATE if s["rate"] == "constant" else read_rate_file(s["rate"])


def _rho(s):
    r = s["rho"]
    if r is None:
        return None
    return INFINITE if str(r).lower() in ("inf", "infinity") else float(r)


def _spec(s, default="product"):
    kind = s["init"] or default
    rho = _rho(s)
    lam = s["lambda"] if s["lambda"] is not None else 0.0
    if s["alpha"] is not None or s["beta"] is not None or kind == "bernoulli":
        return bernoulli_ex(s["alpha"] or 0.0, s["beta"] or 0.0), "ex"
    if kind == "xi_star":
        return xi_star(), "zr"
    if kind == "xi_star_third":
        return xi_star_third(), "zr"
    if kind == "burst":
        return origin_second_burst(INFINITE if rho is None else rho, s["labels"] or 30), "zr"
    if kind in ("product", "second"):
        return product_zr(1.0 if rho is None else rho, lam, second_class=kind == "second"), "zr"
    raise ValueError(f"unknown --init {kind!r} (product, second, xi_star, xi_star_third, burst, bernoulli)")


def cmd_sample_measure(s) -> int:
    g = _rate(s)
    spec, mode = _spec(s)
    n = s["replicas"] or 10
    win = (-(s["points"] // 2), s["points"] // 2)
    os.makedirs(s["out"], exist_ok=True)
    path = os.path.join(s["out"], "sample_measure.csv")
    right = []
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["replica", "site", "occupancy"])
        for k in range(n):
            c = sample_initial(spec, win, init_rng(s["seed"], k), None if mode == "ex" else g)
            for x, st in zip(c.sites(), c.stacks):
                w.writerow([k, x, "inf" if st.infinite else st.occupancy])
            right.extend(st.occupancy for x, st in zip(c.sites(), c.stacks) if x >= 0 and not st.infinite)
    if mode == "zr":
        lam = spec.lam
        print(f"mean occupancy right of the origin {np.mean(right):.4f} (expected {mean_density(g, fugacity_of_density(g, lam)):.4f})")
    print(path)
    return 0


def cmd_simulate(s) -> int:
    g = _rate(s)
    asym = _asym(s)
    spec, mode = _spec(s, "xi_star")
    t = s["t"] or 100.0
    n = s["replicas"] or 1
    vmax = 1.0 if mode == "ex" else g.gmax
    win = window_for(t, vmax, s["window_margin_sigmas"], exact_left=asym.totally_asymmetric and mode == "zr")
    times = np.linspace(0.0, t, 11)
    os.makedirs(s["out"], exist_ok=True)
    timelines = []
    for k in range(n):
        init = sample_initial(spec, win, init_rng(s["seed"], k), None if mode == "ex" else g)
        r = run(init, asym, g, t, times, mode=mode, seed=s["seed"], replica=k, trajectory=(n == 1), on_breach="flag")
        if r.breach:
            print(f"replica {k}: window breach (raise --window-margin-sigmas)", file=sys.stderr)
        timelines.append((k, r.timeline))
        if n == 1 and r.trajectory is not None:
            write_trajectory(os.path.join(s["out"], "trajectory.tsv"), r.trajectory)
    path = os.path.join(s["out"], "timeline.csv")
    write_timeline_csv(path, timelines)
    print(path)
    return 0


def cmd_verify(s, experiment) -> int:
    rho = _rho(s)
    cfg = ExperimentConfig(
        experiment,
        p=s["p"],
        rate=tuple(_rate(s).values),
        rho=None if rho is None else (math.inf if rho is INFINITE else rho),
        lam=s["lambda"], alpha=s["alpha"], beta=s["beta"], t=s["t"], replicas=s["replicas"],
        seed=s["seed"], u=s["u"], labels=s["labels"], window_margin_sigmas=s["window_margin_sigmas"],
        threads=s["threads"], out=s["out"],
    )
    report = run_experiment(cfg)
    paths = emit(report, s["out"], s["format"])
    for c in report.checks:
        status = "PASS" if c["passed"] else "FAIL"
        print(f"{status} {experiment}.{c['name']}: value={c['value']} target={c['target']} tol={c['tolerance']}")
    if report.meta["discarded_replicas"]:
        print(f"discarded replicas: {report.meta['discarded_replicas']}")
    print("\n".join(paths))
    return 0 if report.passed else 2


def cmd_profile(s) -> int:
    g = _rate(s)
    rho = _rho(s)
    sol = EntropySolution(INFINITE if rho is None else rho, s["lambda"] or 0.0, Flux(g, _asym(s)))
    a, b = sol.speeds()
    lo = min(a, 0.0) - 0.1
    hi = b + 0.1
    os.makedirs(s["out"], exist_ok=True)
    path = os.path.join(s["out"], "profile.csv")
    write_profile_csv(path, sol, np.linspace(lo, hi, s["points"]), s["t"] or 1.0)
    print(path)
    return 0


def cmd_dual_check(s) -> int:
    g = _rate(s)
    asym = _asym(s)
    spec, _ = _spec(s, "xi_star")
    t = s["t"] or 100.0
    n = s["replicas"] or 10
    win = window_for(t, g.gmax, s["window_margin_sigmas"], exact_left=True)
    results = []
    for k in range(n):
        init = sample_initial(spec, win, init_rng(s["seed"], k), g)
        results.append((k, run_dual(init, asym, g, t, seed=s["seed"], replica=k)))
    os.makedirs(s["out"], exist_ok=True)
    path = os.path.join(s["out"], "dual.csv")
    write_dual_csv(path, results)
    failures = sum(r.failures for _, r in results)
    checks = sum(r.checks for _, r in results)
    print(f"{'PASS' if failures == 0 else 'FAIL'} dual-check: {checks} events checked, {failures} failures")
    print(path)
    return 0 if failures == 0 else 2


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        s = _settings(args)
        if args.command == "sample-measure":
            return cmd_sample_measure(s)
        if args.command == "simulate":
            return cmd_simulate(s)
        if args.command == "verify":
            return cmd_verify(s, args.experiment)
        if args.command == "profile":
            return cmd_profile(s)
        return cmd_dual_check(s)
    except (ZRError, ValueError, OSError) as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
