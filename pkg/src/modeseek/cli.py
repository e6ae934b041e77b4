"""Command-line entry point: ``modeseek {oracle,run,sweep,modes,sample}``.

Exit codes: 0 success, 1 configuration error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys

import numpy as np

from . import harness
from .density import load_mixture, sample
from .errors import ConfigError, ModeseekError
from .flow import FlowConfig, integrate_flow
from .kde import save_points
from .trajectory import Status

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


def _load_config(args) -> harness.ExperimentConfig:
    cfg = harness.ExperimentConfig.load(args.config)
    if getattr(args, "output", None):
        cfg.output = args.output
    return cfg


def cmd_oracle(args) -> int:
    cfg = _load_config(args)
    model = harness.build_model(cfg)
    modes = model.modes
    flow_cfg = FlowConfig(**cfg.oracle).resolve(model, modes)
    starts = harness.build_starts(cfg, model, modes)
    trajs = [integrate_flow(model, x, flow_cfg, modes) for x in starts]
    basins = [t.terminal.mode_index if t.terminal.status is Status.CONVERGED else None for t in trajs]
    counts = {i: 0 for i in range(len(modes))}
    for b in basins:
        if b is not None:
            counts[b] += 1
    unresolved = sum(b is None for b in basins)
    print(f"starts: {len(starts)}  resolved: {len(starts) - unresolved}  unresolved: {unresolved}")
    for i, c in counts.items():
        print(f"  mode {i} {np.array2string(modes[i], precision=6)}: {c}")
    if args.output:
        d = model.dim
        with open(args.output, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([f"x{i}" for i in range(d)] + ["basin"] + [f"end{i}" for i in range(d)]
                       + ["arc_length", "terminal"])
            for x, b, t in zip(starts, basins, trajs):
                w.writerow([_g(v) for v in x] + ["" if b is None else b] + [_g(v) for v in t.endpoint]
                           + [_g(t.arc_length), str(t.terminal)])
    return EXIT_OK


def _g(v) -> str:
    return format(float(v), ".17g")


def _print_report(report: harness.ExperimentReport) -> None:
    print(f"{'algorithm':<24}{'param':>8}{'value':>12}{'resolved':>10}{'agreement':>11}{'hausdorff':>12}"
          f"{'viol m/s/a':>12}")
    for r in report.rows:
        viol = f"{r.violations_monotone}/{r.violations_steplaw}/{r.violations_angle}"
        print(f"{r.algorithm:<24}{r.param_name:>8}{r.param_value:>12.5g}{r.n_resolved:>10}"
              f"{r.agreement_fraction:>11.4f}{r.mode_hausdorff:>12.3e}{viol:>12}")


def cmd_run(args) -> int:
    cfg = _load_config(args)
    report = harness.run_experiment(cfg, workers=args.workers)
    _print_report(report)
    if cfg.output:
        print(f"report written to {cfg.resolve_path(cfg.output)}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _load_config(args)
    report = harness.run_experiment(cfg, workers=args.workers)
    _print_report(report)
    print()
    for name in dict.fromkeys(r.algorithm for r in report.rows):
        series = report.series(name)
        if len(series) > 1:
            trend = "nondecreasing" if harness.agreement_nondecreasing(report, name) else "NOT monotone"
            print(f"{name}: agreement {trend} across {len(series)} refinements")
    return EXIT_OK


def _mixture(path):
    try:
        return load_mixture(path)
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None


def cmd_modes(args) -> int:
    model = _mixture(args.model)
    modes = model.modes
    b = model.bounds
    print(f"dim {model.dim}, {model.n_components} components, {len(modes)} modes, "
          f"min separation {modes.min_separation:.6g}")
    print(f"kappa0 {b.kappa0:.6g}  kappa1 {b.kappa1:.6g}  kappa2 {b.kappa2:.6g}")
    for i, m in enumerate(modes):
        ev = np.linalg.eigvalsh(model.hess(m))
        print(f"  {i}: {np.array2string(m, precision=9)}  f={model.value(m):.9g}  "
              f"hess eig [{ev.min():.4g}, {ev.max():.4g}]")
    return EXIT_OK


def cmd_sample(args) -> int:
    model = _mixture(args.model)
    save_points(sample(model, args.n, args.seed), args.output)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="modeseek", description="Mode-seeking algorithms checked against a gradient-flow oracle.")
    p.add_argument("--log-level", default="WARNING", help="logging level (default WARNING)")
    sub = p.add_subparsers(dest="command", required=True)

    o = sub.add_parser("oracle", help="basin assignment of the config's start points")
    o.add_argument("config")
    o.add_argument("-o", "--output", help="CSV of start, basin, endpoint, arc length and terminal status")
    o.set_defaults(func=cmd_oracle)

    for name, func, text in (("run", cmd_run, "run every algorithm and parameter of a config"),
                             ("sweep", cmd_sweep, "run a config and check agreement across refinements")):
        s = sub.add_parser(name, help=text)
        s.add_argument("config")
        s.add_argument("-o", "--output", help="report CSV (overrides the config)")
        s.add_argument("--workers", type=int, default=None, help="worker threads (default from config)")
        s.set_defaults(func=func)

    m = sub.add_parser("modes", help="modes and smoothness bounds of a mixture file")
    m.add_argument("model")
    m.set_defaults(func=cmd_modes)

    s = sub.add_parser("sample", help="draw an i.i.d. sample from a mixture file")
    s.add_argument("model")
    s.add_argument("-n", type=int, required=True, help="sample size")
    s.add_argument("-seed", "--seed", dest="seed", type=int, default=0, help="RNG seed")
    s.add_argument("-o", "--output", required=True, help="output CSV")
    s.set_defaults(func=cmd_sample)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ModeseekError, ValueError, OSError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
