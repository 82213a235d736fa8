"""Command-line experiment runner: ``steinvi {gmm1d,logreg,theory-check,ksd}``.

Exit codes: 0 success, 1 failed check or numerical failure, 2 usage error.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
import warnings
from contextlib import nullcontext
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np

from . import __version__
from .core import InvalidArgumentError, NumericalFailureError, ParticleEnsemble, RngStream
from .dataio import ParseError, load_dataset, synth_logistic
from .diagnostics import kde_1d
from .kernels import BandwidthPolicy, RbfKernel, median_bandwidth
from .ksd import ksd_bootstrap_se, ksd_squared, run_theory_checks
from .targets import GaussianMixture, gaussian, bimodal_mixture

OUTPUT_ENV = "STEINVI_OUTPUT_DIR"
DEFAULT_SGLD_GRID = "1e-6,1e-5,1e-4,1e-3,1e-2,1e-1"


class UsageError(Exception):
    pass


# --- formatting -------------------------------------------------------------

def fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def resolved_config(args: argparse.Namespace) -> Dict:
    return {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "config")}


def header_lines(command: str, args: argparse.Namespace) -> List[str]:
    return [f"# steinvi {__version__} {command}",
            "# config: " + json.dumps(resolved_config(args), sort_keys=True, default=str)]


def write_csv(path: Path, header: Sequence[str], columns: Sequence[str], rows: Iterable) -> None:
    with open(path, "w", newline="") as f:
        for line in header:
            f.write(line + "\n")
        f.write(",".join(columns) + "\n")
        for row in rows:
            vals = row if isinstance(row, (list, tuple)) else [row[c] for c in columns]
            f.write(",".join(fmt(v) for v in vals) + "\n")


def output_dir(args) -> Path:
    out = Path(args.out or os.environ.get(OUTPUT_ENV) or "steinvi-out")
    out.mkdir(parents=True, exist_ok=True)
    return out


def parse_spec(text: str) -> Dict[str, str]:
    """``kind:key=value,...`` or ``key=value,...`` into a dict (kind under ``_kind``)."""
    kind, sep, rest = text.partition(":")
    if not sep:
        kind, rest = ("", text) if "=" in text else (text, "")
    out = {"_kind": kind.strip()}
    for item in filter(None, (s.strip() for s in rest.split(","))):
        key, eq, val = item.partition("=")
        if not eq:
            raise UsageError(f"bad spec item {item!r} in {text!r}")
        out[key.strip()] = val.strip()
    return out


def float_list(text: str) -> List[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def int_list(text: str) -> List[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def require(cond: bool, flag: str, message: str) -> None:
    if not cond:
        raise UsageError(f"argument {flag}: {message}")


def thread_limit(threads: Optional[int]):
    if not threads:
        return nullcontext()
    from threadpoolctl import threadpool_limits
    return threadpool_limits(limits=threads)


# --- gmm1d --------------------------------------------------------------------

def cmd_gmm1d(args) -> int:
    from .experiments import moment_rows, monte_carlo_sample, gmm_test_functions, run_gmm_trial

    require(args.n >= 1, "--n", "must be >= 1")
    require(args.iters >= 1, "--iters", "must be >= 1")
    require(args.trials >= 1, "--trials", "must be >= 1")
    require(args.master_step > 0, "--master-step", "must be positive")
    require(0 <= args.momentum < 1, "--momentum", "must lie in [0, 1)")
    require(args.init_std > 0, "--init-std", "must be positive")
    require(args.record_every >= 0, "--record-every", "must be >= 0")
    require(args.grid_points >= 2 and args.grid_max > args.grid_min, "--grid-points",
            "need at least 2 points on a non-empty range")
    sweep = args.sweep_n or [args.n]
    require(all(n >= 1 for n in sweep), "--sweep-n", "particle counts must be >= 1")
    policy = BandwidthPolicy.parse(args.bandwidth)
    target = bimodal_mixture()
    out = output_dir(args)
    header = header_lines("gmm1d", args)

    cache = {}

    def trial(n, t, record_every=0):
        key = (n, t)
        if key not in cache or (record_every and len(cache[key].snapshots) < 2):
            cache[key] = run_gmm_trial(n, args.iters, args.seed, t, args.master_step, args.momentum,
                                       args.init_mean, args.init_std, policy, record_every, target)
        return cache[key]

    main = trial(args.n, 0, args.record_every)
    grid = np.linspace(args.grid_min, args.grid_max, args.grid_points)
    write_csv(out / "trajectory.csv", header, ["iter", "particle_index", "value"],
              ((it, i, v) for it, snap in main.snapshots for i, v in enumerate(snap[:, 0])))
    write_csv(out / "kde.csv", header, ["iter", "x", "density"],
              ((it, x, dens) for it, snap in main.snapshots
               for x, dens in zip(grid, kde_1d(snap, grid))))

    columns = ["n", "test_function", "trial", "estimate", "truth", "squared_error"]
    rows, mc_rows = [], []
    for n in sweep:
        for t in range(args.trials):
            funcs = gmm_test_functions(args.seed, t)
            rows += moment_rows(trial(n, t).final, n, t, funcs, target)
            if args.monte_carlo:
                mc_rows += moment_rows(monte_carlo_sample(n, args.seed, t, target), n, t, funcs, target)
    write_csv(out / "moments.csv", header, columns, rows)
    if args.monte_carlo:
        write_csv(out / "moments_mc.csv", header, columns, mc_rows)
    print(f"wrote trajectory.csv, kde.csv, moments.csv to {out}")
    return 0


# --- logreg -------------------------------------------------------------------

def synthetic_dataset(spec: str, seed: int):
    items = parse_spec(spec)
    if items["_kind"]:
        raise UsageError(f"argument --synthetic: unexpected prefix in {spec!r}")
    try:
        n = int(items.get("N", 2000))
        d = int(items.get("d", 5))
        norm = float(items.get("norm", 3.0))
        noise = float(items.get("noise", 0.0))
    except ValueError:
        raise UsageError(f"argument --synthetic: bad value in {spec!r}") from None
    require(n >= 10 and d >= 1, "--synthetic", "need N >= 10 and d >= 1")
    return synth_logistic(n, d, norm, noise, seed)


def cmd_logreg(args) -> int:
    from .experiments import (
        logreg_map, logreg_sgld_parallel, logreg_sgld_sequential, logreg_svgd,
        prepare_logreg, select_sgld_step,
    )

    require(bool(args.data) != bool(args.synthetic), "--data", "give exactly one of --data or --synthetic")
    require(args.n >= 1, "--n", "must be >= 1")
    require(args.batch >= 1, "--batch", "must be >= 1")
    require(args.iters >= 1, "--iters", "must be >= 1")
    require(args.master_step > 0, "--master-step", "must be positive")
    require(0 < args.test_fraction < 1, "--test-fraction", "must lie in (0, 1)")
    require(args.a > 0 and args.b > 0, "--a", "Gamma hyperparameters must be positive")
    if args.data:
        require(Path(args.data).is_file(), "--data", f"no such file {args.data!r}")
        dataset = load_dataset(args.data)
    else:
        dataset = synthetic_dataset(args.synthetic, args.seed)
    problem = prepare_logreg(dataset, args.test_fraction, args.seed, args.batch, args.a, args.b,
                             not args.no_standardize)
    out = output_dir(args)
    kw = dict(record_every=args.record_every, wallclock=args.wallclock)
    rows = []
    _, r = logreg_svgd(problem, args.n, args.iters, args.seed, args.master_step, args.momentum,
                       bandwidth=BandwidthPolicy.parse(args.bandwidth), **kw)
    rows += r
    baselines = list(dict.fromkeys(args.baseline or []))
    sgld_a = args.sgld_a
    if any(b.startswith("sgld") for b in baselines) and sgld_a is None:
        sgld_a = select_sgld_step(problem, args.sgld_grid, args.n, args.sgld_select_iters, args.seed)
        print(f"selected SGLD step scale a={sgld_a:g}")
    for b in baselines:
        if b == "map":
            rows += logreg_map(problem, args.iters, args.seed, args.master_step, args.momentum, **kw)[1]
        elif b == "sgld-parallel":
            rows += logreg_sgld_parallel(problem, args.n, args.iters, args.seed, sgld_a,
                                         gradient_scale=args.sgld_gradient_scale, **kw)[1]
        elif b == "sgld-seq":
            rows += logreg_sgld_sequential(problem, args.n, args.iters, args.seed, sgld_a, **kw)[1]
    header = header_lines("logreg", args)
    if sgld_a is not None:
        header.append(f"# sgld_a: {fmt(sgld_a)}")
    header.append("# data: " + json.dumps({"n_train": problem.train.n, "n_test": problem.test.n,
                                           "features": problem.train.n_features,
                                           "metadata": problem.train.metadata},
                                          sort_keys=True, default=str))
    columns = ["method", "iteration", "epoch_fraction", "accuracy", "avg_test_ll", "wallclock_seconds"]
    write_csv(out / "metrics.csv", header, columns, rows)
    for m in ["svgd"] + baselines:
        last = [r for r in rows if r["method"] == m][-1]
        print(f"{m:14s} accuracy={last['accuracy']:.4f} avg_test_ll={last['avg_test_ll']:.5f}")
    return 0


# --- theory-check -------------------------------------------------------------

def cmd_theory_check(args) -> int:
    require(args.fd_step > 0, "--fd-step", "must be positive")
    require(args.nodes >= 2, "--nodes", "must be >= 2")
    require(args.samples >= 1000, "--samples", "must be >= 1000")
    results = run_theory_checks(args.fd_step, args.nodes, args.samples, args.seed)
    ok = all(p for _, p in results)
    if args.json:
        payload = {"version": __version__, "config": resolved_config(args), "passed": ok,
                   "checks": [dict(r.as_dict(), passed=p) for r, p in results]}
        text = json.dumps(payload, indent=2, sort_keys=True)
    else:
        lines = [f"{'check':36s} {'analytic':>22s} {'numeric':>22s} {'rel_error':>12s}  result"]
        for r, p in results:
            crit = f"3SE={3 * r.stderr:.2e}" if r.stderr is not None else "tol=1e-04"
            lines.append(f"{r.name:36s} {r.analytic:22.15g} {r.numeric:22.15g} {r.rel_error:12.3e}  "
                         f"{'PASS' if p else 'FAIL'} ({crit})")
        text = "\n".join(lines)
    print(text)
    if args.out:
        out = output_dir(args)
        name = "theory_check.json" if args.json else "theory_check.txt"
        (out / name).write_text("\n".join(header_lines("theory-check", args)) + "\n" + text + "\n"
                                if not args.json else text + "\n")
    return 0 if ok else 1


# --- ksd ----------------------------------------------------------------------

def target_from_spec(spec: str):
    items = parse_spec(spec)
    kind = items.pop("_kind")
    try:
        if kind == "gmm":
            return bimodal_mixture()
        if kind in ("normal", "gaussian"):
            d = int(items.get("d", 1))
            return gaussian(float(items.get("mean", 0.0)), float(items.get("std", 1.0)) ** 2, d)
    except (ValueError, InvalidArgumentError) as e:
        raise UsageError(f"argument --target: {e}") from None
    raise UsageError(f"argument --target: unknown target {spec!r} (use normal:... or gmm)")


def load_particles(path: str) -> np.ndarray:
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", UserWarning)
            X = np.loadtxt(path, delimiter="," if path.endswith(".csv") else None, ndmin=2, comments="#")
    except (OSError, ValueError) as e:
        raise UsageError(f"argument --particles: cannot read {path!r}: {e}") from None
    return X


def cmd_ksd(args) -> int:
    require(bool(args.particles) != bool(args.generate), "--particles",
            "give exactly one of --particles or --generate")
    require(args.bootstrap >= 0, "--bootstrap", "must be >= 0")
    target = target_from_spec(args.target)
    if args.particles:
        X = load_particles(args.particles)
    else:
        gen = parse_spec(args.generate)
        kind = gen.pop("_kind")
        m = int(gen.pop("m", 1000))
        require(m >= 1, "--generate", "m must be >= 1")
        source = target_from_spec(args.generate) if kind else target
        X = source.sample(m, RngStream(args.seed, 0))
    require(X.shape[1] == target.dim, "--target", f"dimension {target.dim} != particle dimension {X.shape[1]}")
    ens = ParticleEnsemble(X)
    if args.bandwidth == "median":
        h = median_bandwidth(ens)
    else:
        try:
            h = float(args.bandwidth)
        except ValueError:
            raise UsageError(f"argument --bandwidth: expected 'median' or a number") from None
        require(h > 0, "--bandwidth", "must be positive")
    kernel = RbfKernel(h)
    v = ksd_squared(ens, target, kernel, "V")
    report = {"n": ens.n, "d": ens.d, "h": h, "target": args.target, "ksd_v": v.value}
    if ens.n >= 2:
        report["ksd_u"] = ksd_squared(ens, target, kernel, "U").value
        if args.bootstrap:
            report["ksd_u_bootstrap_se"] = ksd_bootstrap_se(ens, target, kernel, "U", args.bootstrap,
                                                            RngStream(args.seed, 1))
    if args.json:
        text = json.dumps({"version": __version__, "config": resolved_config(args), **report},
                          indent=2, sort_keys=True)
    else:
        text = "\n".join(f"{k}: {fmt(val)}" for k, val in report.items())
    print(text)
    if args.out:
        out = output_dir(args)
        body = text if args.json else "\n".join(header_lines("ksd", args)) + "\n" + text
        (out / ("ksd.json" if args.json else "ksd.txt")).write_text(body + "\n")
    return 0


# --- parser -------------------------------------------------------------------

def read_config_file(path: str) -> Dict[str, str]:
    """``key = value`` lines; keys use flag names with or without leading dashes."""
    out = {}
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, eq, val = line.partition("=")
            if not eq:
                raise UsageError(f"config {path}:{lineno}: expected key = value")
            out[key.strip().lstrip("-").replace("-", "_")] = val.strip()
    return out


def _common(p: argparse.ArgumentParser, out: bool = True) -> None:
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", help="key = value file; flags override it")
    p.add_argument("--threads", type=int, default=None, help="cap on BLAS worker threads")
    if out:
        p.add_argument("--out", default=None, help=f"output directory (default ${OUTPUT_ENV} or ./steinvi-out)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="steinvi", description="Stein variational gradient descent experiments")
    parser.add_argument("--version", action="version", version=f"steinvi {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gmm1d", help="SVGD on the 1D Gaussian mixture toy problem")
    _common(g)
    g.add_argument("--n", type=int, default=100)
    g.add_argument("--iters", type=int, default=2000)
    g.add_argument("--master-step", type=float, default=0.05)
    g.add_argument("--momentum", type=float, default=0.9)
    g.add_argument("--init-mean", type=float, default=-10.0)
    g.add_argument("--init-std", type=float, default=1.0)
    g.add_argument("--bandwidth", default="median-adaptive",
                   help="median-adaptive, median, mean-adaptive or a fixed positive number")
    g.add_argument("--record-every", type=int, default=100)
    g.add_argument("--grid-min", type=float, default=-15.0)
    g.add_argument("--grid-max", type=float, default=10.0)
    g.add_argument("--grid-points", type=int, default=251)
    g.add_argument("--sweep-n", type=int_list, default=None)
    g.add_argument("--trials", type=int, default=1)
    g.add_argument("--monte-carlo", action="store_true", help="also write moments_mc.csv from exact samples")
    g.set_defaults(func=cmd_gmm1d)

    lr = sub.add_parser("logreg", help="Bayesian logistic regression")
    _common(lr)
    lr.add_argument("--data", help="libsvm or .csv dataset")
    lr.add_argument("--synthetic", help="N=2000,d=5,norm=3,noise=0")
    lr.add_argument("--n", type=int, default=100)
    lr.add_argument("--batch", type=int, default=50)
    lr.add_argument("--iters", type=int, default=3000)
    lr.add_argument("--test-fraction", type=float, default=0.2)
    lr.add_argument("--master-step", type=float, default=0.01)
    lr.add_argument("--momentum", type=float, default=0.9)
    lr.add_argument("--bandwidth", default="median-adaptive")
    lr.add_argument("--a", type=float, default=1.0, help="Gamma prior shape")
    lr.add_argument("--b", type=float, default=0.01, help="Gamma prior rate")
    lr.add_argument("--baseline", action="append", choices=["sgld-parallel", "sgld-seq", "map"])
    lr.add_argument("--sgld-a", type=float, default=None)
    lr.add_argument("--sgld-grid", type=float_list, default=float_list(DEFAULT_SGLD_GRID))
    lr.add_argument("--sgld-select-iters", type=int, default=500)
    lr.add_argument("--sgld-gradient-scale", type=float, default=1.0)
    lr.add_argument("--record-every", type=int, default=100)
    lr.add_argument("--no-standardize", action="store_true")
    lr.add_argument("--wallclock", action="store_true",
                    help="record elapsed seconds (otherwise nan, keeping output byte-reproducible)")
    lr.set_defaults(func=cmd_logreg)

    tc = sub.add_parser("theory-check", help="numerical checks of the KL-gradient and Fisher identities")
    _common(tc)
    tc.add_argument("--fd-step", type=float, default=1e-3)
    tc.add_argument("--nodes", type=int, default=200)
    tc.add_argument("--samples", type=int, default=100_000)
    tc.add_argument("--json", action="store_true")
    tc.set_defaults(func=cmd_theory_check)

    k = sub.add_parser("ksd", help="kernelized Stein discrepancy of a particle set")
    _common(k)
    k.add_argument("--particles", help="text/CSV file, one particle per row")
    k.add_argument("--generate", help="e.g. normal:m=1000,mean=0,std=1 or m=1000 (samples the target)")
    k.add_argument("--target", default="normal:mean=0,std=1")
    k.add_argument("--bandwidth", default="median")
    k.add_argument("--bootstrap", type=int, default=100)
    k.add_argument("--json", action="store_true")
    k.set_defaults(func=cmd_ksd)
    parser.subcommands = {"gmm1d": g, "logreg": lr, "theory-check": tc, "ksd": k}
    return parser


def parse_args(argv: Optional[Sequence[str]] = None) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        try:
            cfg = read_config_file(args.config)
        except (OSError, UsageError) as e:
            parser.error(str(e))
        sub = parser.subcommands[args.command]
        known = {a.dest: a for a in sub._actions}
        defaults = {}
        for key, val in cfg.items():
            if key not in known or key in ("config", "help"):
                parser.error(f"config {args.config}: unknown key {key!r}")
            action = known[key]
            if isinstance(action, argparse._StoreTrueAction):
                defaults[key] = val.lower() in ("1", "true", "yes", "on")
            elif isinstance(action, argparse._AppendAction):
                defaults[key] = [v.strip() for v in val.split(",") if v.strip()]
            else:
                defaults[key] = action.type(val) if action.type else val
        sub.set_defaults(**defaults)
        args = parser.parse_args(argv)
    return args


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = parse_args(argv)
    try:
        with thread_limit(args.threads):
            return args.func(args)
    except UsageError as e:
        print(f"steinvi {args.command}: error: {e}", file=sys.stderr)
        return 2
    except (InvalidArgumentError, ParseError) as e:
        print(f"steinvi {args.command}: error: {e}", file=sys.stderr)
        return 2
    except NumericalFailureError as e:
        print(f"steinvi {args.command}: numerical failure: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
