"""Command-line entry point: ``panelmd {estimate,simulate,verify}``.

Exit status is 0 on success, 1 for invalid input (bad flag, malformed or
unbalanced CSV) and 2 for numerical failures such as singular matrices.
Every CSV written starts with ``# config: ...`` and ``# seed: ...`` lines.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from typing import IO, Sequence

import numpy as np

from . import __version__
from .estimators import estimate
from .exceptions import NumericalError, PanelError, SimulationError
from .montecarlo import (
    D_STRATEGIES,
    ConfigError,
    DistributionSpec,
    SimulationConfig,
    normality_study,
    run_simulation,
)
from .oracle import equivalence_run
from .panel import read_panel_csv
from .weights import read_weight_csv

log = logging.getLogger("panelmd")

DISTS = ("normal", "laplace", "logistic", "mtn")

# Simulation defaults; config files and flags share these keys.
SIM_DEFAULTS = {
    "n": 10,
    "T": 5,
    "reps": 1000,
    "seed": 0,
    "gamma-dist": "normal",
    "nu-dist": "normal",
    "beta": "-2,1.2,3.3",
    "x-range": "0,30",
    "estimators": "ols,within,re,md",
    "d-strategy": "omega-aligned",
    "rho-variant": "standard",
    "workers": 1,
    "out": None,
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse exits with 2 by default
        raise UsageError(message)


def _floats(text: str, flag: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in str(text).split(",") if v.strip())
    except ValueError:
        raise UsageError(f"{flag} expects comma-separated numbers, got {text!r}") from None


def _int(value, flag: str) -> int:
    try:
        return int(value)
    except (TypeError, ValueError):
        raise UsageError(f"{flag} expects an integer, got {value!r}") from None


def read_config_file(path: str) -> dict:
    """Parse ``key=value`` lines; blank lines and ``#`` comments are skipped."""
    out = {}
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise UsageError(f"--config: cannot read {path}: {exc}") from None
    for lineno, line in enumerate(lines, 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise UsageError(f"--config: line {lineno} is not key=value")
        key, value = (part.strip() for part in line.split("=", 1))
        key = key.lstrip("-").replace("_", "-")
        if key not in SIM_DEFAULTS:
            raise UsageError(f"--config: unknown key {key!r} on line {lineno}")
        out[key] = value
    return out


def _header(stream: IO[str], config: dict, seed) -> None:
    stream.write(f"# config: {json.dumps(config, sort_keys=True, default=str)}\n")
    stream.write(f"# seed: {seed}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="panelmd", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    est = sub.add_parser("estimate", help="estimate coefficients from a long-format panel CSV",
                         formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    est.add_argument("--input", required=True, help="CSV with header unit,time,y,x1,...,xp")
    est.add_argument("--method", required=True, choices=("ols", "within", "re", "md"))
    est.add_argument("--d-strategy", default="omega-aligned", choices=D_STRATEGIES,
                     help="weight matrix D for --method md; omega-* use Omega built from "
                          "estimated variance components")
    est.add_argument("--d-file", default=None, help="custom D as a headerless CSV of nT rows x p columns")
    est.add_argument("--within-pipeline", action="store_true",
                     help="apply MD to the within-transformed model")
    est.add_argument("--rho-variant", default="standard", choices=("standard", "paper"),
                     help="standard: 1 - s_nu/sqrt(s_nu^2 + T s_g^2); paper: s_nu^2 in the numerator "
                          "(not scale invariant); clamped to [0, 1)")
    est.add_argument("--out", default=None, help="output CSV path (stdout if omitted)")

    sim = sub.add_parser("simulate", help="Monte Carlo bias/SE/MSE table")
    d = SIM_DEFAULTS
    sim.add_argument("--config", default=None, help="file of key=value lines; flags override it")
    sim.add_argument("--n", help=f"cross-section units (default {d['n']}, as in the simulation study)")
    sim.add_argument("--T", help=f"time periods (default {d['T']}, as in the simulation study)")
    sim.add_argument("--reps", help=f"replications R (default {d['reps']}; not stated in the study)")
    sim.add_argument("--seed", help=f"64-bit master seed (default {d['seed']})")
    sim.add_argument("--gamma-dist", choices=DISTS,
                     help="individual effect law (default normal); normal/laplace/logistic use scale 5, "
                          "mtn is 0.9 N(0,2^2) + 0.1 N(0,5^2), following the study")
    sim.add_argument("--nu-dist", choices=DISTS, help="remainder disturbance law (default normal)")
    sim.add_argument("--beta", help=f"true coefficients (default {d['beta']}, from the study)")
    sim.add_argument("--x-range", help=f"uniform regressor range (default {d['x-range']}, from the study)")
    sim.add_argument("--estimators", help=f"comma list from ols,within,re,md (default {d['estimators']})")
    sim.add_argument("--d-strategy", choices=D_STRATEGIES,
                     help="D for the MD-on-within pipeline (default omega-aligned)")
    sim.add_argument("--rho-variant", choices=("standard", "paper"), help="rho formula for RE (default standard)")
    sim.add_argument("--workers", help="worker processes (default 1); results do not depend on it")
    sim.add_argument("--out", help="output CSV path (stdout if omitted)")

    ver = sub.add_parser("verify", help="numerical self-checks")
    vsub = ver.add_subparsers(dest="check", required=True, parser_class=_Parser)
    dist = vsub.add_parser("distance", help="indicator oracle versus closed-form distance",
                           formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    dist.add_argument("--n", type=int, default=2)
    dist.add_argument("--T", type=int, default=2)
    dist.add_argument("--p", type=int, default=2)
    dist.add_argument("--seed", type=int, default=0)
    dist.add_argument("--instances", type=int, default=200)
    dist.add_argument("--out", default=None)

    norm = vsub.add_parser("normality", help="KS check of standardized MD deviations",
                           formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    norm.add_argument("--n", type=int, default=200)
    norm.add_argument("--T", type=int, default=5)
    norm.add_argument("--p", type=int, default=3)
    norm.add_argument("--reps", type=int, default=2000)
    norm.add_argument("--seed", type=int, default=0)
    norm.add_argument("--gamma-dist", choices=DISTS, default="normal")
    norm.add_argument("--nu-dist", choices=DISTS, default="normal")
    norm.add_argument("--d-strategy", choices=D_STRATEGIES, default="omega-aligned")
    norm.add_argument("--out", default=None)
    return parser


def resolve_simulation(args: argparse.Namespace) -> SimulationConfig:
    """Merge defaults, the optional config file and explicit flags."""
    merged = dict(SIM_DEFAULTS)
    if args.config:
        merged.update(read_config_file(args.config))
    for key in SIM_DEFAULTS:
        value = getattr(args, key.replace("-", "_"), None)
        if value is not None:
            merged[key] = value
    for key, choices in (("gamma-dist", DISTS), ("nu-dist", DISTS), ("d-strategy", D_STRATEGIES),
                         ("rho-variant", ("standard", "paper"))):
        if merged[key] not in choices:
            raise UsageError(f"--{key} must be one of {', '.join(choices)}")
    beta = _floats(merged["beta"], "--beta")
    x_range = _floats(merged["x-range"], "--x-range")
    if len(x_range) != 2:
        raise UsageError("--x-range expects two numbers low,high")
    try:
        return SimulationConfig(
            n=_int(merged["n"], "--n"),
            T=_int(merged["T"], "--T"),
            p=len(beta),
            beta=beta,
            gamma_dist=DistributionSpec.parse(merged["gamma-dist"]),
            nu_dist=DistributionSpec.parse(merged["nu-dist"]),
            x_range=x_range,
            estimators=tuple(e.strip() for e in str(merged["estimators"]).split(",") if e.strip()),
            d_strategy=merged["d-strategy"],
            rho_variant=merged["rho-variant"],
            reps=_int(merged["reps"], "--reps"),
            seed=_int(merged["seed"], "--seed"),
            workers=_int(merged["workers"], "--workers"),
        )
    except ConfigError as exc:
        flag = {"rho_variant": "rho-variant", "x_range": "x-range"}.get(exc.name, exc.name)
        raise UsageError(f"--{flag}: {exc}") from None


def cmd_estimate(args: argparse.Namespace) -> int:
    data = read_panel_csv(args.input)
    D = read_weight_csv(args.d_file, data) if args.d_file and not args.within_pipeline else None
    report = estimate(
        args.method, data,
        d_strategy=args.d_strategy, rho_variant=args.rho_variant,
        within_pipeline=args.within_pipeline, D=D,
    )
    config = {
        "input": args.input, "method": args.method, "d_strategy": args.d_strategy,
        "d_file": args.d_file, "within_pipeline": args.within_pipeline,
        "rho_variant": args.rho_variant, "n": data.n, "T": data.T, "p": data.p,
    }
    se = report.std_errors
    with _writer(args.out) as out:
        _header(out, config, None)
        if report.rho_hat is not None and args.method == "re":
            out.write(f"# rho_hat: {report.rho_hat!r}\n")
        out.write("coefficient,estimate,std_error\n")
        for k, name in enumerate(data.names):
            s = "" if se is None else repr(float(se[k]))
            out.write(f"{name},{float(report.beta_hat[k])!r},{s}\n")
    return 0


class _nullcontext:
    def __init__(self, stream):
        self.stream = stream

    def __enter__(self):
        return self.stream

    def __exit__(self, *exc):
        self.stream.flush()
        return False


def _writer(path):
    return open(path, "w", encoding="utf-8", newline="") if path else _nullcontext(sys.stdout)


def cmd_simulate(args: argparse.Namespace) -> int:
    config = resolve_simulation(args)
    log.info("running %d replications", config.reps)
    table = run_simulation(config)
    described = config.describe()
    described.pop("workers")
    described.pop("seed")
    with _writer(args.out or SIM_DEFAULTS["out"]) as out:
        _header(out, described, config.seed)
        if any(table.failures.values()):
            out.write(f"# failures: {json.dumps(table.failures, sort_keys=True)}\n")
        table.write_csv(out)
    return 0


def cmd_verify_distance(args: argparse.Namespace) -> int:
    for flag, value, low in (("--n", args.n, 1), ("--T", args.T, 2), ("--p", args.p, 1), ("--instances", args.instances, 1)):
        if value < low:
            raise UsageError(f"{flag} must be at least {low}")
    worst = equivalence_run(args.n, args.T, args.p, args.instances, args.seed)
    config = {"n": args.n, "T": args.T, "p": args.p, "instances": args.instances}
    with _writer(args.out) as out:
        _header(out, config, args.seed)
        out.write("instances,max_relative_error\n")
        out.write(f"{args.instances},{worst!r}\n")
    return 0


def cmd_verify_normality(args: argparse.Namespace) -> int:
    for flag, value, low in (("--n", args.n, 1), ("--T", args.T, 2), ("--p", args.p, 1), ("--reps", args.reps, 200)):
        if value < low:
            raise UsageError(f"{flag} must be at least {low}")
    results, _ = normality_study(
        args.n, args.T, args.p, args.reps, args.seed,
        DistributionSpec.parse(args.gamma_dist), DistributionSpec.parse(args.nu_dist),
        args.d_strategy,
    )
    config = {
        "n": args.n, "T": args.T, "p": args.p, "reps": args.reps,
        "gamma_dist": args.gamma_dist, "nu_dist": args.nu_dist, "d_strategy": args.d_strategy,
    }
    with _writer(args.out) as out:
        _header(out, config, args.seed)
        out.write("coefficient,ks_statistic,p_value,mean,variance,variance_ratio\n")
        for r in results:
            out.write(f"beta{r.coordinate + 1},{r.ks_statistic!r},{r.p_value!r},{r.mean!r},"
                      f"{r.variance!r},{r.variance / 1.0!r}\n")
    return 0


def run(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"panelmd: error: {exc}", file=sys.stderr)
        return 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s", stream=sys.stderr)
    handlers = {
        "estimate": cmd_estimate,
        "simulate": cmd_simulate,
        "verify": lambda a: (cmd_verify_distance if a.check == "distance" else cmd_verify_normality)(a),
    }
    try:
        return handlers[args.command](args)
    except UsageError as exc:
        print(f"panelmd: error: {exc}", file=sys.stderr)
        return 1
    except (NumericalError, SimulationError, np.linalg.LinAlgError) as exc:
        print(f"panelmd: numerical failure: {exc}", file=sys.stderr)
        return 2
    except (PanelError, OSError) as exc:
        print(f"panelmd: error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
