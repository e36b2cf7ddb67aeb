"""Command-line interface: ``sparsefree {boundary,calibrate,test,power,varying-n}``.

Data go to ``--out`` (or stdout); progress and diagnostics go to stderr.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import logging
import math
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from . import streams
from .calibration import (
    ASYMPTOTIC_CROSSOVER,
    critical_value,
    exact_or_asymptotic_law,
    mc_calibrate_many,
    save_table,
)
from .distributions import GeneralizedGaussian, MixtureModel
from .signs import build_sign_sequence
from .simulation import ConfigError, ExperimentConfig, estimate_power, varying_n_study
from .statistics import DegenerateSampleError, HCVariant, Kind, compute_statistics
from .theory import boundary_grid

log = logging.getLogger("sparsefree")


class CliError(Exception):
    """Failure reported as a one-line message and exit status 1."""


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


@contextlib.contextmanager
def _output(path: str | None):
    if path is None or path == "-":
        yield sys.stdout
        return
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    with open(p, "w", newline="") as fh:
        yield fh


def _positive_float(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not (value > 0 and math.isfinite(value)):
        raise argparse.ArgumentTypeError(f"must be positive and finite, got {text!r}")
    return value


def _level(text: str) -> float:
    value = float(text)
    if not 0 < value < 1:
        raise argparse.ArgumentTypeError(f"level must lie in (0, 1), got {text!r}")
    return value


def _workers(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"workers must be at least 1, got {text!r}")
    return value


def _test_list(text: str) -> list[Kind]:
    try:
        return [Kind.parse(t) for t in text.split(",") if t.strip()]
    except ValueError:
        choices = ", ".join(k.value for k in Kind)
        raise argparse.ArgumentTypeError(f"unknown test in {text!r}; choose from {choices}") from None


def parse_range(text: str) -> np.ndarray:
    """``MIN:MAX:STEP`` to an inclusive grid, rounded to 12 decimals."""
    parts = text.split(":")
    if len(parts) != 3:
        raise ValueError(f"expected MIN:MAX:STEP, got {text!r}")
    lo, hi, step = (float(p) for p in parts)
    if not all(math.isfinite(v) for v in (lo, hi, step)) or step <= 0 or hi < lo:
        raise ValueError(f"need finite MIN <= MAX and STEP > 0, got {text!r}")
    count = math.floor((hi - lo) / step + 1e-9) + 1
    return np.round(lo + step * np.arange(count), 12)


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_boundary(args) -> int:
    try:
        betas = parse_range(args.beta)
    except ValueError as exc:
        raise CliError(f"--beta: {exc}") from None
    if betas[0] < 0 or betas[-1] > 1:
        raise CliError(f"--beta: values must lie in [0, 1], got {args.beta!r}")
    rows = boundary_grid(args.gamma, betas)
    with _output(args.out) as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["beta", "rho_star", "rho_tail", "rho_long"])
        for r in rows:
            writer.writerow([_fmt(r.beta), _fmt(r.rho_star), _fmt(r.rho_tail), _fmt(r.rho_long)])
    return 0


def _null(args) -> GeneralizedGaussian | None:
    if args.null_gamma is None:
        return None
    return GeneralizedGaussian(args.null_gamma, args.null_scale)


def _model(args, null: GeneralizedGaussian | None) -> MixtureModel | None:
    if args.epsilon is None or args.mu is None or null is None:
        return None
    effect = GeneralizedGaussian(
        args.effect_gamma if args.effect_gamma is not None else null.gamma,
        args.effect_scale if args.effect_scale is not None else null.scale,
    )
    return MixtureModel(null, effect, args.epsilon, args.mu)


def _require_model_args(tests: Sequence[Kind], null, model) -> None:
    needs_null = [k.value for k in tests if k in (Kind.HC, Kind.LRT)]
    if needs_null and null is None:
        raise CliError(f"{', '.join(needs_null)} requires --null-gamma (the known null shape)")
    if Kind.LRT in tests and model is None:
        raise CliError("lrt requires --epsilon and --mu describing the alternative")


def cmd_calibrate(args) -> int:
    tests = args.tests
    null = _null(args)
    model = _model(args, null)
    if Kind.T in tests and null is None:
        raise CliError("t calibration by simulation requires --null-gamma")
    _require_model_args(tests, null, model)
    laws = mc_calibrate_many(
        tests, args.n, args.reps, args.seed, null=null, model=model,
        hc_variant=args.hc_variant, workers=args.workers, cache_dir=args.cache_dir,
    )
    if args.table_dir:
        for kind, law in laws.items():
            path = Path(args.table_dir) / f"{kind.value}-n{args.n}-r{args.reps}-s{args.seed}.txt"
            save_table(law, path)
            print(f"wrote {path}", file=sys.stderr)
    with _output(args.out) as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["test", "n", "reps", "seed", "level", "critical_value", "median"])
        for kind, law in laws.items():
            writer.writerow([kind.value, args.n, args.reps, args.seed, _fmt(args.level),
                             _fmt(critical_value(law, args.level)), _fmt(law.quantile(0.5))])
    return 0


def read_data(path: str) -> np.ndarray:
    """One finite number per line; blank lines and ``#`` comments are skipped."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc.strerror or exc}") from None
    values = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        try:
            value = float(line)
        except ValueError:
            raise CliError(f"{path}:{lineno}: not a number: {line!r}") from None
        if not math.isfinite(value):
            raise CliError(f"{path}:{lineno}: value must be finite, got {line!r}")
        values.append(value)
    if not values:
        raise CliError(f"{path}: no data values")
    return np.asarray(values)


def cmd_test(args) -> int:
    x = read_data(args.data)
    n = x.size
    tests = args.tests
    null = _null(args)
    model = _model(args, null)
    _require_model_args(tests, null, model)
    rng = streams.substream(args.seed, streams.DATA_TIES, n)
    seq = build_sign_sequence(x, rng) if any(k.uses_signs for k in tests) else None
    laws = {}
    simulate = []
    for kind in tests:
        law = exact_or_asymptotic_law(kind, n, args.crossover)
        if law is None:
            simulate.append(kind)
        else:
            laws[kind] = law
    if simulate:
        print(f"calibrating {', '.join(k.value for k in simulate)} by simulation "
              f"({args.reps} reps)", file=sys.stderr)
        laws.update(mc_calibrate_many(
            simulate, n, args.reps, args.seed, null=null, model=model,
            hc_variant=args.hc_variant, workers=args.workers, cache_dir=args.cache_dir,
        ))
    with _output(args.out) as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["test", "statistic", "pvalue", "decision"])
        for kind in tests:
            try:
                value = compute_statistics(x, [kind], seq=seq, null=null, model=model,
                                           hc_variant=args.hc_variant)[kind]
            except DegenerateSampleError as exc:
                print(f"{kind.value}: {exc}", file=sys.stderr)
                writer.writerow([kind.value, "nan", "nan", "accept"])
                continue
            law = laws[kind]
            decision = "reject" if law.rejects(value, args.level) else "accept"
            writer.writerow([kind.value, _fmt(value), _fmt(law.pvalue(value)), decision])
    return 0


def _load_config(path: str) -> ExperimentConfig:
    try:
        return ExperimentConfig.from_file(path)
    except OSError as exc:
        raise CliError(f"cannot read config {path}: {exc.strerror or exc}") from None


def _progress(message: str) -> None:
    print(message, file=sys.stderr, flush=True)


def cmd_power(args) -> int:
    cfg = _load_config(args.config)
    if args.reps is not None:
        cfg = cfg.replace(reps=args.reps)
    table = estimate_power(cfg, workers=args.workers, cache_dir=args.cache_dir,
                           progress=None if args.quiet else _progress)
    _emit_table(table, args.out)
    return 0


def cmd_varying_n(args) -> int:
    cfg = _load_config(args.config)
    if args.reps is not None:
        cfg = cfg.replace(reps=args.reps)
    n_list = [int(v) for v in args.n_list.split(",")] if args.n_list else None
    table = varying_n_study(cfg, n_list, args.strength, workers=args.workers,
                            cache_dir=args.cache_dir,
                            progress=None if args.quiet else _progress)
    _emit_table(table, args.out)
    return 0


def _emit_table(table, out: str | None) -> None:
    if out is None or out == "-":
        sys.stdout.write(table.to_csv())
        return
    csv_path, meta_path = table.write(out)
    print(f"wrote {csv_path} and {meta_path}", file=sys.stderr)


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def _add_null_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--null-gamma", type=_positive_float, help="shape of the known null (hc, lrt, t)")
    p.add_argument("--null-scale", type=_positive_float, default=1.0)
    p.add_argument("--effect-gamma", type=_positive_float, help="shape of the effect law (lrt)")
    p.add_argument("--effect-scale", type=_positive_float, help="scale of the effect law (lrt)")
    p.add_argument("--epsilon", type=float, help="mixing fraction of the alternative (lrt)")
    p.add_argument("--mu", type=float, help="shift of the alternative (lrt)")
    p.add_argument("--hc-variant", choices=[v.value for v in HCVariant], default="plus")


def _add_run_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--workers", type=_workers, default=None,
                   help=f"worker processes (default ${streams.WORKERS_ENV} or 1)")
    p.add_argument("--cache-dir", help="directory for cached Monte Carlo null tables")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sparsefree",
        description="Distribution-free tests for sparse one-sided mixtures.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="log debug output to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("boundary", help="tabulate detection boundaries as CSV")
    p.add_argument("--gamma", type=_positive_float, required=True)
    p.add_argument("--beta", default="0.5:1.0:0.01", help="MIN:MAX:STEP (inclusive)")
    p.add_argument("--out", help="output CSV (default stdout)")
    p.set_defaults(func=cmd_boundary)

    p = sub.add_parser("calibrate", help="simulate Monte Carlo null tables")
    p.add_argument("--tests", type=_test_list, required=True, help="comma-separated statistics")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--reps", type=int, default=2000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--level", type=_level, default=0.05)
    p.add_argument("--table-dir", help="also write each table to this directory")
    p.add_argument("--out", help="summary CSV (default stdout)")
    _add_null_args(p)
    _add_run_args(p)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("test", help="apply tests to one data file")
    p.add_argument("data", help="one number per line; '#' starts a comment line")
    p.add_argument("--tests", type=_test_list,
                   default=[k for k in Kind if k.uses_signs or k is Kind.T],
                   help="comma-separated statistics (default: all distribution-free tests and t)")
    p.add_argument("--level", type=_level, default=0.05)
    p.add_argument("--reps", type=int, default=2000, help="Monte Carlo reps for simulated laws")
    p.add_argument("--seed", type=int, default=0, help="seed for tie-breaking and simulation")
    p.add_argument("--crossover", type=int, default=ASYMPTOTIC_CROSSOVER,
                   help="n from which the Smirnov test uses its limiting law")
    p.add_argument("--out", help="output CSV (default stdout)")
    _add_null_args(p)
    _add_run_args(p)
    p.set_defaults(func=cmd_test)

    p = sub.add_parser("power", help="power over a strength grid from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", help="output CSV; a .meta.json sidecar is written next to it")
    p.add_argument("--reps", type=int, help="override the config's reps")
    p.add_argument("--quiet", action="store_true", help="suppress progress lines")
    _add_run_args(p)
    p.set_defaults(func=cmd_power)

    p = sub.add_parser("varying-n", help="power at one strength over several sample sizes")
    p.add_argument("--config", required=True)
    p.add_argument("--n-list", help="comma-separated sample sizes (overrides the config)")
    p.add_argument("--strength", type=float, help="fixed r or s (overrides the config)")
    p.add_argument("--out", help="output CSV; a .meta.json sidecar is written next to it")
    p.add_argument("--reps", type=int, help="override the config's reps")
    p.add_argument("--quiet", action="store_true", help="suppress progress lines")
    _add_run_args(p)
    p.set_defaults(func=cmd_varying_n)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s", stream=sys.stderr)
    try:
        if hasattr(args, "workers") and args.workers is None:
            args.workers = streams.default_workers()
        return args.func(args)
    except ConfigError as exc:
        print(f"sparsefree {args.command}: {exc}", file=sys.stderr)
        return 2
    except (CliError, ValueError) as exc:
        print(f"sparsefree {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
