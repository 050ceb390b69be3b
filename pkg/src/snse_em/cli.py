"""Command-line driver ``snse-em``.

Exit codes: 0 success, 1 numerical or study failure (including a probe or
Gronwall check that does not pass), 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
import time
from pathlib import Path

import numpy as np

from .experiments import (exp_moment_probe, gronwall_check, gronwall_constant, gronwall_suite, holder_probe,
                          martingale_probe, run_study, stability_probe)
from .experiments.config import HOLDER_RESOLUTION, StudyConfig
from .experiments.gronwall import GronwallInstance
from .experiments.sampling import MARTINGALE, REFERENCE, STABILITY, holder_available
from .experiments.studies import StudyFailure, run_with_retries
from .io import csv_text, manifest_text, parse_config, write_text
from .solver import PicardNonconvergence, run_trajectory
from .spectral import ConfigurationError, half_operators, rsquare, to_half
from .wiener import sample_path

EXIT_OK, EXIT_FAILURE, EXIT_USAGE = 0, 1, 2
PROBES = ("stability", "expmoment", "holder", "martingale")

log = logging.getLogger("snse_em")


def _u64(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError(f"seed must be an unsigned 64-bit integer, got {text}")
    return v


def _positive(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"threads must be >= 1, got {text}")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, type=Path, help="flat key=value configuration file")
    common.add_argument("--out", type=Path, default=Path("out"), help="output directory (default: ./out)")
    common.add_argument("--threads", type=_positive, default=1, help="worker processes for Monte Carlo samples")
    common.add_argument("--seed", type=_u64, default=None, help="override master_seed")

    parser = argparse.ArgumentParser(prog="snse-em", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, metavar="subcommand")
    sub.add_parser("simulate", parents=[common], help="one trajectory; writes series.csv")
    sub.add_parser("converge", parents=[common], help="strong-error study; writes table.csv")
    sub.add_parser("pressure", parents=[common], help="pressure-error study; writes table.csv")
    probe = sub.add_parser("probe", parents=[common], help="Monte Carlo probe; writes table.csv")
    probe.add_argument("name", choices=PROBES)
    sub.add_parser("gronwall", parents=[common], help="stochastic Gronwall check on generated instances")
    sub.add_parser("emit-plot-data", parents=[common], help="log-log (k, error) pairs of both studies")
    return parser


# ---------------------------------------------------------------------------
# subcommands; each returns (exit code, {file name: text}, manifest extras)


def _simulate(cfg: StudyConfig, threads: int):
    steps = cfg.simulate_steps or max(cfg.coarse_steps)
    seed = cfg.sample_seed(0)
    path = sample_path(seed, cfg.horizon, steps)
    u0 = cfg.initial_velocity(0)
    rec = run_trajectory(u0, path, cfg.params(steps), cfg.model)
    hops = half_operators(cfg.grid)
    u = to_half(u0.coeffs)
    w = path.values()
    rows = [(0, 0.0, *(math.sqrt(rsquare(u, hops, p)) for p in (0, 1, 2)), 0.0, 0.0, 0, 0.0)]
    for n in range(steps):
        rows.append((n + 1, float(rec.times[n]), float(rec.l2[n]), float(rec.h1[n]), float(rec.h2[n]),
                     float(rec.increment_l2[n]), float(rec.increment_h1[n]), int(rec.picard_iters[n]),
                     float(w[n + 1])))
    header = ("n", "t", "l2", "h1", "h2", "increment_l2", "increment_h1", "picard_iters", "W")
    print(f"simulated {steps} steps; final ||u||_L2 = {rec.l2[-1]:.6g}")
    return EXIT_OK, {"series.csv": csv_text(header, rows)}, {"steps": steps, "path_seed": seed}, [(0, seed)]


def _seeds(records):
    return [(r.index, r.seed) for r in records]


def _study_extras(res):
    fits = res.velocity.fits
    return {"retries": res.retries, "coarse_steps_used": res.config.coarse_steps, "synthetic": str(res.synthetic).lower(),
            "slope.err_L2_rms": fits["err_L2_rms"].slope, "slope.err_pressure": res.pressure.fit("err_pressure").slope}


def _converge(cfg, threads):
    res = run_study(cfg, threads)
    print(res.velocity.to_csv(), end="")
    return EXIT_OK, {"table.csv": res.velocity.to_csv()}, _study_extras(res), _seeds(res.records)


def _pressure(cfg, threads):
    res = run_study(cfg, threads)
    print(res.pressure.to_csv(), end="")
    return EXIT_OK, {"table.csv": res.pressure.to_csv()}, _study_extras(res), _seeds(res.records)


def _emit_plot_data(cfg, threads):
    res = run_study(cfg, threads)
    rows = []
    for table in (res.velocity, res.pressure):
        names = list(table.csv_columns or table.columns)
        for name in names:
            for k, e in zip(table.ks, table.columns[name]):
                rows.append((name, float(k), float(e), math.log10(k), math.log10(e) if e > 0 else math.nan))
    text = csv_text(("statistic", "k", "error", "log10_k", "log10_error"), rows)
    return EXIT_OK, {"table.csv": text}, _study_extras(res), _seeds(res.records)


def _probe(name, cfg, threads):
    parts = {"stability": STABILITY, "expmoment": REFERENCE, "holder": REFERENCE, "martingale": MARTINGALE}[name]
    if name == "holder" and not holder_available(cfg):
        raise ConfigurationError(f"reference_multiple: M_max*R = {cfg.reference_steps} must be a multiple of "
                                 f"{HOLDER_RESOLUTION} for the holder probe")
    used, records, retries = run_with_retries(cfg, frozenset({parts}), threads)
    n = len(records)
    if name == "stability":
        rep = stability_probe(used, records=records)
        var = list(rep.variation) + [math.nan]
        growth = list(rep.increment_growth) + [math.nan]
        rows = [(k, n, a, sa, b, sb, v, g) for k, a, sa, b, sb, v, g in
                zip(rep.ks, rep.max_energy, rep.max_energy_se, rep.increments, rep.increments_se, var, growth)]
        header = ("k", "n_samples", "max_energy", "max_energy_se", "increments", "increments_se",
                  "variation_to_next", "increment_growth_to_next")
        passed, summary = rep.bounded, f"bounded={rep.bounded} max variation={np.max(rep.variation, initial=0):.4g}"
    elif name == "expmoment":
        rep = exp_moment_probe(used, records=records)
        rows = [(t, n, rep.sigma, e, h, v) for t, e, h, v in
                zip(rep.times, rep.estimate, rep.estimate_half, rep.variation)]
        header = ("t", "n_samples", "sigma", "estimate", "estimate_half", "variation")
        passed, summary = rep.stable, f"sigma={rep.sigma:.6g} (sigma_0={rep.sigma0:.6g}) stable={rep.stable}"
    elif name == "holder":
        rep = holder_probe(used, records=records)
        rows = [(h, n, v) for h, v in zip(rep.lags, rep.increments)]
        rows += [("slope", "", rep.fit.slope), ("ci", "", rep.fit.ci)]
        header = ("lag", "n_samples", "increment_V")
        passed, summary = rep.passed, f"slope={rep.slope:.4f} pass={rep.passed}"
    else:
        rep = martingale_probe(used, records=records)
        rows = [(l, t, n, m, s, z) for l, t, m, s, z in
                zip(rep.steps, rep.times, rep.mean, rep.std_error, rep.normalized)]
        header = ("l", "t", "n_samples", "mean", "std_error", "normalized")
        passed, summary = rep.passed, f"max normalized mean={np.max(rep.normalized):.4f} pass={rep.passed}"
    print(f"probe {name}: {summary}")
    extras = {"retries": retries, "probe": name, "passed": str(passed).lower(), "summary": summary}
    return (EXIT_OK if passed else EXIT_FAILURE), {"table.csv": csv_text(header, rows)}, extras, _seeds(records)


def _gronwall(cfg, threads):
    suite = gronwall_suite(cfg.master_seed, cfg.gronwall_instances, cfg.gronwall_samples, cfg.gronwall_steps,
                           cfg.gronwall_q, cfg.gronwall_alpha)
    q, a = cfg.gronwall_q, cfg.gronwall_alpha
    zero = gronwall_check(GronwallInstance.constant(2, cfg.gronwall_steps), q, a)
    ones = gronwall_check(GronwallInstance.constant(2, cfg.gronwall_steps, F=1.0, X=1.0), q, a)
    analytic_ok = (zero.lhs == 0.0 and zero.holds and ones.lhs == 1.0
                   and ones.rhs == gronwall_constant(q, a) and ones.holds)
    rows = [(i, r.lhs, r.rhs, r.lhs_se, r.holds) for i, r in enumerate(suite.results)]
    rows += [("zero", zero.lhs, zero.rhs, zero.lhs_se, zero.holds), ("ones", ones.lhs, ones.rhs, ones.lhs_se, ones.holds)]
    print(suite.summary())
    passed = suite.passed and analytic_ok
    extras = {"summary": suite.summary(), "analytic_examples_exact": str(analytic_ok).lower()}
    return (EXIT_OK if passed else EXIT_FAILURE), {"table.csv": csv_text(("instance", "lhs", "rhs", "lhs_se", "holds"), rows)}, extras, []


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    try:
        cfg = parse_config(args.config, args.seed)
    except ConfigurationError as exc:
        print(f"snse-em: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    t0 = time.perf_counter()
    try:
        if args.command == "simulate":
            code, files, extras, seeds = _simulate(cfg, args.threads)
        elif args.command == "converge":
            code, files, extras, seeds = _converge(cfg, args.threads)
        elif args.command == "pressure":
            code, files, extras, seeds = _pressure(cfg, args.threads)
        elif args.command == "emit-plot-data":
            code, files, extras, seeds = _emit_plot_data(cfg, args.threads)
        elif args.command == "probe":
            code, files, extras, seeds = _probe(args.name, cfg, args.threads)
        else:
            code, files, extras, seeds = _gronwall(cfg, args.threads)
    except ConfigurationError as exc:
        print(f"snse-em: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (StudyFailure, PicardNonconvergence, RuntimeError, FloatingPointError) as exc:
        print(f"snse-em: study failed: {exc}", file=sys.stderr)
        return EXIT_FAILURE

    command = args.command + (f" {args.name}" if args.command == "probe" else "")
    stages = {args.command.replace("-", "_"): time.perf_counter() - t0}
    for name, text in files.items():
        write_text(args.out / name, text)
    write_text(args.out / "manifest.txt", manifest_text(command, cfg, args.threads, stages, seeds, extras))
    return code


if __name__ == "__main__":
    sys.exit(main())
