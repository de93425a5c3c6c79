"""Command-line entry point.

Subcommands: ``run``, ``certify``, ``sweep``, ``reproduce-fig3`` and
``reproduce-fig4``. Outputs go to ``--out``, else to ``$CDNES_OUT``, else to
the current directory.

Exit codes: 0 success, 2 config error, 3 divergence, 4 certificate infeasible.
"""

from __future__ import annotations

import argparse
import csv
import io
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

from . import config as cfg
from .certify import CertificateError, certify
from .compressors import CompressorSpec, bit_cost, constants
from .engine import TRACE_HEADER, AlgoConfig, DivergenceError, EngineError, Trace, run, run_baseline
from .games import connectivity_game
from .graph import max_degree_weights, random_connected_graph

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED, EXIT_INFEASIBLE = 0, 2, 3, 4
OUT_ENV = "CDNES_OUT"

# fixed experiment: 50 sensors, eta = 0.01, gamma = alpha = 1
FIG_N = 50
FIG_ETA = 0.01
FIG_K = 10000
FIG_EDGE_PROB = 0.2
FIG_TARGET = 1e-3
FIG4_HEADER = ("cum_bits", "k", "residual", "consensus_err", "compress_err", "mapping_norm")
SUMMARY_HEADER = ("curve", "bits_per_iter", "status", "iterations", "iterations_to_target", "bits_to_target", "final_residual")
SWEEP_HEADER = ("param", "value", "status", "final_residual", "iterations_to_tol", "total_bits", "detail")
SWEEP_PARAMS = ("eta", "gamma", "alpha", "bits", "k")


def out_dir(arg: str | None) -> Path:
    path = Path(arg or os.environ.get(OUT_ENV) or ".")
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write(path: Path, text: str) -> None:
    path.write_text(text)


def _fail(msg: str, code: int) -> int:
    print(f"error: {msg}", file=sys.stderr)
    return code


# ---------------------------------------------------------------- run

def cmd_run(args) -> int:
    try:
        exp = cfg.load(args.config)
        algo = exp.algo if args.seed is None else replace(exp.algo, seed=args.seed)
        _, r, _ = constants(exp.compressor)
        algo.validate(r)
    except (cfg.ConfigError, EngineError) as err:
        return _fail(str(err), EXIT_CONFIG)
    dest = out_dir(args.out) / exp.trace_name
    try:
        trace = run(exp.game, exp.mix, exp.compressor, algo)
    except DivergenceError as err:
        err.trace.write_csv(dest)
        return _fail(f"{err}; partial trace in {dest}", EXIT_DIVERGED)
    trace.write_csv(dest)
    print(f"{trace.status} after {trace.k[-1]} iterations, residual {trace.residual[-1]:.6g}; trace in {dest}")
    return EXIT_OK


# ------------------------------------------------------------ certify

def cmd_certify(args) -> int:
    try:
        exp = cfg.load(args.config)
    except cfg.ConfigError as err:
        return _fail(str(err), EXIT_CONFIG)
    C, r, delta = constants(exp.compressor)
    alpha = exp.certify_alpha if exp.certify_alpha is not None else 1.0 / r
    dest = out_dir(args.out) / exp.report_name
    try:
        cert = certify(
            exp.mix.n, exp.game.mu, exp.game.L, exp.mix.s,
            exp.mix.norm_i_minus_w(exp.certify_norm), C, r, delta,
            alpha=alpha, tau3=exp.certify_tau3, strict=False,
        )
    except CertificateError as err:
        _write(dest, f"result = INFEASIBLE\nreason = {err}\n")
        return _fail(f"infeasible: {err}", EXIT_INFEASIBLE)
    _write(dest, cert.report())
    if not cert.passed:
        return _fail(f"componentwise test failed in rows {cert.failing_rows}; report in {dest}", EXIT_INFEASIBLE)
    print(f"certified gamma={cert.gamma:.6g} eta={cert.eta:.6g} rho_bound={cert.rho_bound!r}; report in {dest}")
    return EXIT_OK


# -------------------------------------------------------------- sweep

@dataclass(frozen=True)
class SweepJob:
    exp_raw: dict
    base: str
    param: str
    value: str
    seed: int | None
    tol: float


def _sweep_one(job: SweepJob) -> tuple:
    raw = {s: dict(v) for s, v in job.exp_raw.items()}
    section = "algo" if job.param in ("eta", "gamma", "alpha") else "compressor"
    raw[section][job.param] = job.value
    row = [job.param, job.value]
    try:
        exp = cfg.build(raw, Path(job.base))
    except cfg.ConfigError as err:
        return tuple(row + ["error", "", "", "", str(err)])
    algo = exp.algo if job.seed is None else replace(exp.algo, seed=job.seed)
    _, r, _ = constants(exp.compressor)
    try:
        algo.validate(r)
    except EngineError as err:
        return tuple(row + ["rejected", "", "", "", str(err)])
    detail = ""
    try:
        trace = run(exp.game, exp.mix, exp.compressor, algo)
    except DivergenceError as err:
        trace, detail = err.trace, str(err)
    hit = trace.first_below(job.tol)
    to_tol = "" if hit is None else str(trace.k[hit])
    return tuple(row + [trace.status, repr(trace.residual[-1]), to_tol, str(trace.cum_bits[-1]), detail])


def cmd_sweep(args) -> int:
    if args.param not in SWEEP_PARAMS:
        return _fail(f"--param must be one of {SWEEP_PARAMS}", EXIT_CONFIG)
    values = [v.strip() for v in args.values.split(",") if v.strip()]
    if not values:
        return _fail("--values is empty", EXIT_CONFIG)
    try:
        raw, base = cfg.read_raw(args.config)
        exp = cfg.build(raw, base)
    except cfg.ConfigError as err:
        return _fail(str(err), EXIT_CONFIG)
    tol = args.tol if args.tol is not None else (exp.algo.stop_tol if exp.algo.stop_tol is not None else 1e-3)
    jobs = [SweepJob(raw, str(base), args.param, v, args.seed, tol) for v in values]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            rows = list(pool.map(_sweep_one, jobs))
    else:
        rows = [_sweep_one(j) for j in jobs]
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SWEEP_HEADER)
    writer.writerows(rows)
    dest = out_dir(args.out) / f"sweep_{args.param}.csv"
    _write(dest, buf.getvalue())
    print(f"{len(rows)} runs; summary in {dest}")
    return EXIT_OK


# ---------------------------------------------------------- reproduce

FIG_COMPRESSORS = (
    ("quantize_b2_qinf", dict(kind="quantize", bits=2, q="inf")),
    ("top1", dict(kind="topk", k=1)),
    ("normsign_qinf", dict(kind="normsign", q="inf")),
)


def figure_setup(seed: int):
    game = connectivity_game(FIG_N)
    mix = max_degree_weights(random_connected_graph(FIG_N, FIG_EDGE_PROB, seed))
    algo = AlgoConfig(eta=FIG_ETA, gamma=1.0, alpha=1.0, K=FIG_K, seed=seed, enforce_alpha_bound=False)
    return game, mix, algo


def figure_runs(seed: int, check_invariants: bool = False) -> list[tuple[str, int, Trace, str]]:
    """The four curves as ``(label, bits_per_iter, trace, error)``.

    All curves share ``X0`` and the graph. A diverging curve keeps its
    partial trace and its error message; the others still run.
    """
    game, mix, algo = figure_setup(seed)
    out = []
    runners = [("baseline", FIG_N * 32 * game.D, lambda: run_baseline(game, mix, algo, check_invariants=check_invariants))]
    for label, kw in FIG_COMPRESSORS:
        spec = CompressorSpec(d=game.D, **kw)
        runners.append((label, FIG_N * bit_cost(spec), lambda spec=spec: run(game, mix, spec, algo, check_invariants=check_invariants)))
    for label, bits, fn in runners:
        try:
            out.append((label, bits, fn(), ""))
        except DivergenceError as err:
            out.append((label, bits, err.trace, str(err)))
    return out


def _summary(curves) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SUMMARY_HEADER)
    for label, bits, trace, _ in curves:
        hit = trace.first_below(FIG_TARGET)
        writer.writerow([
            label, bits, trace.status, trace.k[-1],
            "" if hit is None else trace.k[hit],
            "" if hit is None else trace.cum_bits[hit],
            repr(trace.residual[-1]),
        ])
    return buf.getvalue()


def _reproduce(args, prefix: str, columns) -> int:
    dest = out_dir(args.out)
    seed = 0 if args.seed is None else args.seed
    curves = figure_runs(seed)
    diverged = False
    for label, _, trace, err in curves:
        path = dest / f"{prefix}_{label}.csv"
        trace.write_csv(path, columns)
        if err:
            diverged = True
            print(f"{label}: {err}; partial trace in {path}", file=sys.stderr)
        else:
            print(f"{label}: residual {trace.residual[0]:.6g} -> {trace.residual[-1]:.6g}; {path}")
    if prefix == "fig4":
        _write(dest / "fig4_summary.csv", _summary(curves))
    return EXIT_DIVERGED if diverged else EXIT_OK


def cmd_fig3(args) -> int:
    return _reproduce(args, "fig3", TRACE_HEADER)


def cmd_fig4(args) -> int:
    return _reproduce(args, "fig4", FIG4_HEADER)


# ---------------------------------------------------------------- main

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cdnes", description="Compressed distributed Nash-equilibrium seeking.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_config=True):
        if needs_config:
            p.add_argument("--config", required=True, help="INI experiment config")
        p.add_argument("--seed", type=int, default=None, help="override the run seed")
        p.add_argument("--out", default=None, help=f"output directory (default ${OUT_ENV} or .)")

    p = sub.add_parser("run", help="run one experiment and write its trace")
    common(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("certify", help="certify step sizes and write the report")
    common(p)
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("sweep", help="run the experiment once per parameter value")
    common(p)
    p.add_argument("--param", required=True, choices=SWEEP_PARAMS)
    p.add_argument("--values", required=True, help="comma-separated values")
    p.add_argument("--tol", type=float, default=None, help="residual tolerance (default algo.stop_tol or 1e-3)")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("reproduce-fig3", help="residual against iterations for the four schemes")
    common(p, needs_config=False)
    p.set_defaults(func=cmd_fig3)

    p = sub.add_parser("reproduce-fig4", help="residual against transmitted bits for the four schemes")
    common(p, needs_config=False)
    p.set_defaults(func=cmd_fig4)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
