"""Command-line interface.

Exit status: 0 on success, 1 on a computational failure or malformed
input file (diagnostic on stderr), 2 on a usage error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .catalog import catalog, forward_sample, reference_params
from .core import DirichletPrior
from .dimension import regular_dimension
from .em import em_fit
from .io import (
    FormatError,
    dumps_dataset,
    load_dataset,
    load_model,
    load_prior,
    save_model,
)
from .scoring import CRITERIA, score_models
from .study import StudyConfig, render_report, run_study

log = logging.getLogger("cimlearn")

TRACE_FORMAT = "cimlearn-trace/1"
DIM_FORMAT = "cimlearn-dim/1"

EPILOG = """file formats:
  model     JSON, cimlearn-model/1 (causes, effect, combo, mechanisms, optional params)
  prior     JSON, cimlearn-prior/1 ({"alpha": 1.0, "gamma": [1.0, 0.01]} plus optional
            per-row "cause_alpha" / "mech_alpha")
  dataset   CSV, cimlearn-dataset/1: cause columns then the effect, integer states
  scores    CSV, cimlearn-scores/1: model_id,N,criterion,log_score,d,d_unadjusted,posterior
  dim       CSV, cimlearn-dim/1: model_id,d,d_unadjusted,n_points,min_rank,max_rank,sv_gap,seed
  trace     CSV, cimlearn-trace/1: iteration,objective
  study     JSON config with StudyConfig fields; writes study_scores.csv,
            study_posteriors.csv, study_posteriors.dat, report.txt, study_posteriors.png
Every output carries its format string in a leading "# format:" line or "format" key.
"""


def _add_fit_flags(p, mode_default="map"):
    p.add_argument("--mode", choices=("ml", "map"), default=mode_default)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--max-iter", type=int, default=500)
    p.add_argument("--restarts", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cimlearn",
        description="Causal interaction models: sampling, EM fitting, dimension and model scoring.",
        epilog=EPILOG,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="progress on stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="forward-sample a dataset from a parameterised model")
    p.add_argument("--model", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--emit-latent", action="store_true", help="append the mechanism values as extra columns")

    p = sub.add_parser("fit", help="EM estimate of the parameters of a model")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--prior", help="prior JSON file (default: unit Dirichlet)")
    _add_fit_flags(p)
    p.add_argument("--out", required=True, help="fitted model file; the trace goes to <out stem>.trace.csv")
    p.add_argument("--trace", help="trace CSV path override")

    p = sub.add_parser("score", help="fit and score every model file in a directory")
    p.add_argument("--models", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--criterion", choices=CRITERIA, default="cs")
    _add_fit_flags(p, mode_default="ml")
    p.add_argument("--points", type=int, default=10, help="random points for the dimension estimate")
    p.add_argument("--out", required=True)

    p = sub.add_parser("dim", help="regular dimension by Jacobian rank")
    p.add_argument("--model", required=True)
    p.add_argument("--points", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--fd-step", type=float, default=1e-5)
    p.add_argument("--rank-tol", type=float, default=1e-7)
    p.add_argument("--out", required=True)

    p = sub.add_parser("study", help="run the simulation study")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--jobs", type=int, default=None, help="worker processes (overrides the config)")
    p.add_argument("--no-figure", action="store_true")

    p = sub.add_parser("catalog", help="write the F1-F5 model files with reference parameters")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    return parser


def _trace_csv(trace) -> str:
    buf = io.StringIO()
    buf.write(f"# format: {TRACE_FORMAT}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["iteration", "objective"])
    for it, g in enumerate(trace):
        w.writerow([it, repr(float(g))])
    return buf.getvalue()


def _need_params(path, params):
    if params is None:
        raise FormatError(f"{path}: model file has no params")
    return params


def cmd_generate(args) -> None:
    structure, params = load_model(args.model)
    params = _need_params(args.model, params)
    if args.n < 0:
        raise ValueError("--n must be non-negative")
    if args.emit_latent:
        data, latent = forward_sample(structure, params, args.n, args.seed, emit_latent=True)
        text = dumps_dataset(data, latent, [m.name for m in structure.mechanisms])
    else:
        text = dumps_dataset(forward_sample(structure, params, args.n, args.seed))
    Path(args.out).write_text(text)


def cmd_fit(args) -> None:
    structure, init = load_model(args.model)
    data = load_dataset(args.data, structure)
    prior = load_prior(args.prior, structure) if args.prior else DirichletPrior.uniform(structure)
    clamps = init.clamps if init is not None else frozenset()
    fit = em_fit(
        structure, data, args.mode, prior, tol=args.tol, max_iter=args.max_iter,
        restarts=args.restarts, seed=args.seed, clamps=clamps,
    )
    log.info("best restart %d: g=%.6f after %d iterations (converged=%s)", fit.best_restart, fit.objective, fit.iterations, fit.converged)
    out = Path(args.out)
    save_model(out, structure, fit.params)
    trace = Path(args.trace) if args.trace else out.with_name(out.stem + ".trace.csv")
    trace.write_text(_trace_csv(fit.trace))


def cmd_score(args) -> None:
    files = sorted(Path(args.models).glob("*.json"))
    if not files:
        raise FormatError(f"{args.models}: no model files")
    candidates = []
    data = None
    for f in files:
        structure, params = load_model(f)
        if not structure.model_id:
            structure = type(structure)(structure.causes, structure.effect, structure.mechanisms, structure.combo, f.stem)
        candidates.append((structure, params.clamps if params is not None else frozenset()))
        loaded = load_dataset(args.data, structure)
        if data is None:
            data = loaded
        elif loaded.names != data.names:
            raise FormatError(f"{f}: variables differ from the other models")
    report = score_models(
        candidates, data, args.criterion, mode=args.mode, restarts=args.restarts, tol=args.tol,
        max_iter=args.max_iter, seed=args.seed, n_points=args.points,
    )
    Path(args.out).write_text(report.to_csv())


def cmd_dim(args) -> None:
    structure, params = load_model(args.model)
    clamps = params.clamps if params is not None else ()
    rep = regular_dimension(structure, args.points, args.seed, args.fd_step, args.rank_tol, clamps)
    row = rep.csv_row()
    if not row["model_id"]:
        row["model_id"] = Path(args.model).stem
    buf = io.StringIO()
    buf.write(f"# format: {DIM_FORMAT}\n")
    w = csv.DictWriter(buf, fieldnames=list(row), lineterminator="\n")
    w.writeheader()
    w.writerow(row)
    Path(args.out).write_text(buf.getvalue())


def cmd_study(args) -> None:
    path = Path(args.config)
    try:
        obj = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    if not isinstance(obj, dict):
        raise FormatError(f"{path}: expected a JSON object")
    try:
        config = StudyConfig.from_dict(obj)
    except (TypeError, ValueError) as exc:
        raise FormatError(f"{path}: {exc}") from None
    if args.jobs is not None:
        config = StudyConfig.from_dict({**obj, "jobs": args.jobs})
    result = run_study(config)
    render_report(result, args.out, figure=not args.no_figure)


def cmd_catalog(args) -> None:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for entry in catalog():
        save_model(out / f"{entry.model_id.lower()}.json", entry.structure, reference_params(entry, args.seed))


COMMANDS = {
    "generate": cmd_generate,
    "fit": cmd_fit,
    "score": cmd_score,
    "dim": cmd_dim,
    "study": cmd_study,
    "catalog": cmd_catalog,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        COMMANDS[args.command](args)
    except FormatError as exc:
        print(f"cimlearn {args.command}: {exc}", file=sys.stderr)
        return 1
    except (ValueError, ArithmeticError, RuntimeError, OSError) as exc:
        print(f"cimlearn {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
