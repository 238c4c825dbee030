"""Command-line interface: ``logcave {fit,verify,simulate-rates,simulate-limit,panels}``.

Exit codes: 0 success, 1 input error, 2 non-convergence, 3 certificate failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import tempfile
import warnings

import numpy as np

from .characterization import verify_constrained, verify_unconstrained
from .errors import DegenerateSample, DomainMismatch, ModeInfeasible, NonConvergence
from .geometry import PwlConcave, SortedSample
from .limit import limit_distribution_experiment
from .mle import Fit, SolverOptions, fit_constrained, fit_unconstrained, lr_from_fits
from .simulate import (
    PANEL_COLUMNS,
    figure_panels,
    get_density,
    rate_experiments,
    sample_density,
)

EXIT_OK, EXIT_INPUT, EXIT_NONCONV, EXIT_CERT = 0, 1, 2, 3
FIT_FORMAT = "logcave-fit/1"
NUM = "%.12e"


class InputError(Exception):
    pass


# ---------------------------------------------------------------------------
# I/O helpers
# ---------------------------------------------------------------------------
def fmt(x) -> str:
    x = float(x) + 0.0  # no negative zero
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return NUM % x


def _json_text(obj, indent=0) -> str:
    """JSON with every float written as ``%.12e`` (non-finite become null)."""
    pad = "  " * (indent + 1)
    end = "  " * indent
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {_json_text(v, indent + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        seq = list(obj)
        if not seq:
            return "[]"
        if all(not isinstance(v, (dict, list, tuple, np.ndarray)) for v in seq):
            return "[" + ", ".join(_json_text(v, indent + 1) for v in seq) + "]"
        return "[\n" + ",\n".join(pad + _json_text(v, indent + 1) for v in seq) + "\n" + end + "]"
    if obj is None:
        return "null"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return fmt(obj) if math.isfinite(obj) else "null"
    return json.dumps(obj)


def write_atomic(path, text: str) -> None:
    """Write ``text`` to ``path`` via a temporary file and rename; ``-``/None means stdout."""
    if path in (None, "-"):
        sys.stdout.write(text)
        return
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_sample_csv(path) -> SortedSample:
    """Single numeric column, optional header on the first line."""
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as e:
        raise InputError(f"{path}: {e.strerror}") from None
    values = []
    for lineno, row in enumerate(rows, start=1):
        cells = [c.strip() for c in row]
        if not cells or all(c == "" for c in cells):
            continue
        if len(cells) != 1:
            raise InputError(f"{path}:{lineno}: expected one column, found {len(cells)}")
        try:
            v = float(cells[0])
        except ValueError:
            if lineno == 1:
                continue  # header
            raise InputError(f"{path}:{lineno}: not a number: {cells[0]!r}") from None
        if not math.isfinite(v):
            raise InputError(f"{path}:{lineno}: non-finite value {cells[0]!r}")
        values.append(v)
    try:
        return SortedSample.from_observations(values)
    except DegenerateSample as e:
        raise InputError(f"{path}: {e}") from None


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


def resolve_seed(flag):
    if flag is not None:
        return flag
    env = os.environ.get("LOGCAVE_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise InputError(f"LOGCAVE_SEED must be an integer, got {env!r}") from None
    return 0


def _int_list(text):
    try:
        out = [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not out or any(v < 2 for v in out):
        raise argparse.ArgumentTypeError("sample sizes must be integers >= 2")
    return out


def _float_list(text):
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


# ---------------------------------------------------------------------------
# fit documents
# ---------------------------------------------------------------------------
def fit_document(fit: Fit) -> dict:
    f = fit.estimate
    return {
        "knots": f.knots,
        "values": f.values,
        "knot_set": fit.knot_set,
        "loglik": fit.loglik,
        "psi": fit.psi,
        "iterations": fit.iterations,
        "constrained": fit.constrained,
        "mode": fit.mode,
        "certificate": fit.report.as_dict() if fit.report else None,
    }


def _fit_from_document(doc):
    try:
        knots = np.array(doc["knots"], dtype=float)
        values = np.array(doc["values"], dtype=float)
        mode = doc.get("mode")
    except (KeyError, TypeError, ValueError) as e:
        raise InputError(f"fit document is missing or has malformed field: {e}") from None
    if knots.ndim != 1 or knots.shape != values.shape or knots.size < 2:
        raise InputError("fit document: knots and values must be equal-length lists")
    return knots, values, None if mode is None else float(mode)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------
def cmd_fit(args) -> int:
    sample = read_sample_csv(args.input)
    opts = SolverOptions(tol_certificate=args.tol)
    fu = fit_unconstrained(sample, opts)
    doc = {"format": FIT_FORMAT, "n": sample.n_raw}
    if args.mode is None:
        doc.update(fit_document(fu))
    else:
        fc = fit_constrained(sample, args.mode, opts)
        doc.update(fit_document(fc))
        doc["unconstrained"] = fit_document(fu)
        doc["lr"] = lr_from_fits(fu, fc, sample)
    write_atomic(args.out, _json_text(doc) + "\n")
    return EXIT_OK


def cmd_verify(args) -> int:
    sample = read_sample_csv(args.input)
    try:
        with open(args.fit) as fh:
            doc = json.load(fh)
    except OSError as e:
        raise InputError(f"{args.fit}: {e.strerror}") from None
    except json.JSONDecodeError as e:
        raise InputError(f"{args.fit}: invalid JSON ({e})") from None
    if not isinstance(doc, dict) or doc.get("format") != FIT_FORMAT:
        raise InputError(f"{args.fit}: not a {FIT_FORMAT} document")
    knots, values, mode = _fit_from_document(doc)
    if args.mode is not None:
        mode = args.mode
    try:
        f = PwlConcave(knots, values)
        if mode is None:
            rep = verify_unconstrained(f, sample, args.tol)
        else:
            rep = verify_constrained(f, sample, mode, args.tol)
    except (ValueError, DomainMismatch, ModeInfeasible) as e:
        print(f"certificate: FAIL ({e})")
        return EXIT_CERT
    for k, v in rep.as_dict().items():
        print(f"{k}: {fmt(v) if isinstance(v, float) else v}")
    print(f"certificate: {'PASS' if rep.passed else 'FAIL'}")
    return EXIT_OK if rep.passed else EXIT_CERT


def cmd_simulate_rates(args) -> int:
    d = get_density(args.density)
    seed = resolve_seed(args.seed)
    metrics = args.metric or ["hellinger", "supnorm", "knot-gap", "near-mode"]
    n_grid = args.n_grid
    if len(n_grid) < 2:
        warnings.warn("a slope needs at least two sample sizes; slope left empty", stacklevel=1)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        reports = rate_experiments(d, metrics, n_grid, args.reps, seed,
                                   constrained=not args.unconstrained, m=args.mode,
                                   opts=SolverOptions(tol_certificate=args.tol))
    rows = []
    for name, rep in reports.items():
        for n, med in zip(rep.n_grid, rep.median_errors):
            rows.append([
                name, n, len(rep.errors[n]), float(med),
                "" if rep.slope is None else float(rep.slope),
                "" if rep.slope_ci_halfwidth is None else float(rep.slope_ci_halfwidth),
            ])
    write_atomic(args.out, csv_text(["metric", "n", "rep_count", "median_error", "slope", "slope_ci"], rows))
    return EXIT_OK


def cmd_simulate_limit(args) -> int:
    seed = resolve_seed(args.seed)
    res = limit_distribution_experiment(args.reps, args.half_width, args.delta, seed)
    rows = res.quantile_table(args.quantiles)
    write_atomic(args.out, csv_text(["quantity", "quantile", "value"], rows))
    return EXIT_OK


def cmd_panels(args) -> int:
    if args.input:
        sample = read_sample_csv(args.input)
        truth = get_density(args.density) if args.density else None
    else:
        truth = get_density(args.density or "std_normal")
        sample = sample_density(truth, args.n, resolve_seed(args.seed))
    mode = args.mode if args.mode is not None else (truth.mode if truth else None)
    if mode is None:
        raise InputError("panels needs --mode when no density is given")
    panel = figure_panels(sample, mode, truth, SolverOptions(tol_certificate=args.tol))
    cols = [panel.columns[k] for k in PANEL_COLUMNS]
    rows = []
    for i in range(cols[0].size):
        rows.append([int(c[i]) if k == "knot_flags" else float(c[i]) for k, c in zip(PANEL_COLUMNS, cols)])
    write_atomic(args.out, csv_text(list(PANEL_COLUMNS), rows))
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------
def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="logcave", description="Log-concave density MLE with mode constraints.")
    sub = p.add_subparsers(dest="command", required=True)

    f = sub.add_parser("fit", help="fit a sample (CSV, one column)")
    f.add_argument("input")
    f.add_argument("--mode", type=float, help="fix the mode and also report the LR statistic")
    f.add_argument("--tol", type=float, default=1e-8, help="certificate tolerance")
    f.add_argument("--out", help="output JSON path (default stdout)")
    f.set_defaults(func=cmd_fit)

    v = sub.add_parser("verify", help="check a fit JSON against its sample")
    v.add_argument("fit")
    v.add_argument("input")
    v.add_argument("--mode", type=float, help="override the mode stored in the fit")
    v.add_argument("--tol", type=float, default=1e-8)
    v.set_defaults(func=cmd_verify)

    r = sub.add_parser("simulate-rates", help="Monte Carlo convergence-rate experiment")
    r.add_argument("--density", default="std_normal", choices=["std_normal", "gumbel", "gamma2"])
    r.add_argument("--metric", action="append",
                   choices=["hellinger", "supnorm", "knot-gap", "near-mode"],
                   help="repeatable; default all four")
    r.add_argument("--n-grid", type=_int_list, default=[100, 300, 1000, 3000])
    r.add_argument("--reps", type=int, default=100)
    r.add_argument("--seed", type=int)
    r.add_argument("--mode", type=float, help="mode for constrained fits (default: true mode)")
    r.add_argument("--unconstrained", action="store_true",
                   help="use the unconstrained fit for hellinger/supnorm")
    r.add_argument("--tol", type=float, default=1e-8)
    r.add_argument("--out")
    r.set_defaults(func=cmd_simulate_rates)

    lim = sub.add_parser("simulate-limit", help="simulate the limit fits at 0")
    lim.add_argument("--reps", type=int, default=500)
    lim.add_argument("--seed", type=int)
    lim.add_argument("--half-width", type=float, default=5.0)
    lim.add_argument("--delta", type=float, default=0.005)
    lim.add_argument("--quantiles", type=_float_list,
                     help="comma-separated probabilities; default writes every replication")
    lim.add_argument("--out")
    lim.set_defaults(func=cmd_simulate_limit)

    pn = sub.add_parser("panels", help="plot data for one sample")
    pn.add_argument("input", nargs="?", help="sample CSV; omit to simulate from --density")
    pn.add_argument("--density", choices=["std_normal", "gumbel", "gamma2"])
    pn.add_argument("--n", type=int, default=20)
    pn.add_argument("--seed", type=int)
    pn.add_argument("--mode", type=float)
    pn.add_argument("--tol", type=float, default=1e-8)
    pn.add_argument("--out")
    pn.set_defaults(func=cmd_panels)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_INPUT if e.code else EXIT_OK
    try:
        if getattr(args, "reps", 1) is not None and getattr(args, "reps", 1) < 1:
            raise InputError("--reps must be positive")
        if getattr(args, "tol", 1.0) <= 0:
            raise InputError("--tol must be positive")
        return args.func(args)
    except InputError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except NonConvergence as e:
        print(f"non-convergence: {e}", file=sys.stderr)
        return EXIT_NONCONV
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
