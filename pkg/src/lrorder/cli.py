"""Command-line interface: ``analyze``, ``simulate`` and ``weights``.

Exit codes: 0 success, 1 malformed input, 2 degenerate data, 3 solver
failure.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import __version__, _backend
from .chibar import (
    h_matrix,
    weights_closed_form,
    weights_monte_carlo,
)
from .errors import (
    ConvergenceError,
    DegenerateTableError,
    DomainError,
    InvalidDimensionError,
    NumericalRankError,
    TableFormatError,
)
from .estimation import SolverOptions
from .simulation import SCENARIOS, Scenario, parse_lambda_grid, run_study
from .table_model import ContingencyTable, parse_csv, parse_json, read_table
from .tests import (
    DEFAULT_LAMBDAS,
    WeightOptions,
    analyze,
    plug_in_h,
    two_by_two_suite,
    wilcoxon_midrank,
)

EXIT_OK, EXIT_INPUT, EXIT_DEGENERATE, EXIT_SOLVER = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def _float_list(text):
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad number list: {text!r}")


def _count(text):
    value = float(text)
    if value != int(value) or value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer: {text}")
    return int(value)


def _matrix(text):
    try:
        rows = [[float(x) for x in r.split(",")] for r in text.split(";")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad matrix: {text!r}")
    return tuple(tuple(r) for r in rows)


def _add_solver_flags(p):
    d = SolverOptions()
    p.add_argument("--kkt-tol", type=float, default=d.kkt_tol)
    p.add_argument("--feas-tol", type=float, default=d.feas_tol)
    p.add_argument("--max-iter", type=int, default=d.max_iter)
    p.add_argument("--zero-cell-eps", type=float, default=d.zero_cell_eps)


def _add_table_source(p):
    p.add_argument("input", nargs="?",
                   help="CSV or JSON table file ('-' for stdin)")
    p.add_argument("--table", help="inline table, rows separated by ';'")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="lrorder", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version",
                        version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True,
                                parser_class=_Parser)

    a = sub.add_parser("analyze", help="test one table")
    _add_table_source(a)
    a.add_argument("--lambda", dest="lambdas", type=_float_list,
                   default=list(DEFAULT_LAMBDAS))
    a.add_argument("--family", choices=("t", "s", "both"), default="both")
    a.add_argument("--wilcoxon", choices=("one", "two", "both", "none"),
                   default="one")
    a.add_argument("--weights", choices=("closed", "mc"), default="closed")
    a.add_argument("--mc-reps", type=_count, default=1_000_000)
    a.add_argument("--seed", type=int, default=0)
    a.add_argument("--format", choices=("json", "table"), default="table")
    _add_solver_flags(a)

    s = sub.add_parser("simulate", help="Monte Carlo size and power")
    s.add_argument("--scenario", default="D",
                   choices=sorted(SCENARIOS) + ["custom"])
    s.add_argument("--n1", type=_count)
    s.add_argument("--n2", type=_count)
    s.add_argument("--j", type=int, default=None)
    s.add_argument("--delta", type=float, default=0.0)
    s.add_argument("--probs", type=_matrix,
                   help="alternative cell probabilities 'a,b;c,d'")
    s.add_argument("--null-probs", type=_matrix,
                   help="null cell probabilities (default: uniform rows)")
    s.add_argument("--reps", type=_count, default=25_000)
    s.add_argument("--alpha", type=float, default=0.05)
    s.add_argument("--lambda-grid", default=None,
                   help="start:end:step or comma list")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", default="-")
    _add_solver_flags(s)

    w = sub.add_parser("weights", help="chi-bar-squared weights")
    _add_table_source(w)
    w.add_argument("--pi", type=_float_list)
    w.add_argument("--nu1", type=float)
    w.add_argument("--method", choices=("closed", "mc"), default="closed")
    w.add_argument("--mc-reps", type=_count, default=1_000_000)
    w.add_argument("--seed", type=int, default=0)
    _add_solver_flags(w)
    return parser


def _solver_opts(args):
    return SolverOptions(kkt_tol=args.kkt_tol, feas_tol=args.feas_tol,
                         max_iter=args.max_iter,
                         zero_cell_eps=args.zero_cell_eps)


def _load_table(args) -> ContingencyTable:
    if args.table is not None:
        return parse_csv(args.table.replace(";", "\n"))
    if args.input is None:
        raise TableFormatError("no input table given")
    if args.input == "-":
        text = sys.stdin.read()
        return parse_json(text) if text.lstrip().startswith("{") \
            else parse_csv(text)
    try:
        return read_table(args.input)
    except OSError as exc:
        raise TableFormatError(f"cannot read {args.input}: {exc.strerror}")


def _config(args) -> dict:
    cfg = {k: v for k, v in vars(args).items()}
    cfg["version"] = __version__
    cfg["backend"] = _backend.NAME
    return cfg


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def _dump(obj, fh):
    fh.write(json.dumps(_jsonable(obj), sort_keys=False) + "\n")


def _fmt(x, digits=4):
    return "NA" if x is None else f"{x:.{digits}f}"


def _render_table(table, reports, wil, suite, weights) -> str:
    lines = [f"counts: {table.counts.tolist()}  (n1={table.n1}, "
             f"n2={table.n2})",
             "weights: " + ", ".join(_fmt(x) for x in weights.w), ""]
    by = {}
    for r in reports:
        by.setdefault(r.lam, {})[r.family] = r
    fams = [f for f in ("T", "S") if any(f in v for v in by.values())]
    header = f"{'lambda':>9}"
    for f in fams:
        header += f"  {f + '_lambda':>10}  {'p-value':>8}"
    lines.append(header)
    for lam, row in by.items():
        line = f"{lam:>9.4g}"
        for f in fams:
            r = row.get(f)
            line += f"  {_fmt(r.statistic):>10}  {_fmt(r.pvalue):>8}"
        lines.append(line)
    for r in wil:
        lines.append(f"Wilcoxon ({r.diagnostics['sided']}-sided): "
                     f"W = {r.statistic:g}, p = {r.pvalue:.5f}")
    for r in suite:
        lines.append(f"{r.family}: {r.statistic:.4f}, p = {r.pvalue:.5f}")
    return "\n".join(lines) + "\n"


def cmd_analyze(args, out) -> int:
    table = _load_table(args)
    opts = _solver_opts(args)
    fams = {"t": ["T"], "s": ["S"], "both": ["T", "S"]}[args.family]
    wopts = WeightOptions(method=args.weights, mc_reps=args.mc_reps,
                          seed=args.seed)
    reports = analyze(table, args.lambdas, fams, wopts, opts)
    sides = {"one": ["one"], "two": ["two"], "both": ["one", "two"],
             "none": []}[args.wilcoxon]
    wil = [wilcoxon_midrank(table, side) for side in sides]
    suite = list(two_by_two_suite(table)) if table.J == 2 else []
    failed = any(r.pvalue is None for r in reports)
    weights = reports[0].weights
    if args.format == "json":
        _dump({"config": _config(args), "table": table.counts,
               "h": plug_in_h(table, opts).h, "weights": weights.to_dict(),
               "reports": [r.to_dict() for r in reports],
               "wilcoxon": [r.to_dict() for r in wil],
               "two_by_two": [r.to_dict() for r in suite]}, out)
    else:
        out.write("# config: " + json.dumps(_jsonable(_config(args))) + "\n")
        out.write(_render_table(table, reports, wil, suite, weights))
    if failed:
        sys.stderr.write("error: restricted fit did not converge\n")
        return EXIT_SOLVER
    return EXIT_OK


def _scenario_from_args(args) -> Scenario:
    if args.scenario == "custom":
        if args.n1 is None or args.n2 is None:
            raise TableFormatError("custom scenarios need --n1 and --n2")
        J = args.j or (len(args.probs[0]) if args.probs else 3)
        base = Scenario(name="custom", n1=args.n1, n2=args.n2, J=J)
    else:
        base = SCENARIOS[args.scenario]
        if args.n1 is not None:
            base = Scenario(**{**base.__dict__, "n1": args.n1})
        if args.n2 is not None:
            base = Scenario(**{**base.__dict__, "n2": args.n2})
        if args.j is not None:
            base = Scenario(**{**base.__dict__, "J": args.j})
    return Scenario(name=base.name, n1=base.n1, n2=base.n2, delta=args.delta,
                    J=base.J, reps=args.reps, alpha=args.alpha,
                    seed=args.seed, probs=args.probs,
                    null_probs=args.null_probs)


def cmd_simulate(args, out) -> int:
    scenario = _scenario_from_args(args)
    lambdas = (parse_lambda_grid(args.lambda_grid) if args.lambda_grid
               else list(DEFAULT_LAMBDAS))
    own = out is None
    fh = open(args.out, "w", encoding="utf-8") if own else out
    try:
        _dump({"record": "config", "config": _config(args),
               "scenario": {**scenario.__dict__}, "lambdas": lambdas}, fh)

        def progress(info):
            _dump({"record": "progress", **info}, fh)
            fh.flush()

        records = run_study(scenario, lambdas, _solver_opts(args), progress)
        for rec in records:
            _dump({"record": "result", "scenario": scenario.name, **rec}, fh)
    finally:
        if own:
            fh.close()
    return EXIT_OK


def cmd_weights(args, out) -> int:
    opts = _solver_opts(args)
    if args.pi is not None:
        if args.nu1 is None:
            raise TableFormatError("--pi needs --nu1")
        pi = np.asarray(args.pi, dtype=float)
        h = h_matrix(pi / pi.sum(), args.nu1, 1.0 - args.nu1)
    else:
        h = plug_in_h(_load_table(args), opts)
    J = h.h.shape[0] + 1
    if args.method == "closed" and J <= 4:
        w = weights_closed_form(h)
    else:
        w = weights_monte_carlo(h, args.mc_reps, args.seed)
    _dump({"config": _config(args), "pi": h.pi, "nu1": h.nu1, "nu2": h.nu2,
           "h": h.h, "weights": w.to_dict()}, out)
    return EXIT_OK


def main(argv=None, out=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    stream = out if out is not None else sys.stdout
    try:
        if args.command == "analyze":
            return cmd_analyze(args, stream)
        if args.command == "simulate":
            return cmd_simulate(args, None if args.out != "-" else stream)
        return cmd_weights(args, stream)
    except (DegenerateTableError, NumericalRankError) as exc:
        sys.stderr.write(f"error: degenerate data: {exc}\n")
        return EXIT_DEGENERATE
    except ConvergenceError as exc:
        sys.stderr.write(f"error: solver failure: {exc}\n")
        return EXIT_SOLVER
    except (TableFormatError, InvalidDimensionError, DomainError,
            ValueError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
