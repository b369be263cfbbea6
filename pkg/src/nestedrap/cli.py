"""Command-line front end.

Exit codes: 0 success, 1 infeasible input, 2 usage or input error,
3 internal failure.  Diagnostics go to stderr.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import bench, io, svorex
from .mda import solve_continuous, solve_integer
from .model import (
    CONTINUOUS,
    INTEGER,
    MODES,
    AdjustPreconditionError,
    Infeasible,
    InfeasibleSubproblem,
    IterationLimitExceeded,
    NegativeBound,
    RapNcError,
    ScaledInfeasible,
    SolverConfig,
    WindowInfeasible,
    check_feasibility,
)
from .oracle import dp_solve
from .reductions import lot_sizing_to_rapnc, speed_opt_to_rapnc

EXIT_OK, EXIT_INFEASIBLE, EXIT_USAGE, EXIT_INTERNAL = 0, 1, 2, 3
INFEASIBLE_ERRORS = (Infeasible, InfeasibleSubproblem, NegativeBound, WindowInfeasible, ScaledInfeasible)


class UsageError(Exception):
    pass


def _err(msg):
    print(msg, file=sys.stderr)


def _write(text, dest):
    if dest in (None, "-"):
        sys.stdout.write(text if text.endswith("\n") else text + "\n")
    else:
        with open(dest, "w") as fh:
            fh.write(text if text.endswith("\n") else text + "\n")


def _vec(x):
    return "[" + ", ".join(io.fmt_short(v) for v in x) + "]"


def _report(inst, alloc):
    report = check_feasibility(inst, alloc.x)
    print(f"x = {_vec(alloc.x)}")
    print(f"objective = {io.fmt_short(alloc.objective_value)}")
    print(f"feasibility: max_nested_violation={io.fmt_short(report.max_nested_violation)} "
          f"max_box_violation={io.fmt_short(report.max_box_violation)} "
          f"sum_residual={io.fmt_short(report.sum_residual)}")
    if alloc.stats is not None:
        print(f"rap_solves = {alloc.stats.rap_solves}")
        print(f"shortcut_hits = {alloc.stats.shortcut_hits}")
    return report


# ---------------------------------------------------------------------------
# subcommands


def cmd_solve(args):
    inst = io.load_instance(args.instance, args.mode)
    if inst.mode == INTEGER:
        alloc = solve_integer(inst)
    else:
        alloc = solve_continuous(inst, config=SolverConfig(epsilon=args.eps))
    report = _report(inst, alloc)
    if args.out:
        _write(json.dumps(io.solution_to_dict(alloc, report), indent=1), args.out)
    return EXIT_OK


def cmd_oracle(args):
    inst = io.load_instance(args.instance, INTEGER)
    alloc = dp_solve(inst)
    _report(inst, alloc)
    if args.out:
        _write(json.dumps(io.solution_to_dict(alloc), indent=1), args.out)
    return EXIT_OK


def cmd_gen(args):
    inst = bench.gen_instance(bench.GenSpec(args.n, args.m or args.n, args.seed, args.family), args.mode)
    _write(io.dumps_instance(inst), args.out)
    return EXIT_OK


def _list(text, cast):
    return [cast(t) for t in str(text).replace(",", " ").split()]


def cmd_bench(args):
    sizes = _list(args.sizes, lambda t: int(float(t)))
    families = _list(args.families, str)
    for fam in families:
        if fam not in bench.FAMILIES:
            raise UsageError(f"unknown family {fam!r}; choose from {', '.join(bench.FAMILIES)}")

    def show(rec):
        _err(f"{rec.family:>9} n={rec.n:<8d} m={rec.m:<8d} seed={rec.seed} "
             f"time={io.fmt_short(rec.time_seconds)}s")

    res = bench.run_benchmark(sizes, families, args.repeats, args.mode, args.eps, args.m,
                              args.seed, args.min_time, on_record=show)
    if args.csv:
        bench.write_csv(res.records, args.csv)
    for (fam, n, m), (med, mean) in bench.summarize(res.records).items():
        print(f"{fam} n={n} m={m} median={io.fmt_short(med)} mean={io.fmt_short(mean)}")
    for fam, slope in res.slopes.items():
        print(f"{fam} slope={io.fmt_short(slope)}")
    return EXIT_OK


def cmd_reduce(args):
    with open(args.input) as fh:
        doc = json.load(fh)
    if args.kind == "lotsizing":
        inst, offset = lot_sizing_to_rapnc(io.lot_sizing_from_dict(doc))
        out = io.instance_to_dict(inst)
        out["offset"] = io.fmt(offset)
    else:
        inst = speed_opt_to_rapnc(io.speed_from_dict(doc))
        out = io.instance_to_dict(inst)
    _write(json.dumps(out, indent=1), args.out)
    return EXIT_OK


def _svorex_config(args):
    return svorex.SvorexConfig(C=args.C, width=args.width, gamma=args.gamma, n_grad=args.n_grad,
                               n_ws=args.n_ws, kkt_tol=args.kkt_tol, max_iter=args.max_iter,
                               seed=args.seed)


def _dataset(args):
    if args.data:
        return svorex.load_dataset(args.data, args.delimiter)
    if args.synthetic:
        return svorex.synthetic_dataset(args.synthetic, args.dim, args.classes, seed=args.seed)
    raise UsageError("give --data FILE or --synthetic N")


def cmd_svorex_train(args):
    ds = _dataset(args)
    if args.save_data:
        svorex.save_dataset(ds, args.save_data)
    try:
        model = svorex.train(ds, _svorex_config(args))
    except IterationLimitExceeded as exc:
        if args.out and exc.model is not None:
            _write(exc.model.dumps(), args.out)
        raise
    print(f"selections = {model.selections}")
    print(f"objective = {io.fmt_short(model.objective())}")
    print(f"thresholds = {_vec(model.thresholds)}")
    print(f"training_accuracy = {io.fmt_short(np.mean(svorex.predict(model) == ds.y))}")
    if args.out:
        _write(model.dumps(), args.out)
    return EXIT_OK


def cmd_svorex_predict(args):
    with open(args.model) as fh:
        doc = json.load(fh)
    train = svorex.load_dataset(args.train, args.delimiter)
    model = svorex.SvorexModel.from_dict(doc, train)
    X = svorex.load_rows(args.input, args.delimiter)
    if args.labelled:
        X = X[:, :-1]
    for label in svorex.predict(model, X):
        print(int(label))
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser():
    p = argparse.ArgumentParser(prog="nestedrap", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="solve an instance file")
    s.add_argument("instance")
    s.add_argument("--mode", choices=MODES, help="override the mode stored in the file")
    s.add_argument("--eps", type=float, default=1e-6, help="continuous accuracy (default 1e-6)")
    s.add_argument("--out", help="write the solution document here")
    s.set_defaults(func=cmd_solve)

    s = sub.add_parser("oracle", help="exact integer optimum by dynamic programming (small instances)")
    s.add_argument("instance")
    s.add_argument("--out")
    s.set_defaults(func=cmd_oracle)

    s = sub.add_parser("gen", help="random benchmark instance")
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--m", type=int, help="nested constraints (default n)")
    s.add_argument("--family", choices=bench.FAMILIES, default="linear")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--mode", choices=MODES, default=CONTINUOUS)
    s.add_argument("--out")
    s.set_defaults(func=cmd_gen)

    s = sub.add_parser("bench", help="time solves and fit log-log slopes")
    s.add_argument("--sizes", default="1000,10000,100000")
    s.add_argument("--families", default="linear")
    s.add_argument("--repeats", type=int, default=3)
    s.add_argument("--m", type=int, help="fix the number of nested constraints")
    s.add_argument("--mode", choices=MODES, default=CONTINUOUS)
    s.add_argument("--eps", type=float, default=1e-6)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--min-time", type=float, default=0.2, help="repeat fast solves for at least this long")
    s.add_argument("--csv")
    s.set_defaults(func=cmd_bench)

    s = sub.add_parser("reduce", help="convert a lot-sizing or speed model to an instance")
    s.add_argument("--kind", choices=("lotsizing", "speed"), required=True)
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--out")
    s.set_defaults(func=cmd_reduce)

    s = sub.add_parser("svorex-train", help="train an ordinal regression model")
    s.add_argument("--data", help="delimited text: features then integer label")
    s.add_argument("--delimiter")
    s.add_argument("--synthetic", type=int, help="generate a synthetic dataset of this size instead")
    s.add_argument("--dim", type=int, default=5)
    s.add_argument("--classes", type=int, default=5)
    s.add_argument("--save-data", help="write the dataset used for training")
    s.add_argument("--n-ws", type=int, default=2)
    s.add_argument("--gamma", type=float, default=0.2)
    s.add_argument("--n-grad", type=int, default=20)
    s.add_argument("--C", type=float, default=10.0)
    s.add_argument("--width", type=float, default=1.0)
    s.add_argument("--kkt-tol", type=float, default=1e-3)
    s.add_argument("--max-iter", type=int, default=100_000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", help="write the model document here")
    s.set_defaults(func=cmd_svorex_train)

    s = sub.add_parser("svorex-predict", help="predict ordinal classes")
    s.add_argument("--model", required=True)
    s.add_argument("--train", required=True, help="the training data the model was fitted on")
    s.add_argument("--input", required=True, help="delimited feature rows")
    s.add_argument("--labelled", action="store_true", help="input rows end with a label column")
    s.add_argument("--delimiter")
    s.set_defaults(func=cmd_svorex_predict)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        return args.func(args)
    except INFEASIBLE_ERRORS as exc:
        witness = getattr(exc, "witness", None)
        _err(f"infeasible: {exc}" + (f" (witness {witness})" if witness is not None else ""))
        return EXIT_INFEASIBLE
    except (AdjustPreconditionError, IterationLimitExceeded, AssertionError) as exc:
        _err(f"internal failure: {exc}")
        return EXIT_INTERNAL
    except (UsageError, RapNcError, ValueError, KeyError, OSError) as exc:
        _err(f"error: {exc}")
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001
        _err(f"internal failure: {type(exc).__name__}: {exc}")
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
