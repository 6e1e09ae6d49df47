"""Command-line entry point.

Exit codes: 0 success, 1 verification failure, 2 usage or data error.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import dataio, metrics, training, verify
from .dataio import DataError
from .setfn import HouseholdModel
from .solver import SolverOptions, disaggregate

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _parse_states(text: str, n: int) -> list[int]:
    parts = [p for p in text.split(",") if p.strip()]
    try:
        vals = [int(p) for p in parts]
    except ValueError:
        raise UsageError(f"--states must be an integer or a comma-separated list, got {text!r}") from None
    if len(vals) == 1:
        vals = vals * n
    if len(vals) != n:
        raise UsageError(f"--states lists {len(vals)} counts for {n} appliances")
    if min(vals) < 2:
        raise UsageError("every appliance needs at least 2 states")
    return vals


def cmd_generate(args) -> int:
    try:
        spec = dataio.SyntheticSpec.load(args.spec)
    except FileNotFoundError:
        raise UsageError(f"{args.spec}: no such file") from None
    except (json.JSONDecodeError, TypeError, KeyError) as e:
        raise UsageError(f"{args.spec}: invalid synthetic spec: {e}") from None
    out = dataio.save_dataset(dataio.generate(spec), args.out)
    print(f"wrote {spec.horizon} samples for {spec.num_appliances} appliances to {out}")
    return EXIT_OK


def cmd_split(args) -> int:
    ds = dataio.load_dataset(args.data)
    train, test = dataio.split_halves(ds)
    dataio.save_dataset(train, args.train_out)
    dataio.save_dataset(test, args.test_out)
    print(f"train: {train.horizon} samples -> {args.train_out}; test: {test.horizon} samples -> {args.test_out}")
    return EXIT_OK


def cmd_train(args) -> int:
    ds = dataio.load_dataset(args.data, require_appliances=True)
    states = _parse_states(args.states, len(ds.names))
    model, report = training.train_model(ds.appliances, ds.aggregate, states, args.lam, ds.names)
    model.save(args.out)
    for a in model.appliances:
        mu = ", ".join(f"{v:.2f}" for v in a.mu)
        w = ", ".join(f"{v:.4f}" for v in a.weights)
        print(f"{a.name}: mu=[{mu}] w=[{w}]")
    for q, name in zip(report.quantizations, model.names):
        if q.degenerate:
            print(f"warning: {name} has fewer distinct readings than states", file=sys.stderr)
    for i in report.connectivity.degenerate:
        print(f"warning: {model.names[i]} never draws power; line weights set uniform", file=sys.stderr)
    return EXIT_OK


def cmd_disaggregate(args) -> int:
    try:
        model = HouseholdModel.load(args.model)
    except FileNotFoundError:
        raise UsageError(f"{args.model}: no such file") from None
    except json.JSONDecodeError as e:
        raise UsageError(f"{args.model}: invalid JSON: {e}") from None
    if args.lam is not None:
        model = model.with_lambda(args.lam)
    ds = dataio.load_csv(args.agg)
    if ds.num_lines != model.num_lines:
        raise UsageError(f"aggregate has {ds.num_lines} lines but the model expects {model.num_lines}")
    opts = SolverOptions(max_iters=args.max_iters, seed=args.seed, tail_policy=args.tail_policy, init=args.init)
    result = disaggregate(model, ds.aggregate_series(), opts)
    dataio.write_series_csv(args.out, ds.timestamps, dict(zip(model.names, result.power)))
    trace_path = Path(args.trace) if args.trace else Path(args.out).with_suffix(".trace.json")
    trace_path.write_text(json.dumps(result.trace.to_dict(), indent=2) + "\n")
    tr = result.trace
    print(f"{tr.iterations} iterations ({tr.stop_reason}); residual cost {tr.residual_costs[-1]:.6g}")
    return EXIT_OK


def _read_estimates(path, names, timestamps) -> np.ndarray:
    header, ts, vals = dataio.read_csv(path)
    cols = header[1:]
    if sorted(cols) != sorted(names):
        raise UsageError(f"{path}: appliance columns {cols} do not match truth {list(names)}")
    if not np.array_equal(ts, timestamps):
        raise UsageError(f"{path}: timestamps misaligned with the truth data ({ts.size} vs {len(timestamps)})")
    return np.stack([vals[:, cols.index(n)] for n in names])


def cmd_evaluate(args) -> int:
    if len(args.truth) != len(args.estimates):
        raise UsageError("give one --estimates file per --truth directory")
    truths, ests, aggs, names = [], [], [], None
    for tdir, epath in zip(args.truth, args.estimates):
        ds = dataio.load_dataset(tdir, require_appliances=True)
        if names is not None and list(ds.names) != names:
            raise UsageError(f"{tdir}: appliances {list(ds.names)} differ from {names}")
        names = list(ds.names)
        truths.append(ds.appliances)
        ests.append(_read_estimates(epath, names, ds.timestamps))
        aggs.append(ds.aggregate)
    report = metrics.aped(truths, ests, aggs, names)
    Path(args.report).write_text(report.to_json())
    print(report.to_table(), end="")
    if report.skipped:
        print(f"({report.skipped} zero-aggregate ticks skipped)")
    return EXIT_OK


def cmd_verify(args) -> int:
    seeds = range(args.seed, args.seed + args.seeds)
    t0 = time.perf_counter()
    results = verify.run_battery(seeds, args.size, corrupt=args.corrupt_lambda, workers=args.workers)
    failed = False
    print(f"{'check':<20} {'result':<6} witness")
    for check in verify.CHECKS:
        bad = [r for r in results if check in r.failures]
        if bad:
            failed = True
            print(f"{check:<20} {'FAIL':<6} seed {bad[0].seed}: {bad[0].failures[check]}")
        else:
            print(f"{check:<20} {'pass':<6} {len(results)} seeds")
    print(f"size={args.size} seeds={len(results)} elapsed={time.perf_counter() - t0:.2f}s")
    return EXIT_FAIL if failed else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dsfnilm", description="Multi-line energy disaggregation")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a planted synthetic dataset")
    g.add_argument("--spec", required=True, help="synthetic spec JSON")
    g.add_argument("--out", required=True, help="output dataset directory")
    g.set_defaults(func=cmd_generate)

    s = sub.add_parser("split", help="split a dataset into train/test halves")
    s.add_argument("--data", required=True)
    s.add_argument("--train-out", required=True)
    s.add_argument("--test-out", required=True)
    s.set_defaults(func=cmd_split)

    t = sub.add_parser("train", help="learn state levels and line weights")
    t.add_argument("--data", required=True, help="dataset directory with appliance_<name>.csv files")
    t.add_argument("--states", default="3", help="states per appliance: k or k1,k2,... (default 3)")
    t.add_argument("--lambda", dest="lam", type=float, default=1.0, help="smoothness weight (default 1)")
    t.add_argument("--out", required=True, help="model JSON path")
    t.set_defaults(func=cmd_train)

    d = sub.add_parser("disaggregate", help="estimate appliance power from aggregate readings")
    d.add_argument("--model", required=True)
    d.add_argument("--agg", required=True, help="aggregate CSV")
    d.add_argument("--seed", type=int, default=0)
    d.add_argument("--max-iters", type=int, default=100)
    d.add_argument("--init", choices=("random", "per_time_greedy"), default="random")
    d.add_argument("--tail-policy", choices=("shuffled", "deterministic"), default="shuffled")
    d.add_argument("--lambda", dest="lam", type=float, default=None, help="override every appliance's smoothness weight")
    d.add_argument("--out", required=True, help="estimates CSV")
    d.add_argument("--trace", default=None, help="trace JSON (default: <out>.trace.json)")
    d.set_defaults(func=cmd_disaggregate)

    e = sub.add_parser("evaluate", help="APED of estimates against submetered truth")
    e.add_argument("--truth", required=True, action="append", help="truth dataset directory (repeat per house)")
    e.add_argument("--estimates", required=True, action="append", help="estimates CSV (repeat per house)")
    e.add_argument("--report", required=True, help="report JSON path")
    e.set_defaults(func=cmd_evaluate)

    v = sub.add_parser("verify", help="run the invariant battery on random instances")
    v.add_argument("--size", choices=tuple(verify.SIZES), default="tiny")
    v.add_argument("--seeds", type=int, default=20)
    v.add_argument("--seed", type=int, default=0, help="first seed")
    v.add_argument("--workers", type=int, default=1)
    v.add_argument("--corrupt-lambda", action="store_true", help=argparse.SUPPRESS)
    v.set_defaults(func=cmd_verify)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if getattr(args, "max_iters", 1) < 1 or getattr(args, "seeds", 1) < 1:
            raise UsageError("--max-iters and --seeds must be >= 1")
        return args.func(args)
    except (UsageError, DataError, ValueError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
