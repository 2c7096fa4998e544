"""Command-line interface.

    vizsudoku gen --n 3 --count 200 --givens 36 --seed 1 --out boards.jsonl
    vizsudoku perturb --dataset boards.jsonl --accuracy 0.9475 --seed 1 --out fields.jsonl
    vizsudoku eval --dataset boards.jsonl --fields fields.jsonl --method hybrid2 --report csv
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from . import bench
from .calibration import KINDS, ScalingParams, apply_scaling, fit_scaling, nll, reliability_curve
from .csp import dump_dataset, generate_dataset, load_dataset
from .grid import GridFormatError, ProbField, dump_prob_fields, load_prob_fields
from .inference import METHODS, solve
from .simulate import (NoiseParams, dump_logits, fields_from_logits, load_logits, rescale,
                       simulate_digits, simulate_fields, simulate_logit_field, tune_to_accuracy)

log = logging.getLogger("vizsudoku")


def _write(text: str, path: str | None) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w") as fh:
            fh.write(text)


def cmd_gen(args) -> None:
    data = generate_dataset(args.n, args.count, args.givens, args.seed)
    dump_dataset(data, args.out)
    log.info("wrote %d instances to %s", len(data), args.out)


def _noise_params(args, K: int) -> NoiseParams:
    if args.params:
        with open(args.params) as fh:
            params = NoiseParams.from_json(json.load(fh))
        if args.seed is not None:
            params = NoiseParams(params.confidence, params.spread, params.corruption, args.seed)
    else:
        params = tune_to_accuracy(args.accuracy, args.spread, args.corruption, K=K,
                                  seed=args.seed or 0)
    if args.scale != 1.0:
        params = rescale(params, args.scale)
    return params


def cmd_perturb(args) -> None:
    data = load_dataset(args.dataset)
    if not data:
        raise ValueError("empty dataset")
    K = data[0].puzzle.size.digits
    if args.logits:
        scaling = ScalingParams.load(args.calibration) if args.calibration else None
        fields = fields_from_logits(load_logits(args.logits, data[0].puzzle.size), data, scaling)
    else:
        params = _noise_params(args, K)
        log.info("noise parameters: %s", json.dumps(params.to_json()))
        fields = simulate_fields(data, params)
        if args.logits_out:
            dump_logits(simulate_logit_field(data, params), args.logits_out)
        if args.validation_out:
            dump_logits(simulate_digits(args.validation, K, params), args.validation_out)
        if args.params_out:
            with open(args.params_out, "w") as fh:
                json.dump(params.to_json(), fh)
                fh.write("\n")
    dump_prob_fields(fields, args.out)


def _load_probs(args) -> ProbField:
    fields = load_prob_fields(args.probs)
    if not 0 <= args.index < len(fields):
        raise ValueError(f"index {args.index} out of range for {len(fields)} fields")
    return fields[args.index]


def cmd_solve(args) -> None:
    probs = _load_probs(args)
    out = solve(args.method, probs, args.top_k, args.epsilon)
    _write(json.dumps(out.to_json(timing=not args.no_timing)) + "\n", args.out)


def _emit(reports, args, extra=None) -> None:
    if args.report == "json" and extra:
        body = [dict(e, **r.to_json(args.timing, instances=not args.summary_only))
                for e, r in zip(extra, reports)]
        text = json.dumps(body, indent=2) + "\n"
    elif args.report == "json":
        text = bench.reports_to_json(reports, timing=args.timing, instances=not args.summary_only)
    else:
        text = bench.reports_to_csv(reports, timing=args.timing, extra=extra)
    _write(text, args.out)


def cmd_eval(args) -> None:
    data = load_dataset(args.dataset)
    fields = load_prob_fields(args.fields)
    report = bench.evaluate(data, fields, args.method, args.top_k, workers=args.workers)
    _emit([report], args)
    if args.ranks:
        hist = bench.rank_distribution(report, fields)
        log.info("rank distribution: %s", " ".join(f"{h:.4f}" for h in hist))


def cmd_sweep_topk(args) -> None:
    data = load_dataset(args.dataset)
    fields = load_prob_fields(args.fields)
    reports = bench.topk_sweep(data, fields, args.method, workers=args.workers)
    _emit(reports, args)


def cmd_sweep_strength(args) -> None:
    data = load_dataset(args.dataset)
    targets = [float(t) for t in args.targets.split(",")]
    rows = bench.classifier_strength_sweep(data, targets, spread=args.spread,
                                           corruption=args.corruption, seed=args.seed,
                                           workers=args.workers)
    reports, extra = [], []
    for row in rows:
        for rep in row.reports.values():
            reports.append(rep)
            extra.append({"target": row.target, "confidence": row.params.confidence})
    _emit(reports, args, extra)


def cmd_calibrate(args) -> None:
    lf = load_logits(args.logits)
    params = fit_scaling(lf, args.kind)
    log.info("NLL %.6f -> %.6f", nll(lf), nll(lf, params))
    if args.out:
        params.save(args.out)
    else:
        sys.stdout.write(json.dumps(params.to_json()) + "\n")


def cmd_compare(args) -> None:
    val = load_logits(args.validation)
    data = load_dataset(args.dataset)
    test = load_logits(args.test_logits, data[0].puzzle.size)
    ks = [int(k) for k in args.top_k.split(",")] if args.top_k else None
    rows = bench.calibration_compare(val, data, test, method=args.method, ks=ks, workers=args.workers)
    reports, extra = [], []
    for row in rows:
        for rep in row.reports:
            reports.append(rep)
            extra.append({"calibration": row.kind, "validation_nll": row.validation_nll,
                          "test_accuracy": row.test_accuracy})
    _emit(reports, args, extra)


def cmd_curve(args) -> None:
    lf = load_logits(args.logits)
    scaling = ScalingParams.load(args.calibration) if args.calibration else None
    probs = apply_scaling(lf.logits, scaling)
    curve = reliability_curve((probs, lf.labels), args.bins)
    lines = ["bin,mean_probability,accuracy,size"]
    lines += [f"{i},{p!r},{a!r},{s}" for i, (p, a, s) in enumerate(curve)]
    _write("\n".join(lines) + "\n", args.out)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="vizsudoku", description="Visual sudoku joint inference toolkit.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True)

    def command(name, help):
        return sub.add_parser(name, help=help, parents=[common])

    p = command("gen", "generate unique-solution puzzles")
    p.add_argument("--n", type=int, default=3, help="box edge (3 for 9x9)")
    p.add_argument("--count", type=int, default=200)
    p.add_argument("--givens", type=int, default=36)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen)

    p = command("perturb", "probability fields for a dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--accuracy", type=float, help="tune the simulator to this argmax accuracy")
    src.add_argument("--params", help="noise parameters JSON")
    src.add_argument("--logits", help="logit JSON lines with ids '<instance>:<cell>'")
    p.add_argument("--calibration", help="scaling parameters applied to --logits")
    p.add_argument("--spread", type=float, default=1.0)
    p.add_argument("--corruption", type=float, default=0.0)
    p.add_argument("--scale", type=float, default=1.0,
                   help="multiply simulated logits (>1 overconfident, <1 underconfident)")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--logits-out", help="also write the simulated test logits")
    p.add_argument("--validation", type=int, default=10000, help="validation digits to simulate")
    p.add_argument("--validation-out", help="write simulated validation logits here")
    p.add_argument("--params-out", help="write the noise parameters used")
    p.set_defaults(func=cmd_perturb)

    def solver_opts(p, method=True):
        if method:
            p.add_argument("--method", choices=METHODS, default="hybrid2")
        p.add_argument("--top-k", type=int, default=None)
        p.add_argument("--workers", type=int, default=1)

    def report_opts(p):
        p.add_argument("--report", choices=("json", "csv"), default="json")
        p.add_argument("--out", default=None)
        p.add_argument("--timing", action="store_true",
                       help="include wall-clock times (makes output non-reproducible)")
        p.add_argument("--summary-only", action="store_true", help="omit per-instance records")

    p = command("solve", "solve a single probability field")
    p.add_argument("--probs", required=True, help="probability field JSON (or JSON lines)")
    p.add_argument("--index", type=int, default=0)
    p.add_argument("--epsilon", type=float, default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--no-timing", action="store_true")
    solver_opts(p)
    p.set_defaults(func=cmd_solve)

    p = command("eval", "run a pipeline over a dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--fields", required=True)
    p.add_argument("--ranks", action="store_true", help="log the rank distribution")
    solver_opts(p)
    report_opts(p)
    p.set_defaults(func=cmd_eval)

    p = command("sweep-topk", "evaluate for k = 1..n^2")
    p.add_argument("--dataset", required=True)
    p.add_argument("--fields", required=True)
    p.add_argument("--method", choices=METHODS, default="hybrid2")
    p.add_argument("--workers", type=int, default=1)
    report_opts(p)
    p.set_defaults(func=cmd_sweep_topk)

    p = command("sweep-strength", "compare pipelines across classifier accuracies")
    p.add_argument("--dataset", required=True)
    p.add_argument("--targets", default="0.88,0.9475,0.99")
    p.add_argument("--spread", type=float, default=1.0)
    p.add_argument("--corruption", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    report_opts(p)
    p.set_defaults(func=cmd_sweep_strength)

    p = command("calibrate", "fit a scaling on validation logits")
    p.add_argument("--kind", choices=KINDS, required=True)
    p.add_argument("--logits", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_calibrate)

    p = command("compare-calibration", "top-k runs with each scaling kind")
    p.add_argument("--validation", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--test-logits", required=True)
    p.add_argument("--method", choices=METHODS, default="hybrid2")
    p.add_argument("--top-k", default=None, help="comma-separated k values (default all)")
    p.add_argument("--workers", type=int, default=1)
    report_opts(p)
    p.set_defaults(func=cmd_compare)

    p = command("curve", "reliability curve as CSV")
    p.add_argument("--logits", required=True)
    p.add_argument("--calibration", default=None)
    p.add_argument("--bins", type=int, default=15)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_curve)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (GridFormatError, ValueError, RuntimeError, OSError, KeyError) as exc:
        print(f"vizsudoku {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
