"""Command-line interface: gen / train / sweep / metrics / gradcheck."""

from __future__ import annotations

import argparse
import json
import sys

from .gradcheck import TINY_CONFIG, gradcheck_battery
from .harness import ExperimentConfig, emit_results, sweep, train
from .metrics import read_predictions, report
from .synthdata import (ARTIFACT_TYPES, DatasetSpec, generate_dataset,
                        load_dataset, save_dataset)

GRADCHECK_THRESHOLD = 1e-4


def _cmd_gen(args) -> int:
    counts = tuple(int(c) for c in args.counts.split(",")) if args.counts else None
    spec = DatasetSpec.for_artifact(args.artifact, seed=args.seed,
                                    size=args.size, counts=counts)
    samples = generate_dataset(spec)
    save_dataset(samples, spec, args.out)
    print(f"wrote {len(samples)} samples to {args.out}")
    return 0


def _cmd_train(args) -> int:
    samples, _ = load_dataset(args.data)
    with open(args.config) as fh:
        config = ExperimentConfig.from_dict(json.load(fh))
    result = train(samples, config)
    with open(args.out, "w") as fh:
        json.dump(result.to_dict(), fh, indent=1)
    rep = result.final_report
    print(f"final macro F1 {rep.macro.f1:.3f}, mean {rep.mean_of_15:.3f} -> {args.out}")
    return 0


def _cmd_sweep(args) -> int:
    samples, _ = load_dataset(args.data)
    with open(args.grid) as fh:
        grid = [ExperimentConfig.from_dict(d) for d in json.load(fh)]
    rows = sweep(samples, grid, parallel=args.parallel)
    emit_results(rows, csv_path=args.out, json_path=args.json)
    failures = sum(1 for r in rows if r.error)
    print(f"{len(rows)} runs ({failures} failed) -> {args.out}")
    return 0


def _cmd_metrics(args) -> int:
    y_true, y_pred = read_predictions(args.pred)
    rep = report(y_true, y_pred)
    with open(args.out, "w") as fh:
        json.dump(rep.to_dict(), fh, indent=1)
    print(f"mean of 15: {rep.mean_of_15:.3f} -> {args.out}")
    return 0


def _cmd_gradcheck(args) -> int:
    variants = [args.loss] if args.loss else ["ce", "weighted_ce", "focal", "ordinal"]
    seeds = range(args.seed, args.seed + args.trials)
    worst = 0.0
    for variant in variants:
        err = gradcheck_battery(variant, seeds=seeds, config=TINY_CONFIG)
        worst = max(worst, err)
        print(f"{variant}: max relative error {err:.3e} over {args.trials} seeds")
    if worst >= GRADCHECK_THRESHOLD:
        print(f"FAIL: {worst:.3e} >= {GRADCHECK_THRESHOLD:.0e}")
        return 1
    print(f"OK: worst {worst:.3e} < {GRADCHECK_THRESHOLD:.0e}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="scanqa",
        description="Imbalanced severity classification experiments on synthetic scans",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic dataset directory")
    p.add_argument("--artifact", required=True, choices=ARTIFACT_TYPES)
    p.add_argument("--counts", help="n0,n1,n2 (defaults to the artifact's table)")
    p.add_argument("--size", type=int, default=32)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_gen)

    p = sub.add_parser("train", help="train one configuration")
    p.add_argument("--data", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_train)

    p = sub.add_parser("sweep", help="run a grid of configurations")
    p.add_argument("--data", required=True)
    p.add_argument("--grid", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--json")
    p.add_argument("--parallel", type=int, default=1)
    p.set_defaults(fn=_cmd_sweep)

    p = sub.add_parser("metrics", help="score a prediction CSV")
    p.add_argument("--pred", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_metrics)

    p = sub.add_parser("gradcheck", help="finite-difference gradient verification")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--loss", choices=["ce", "focal", "ordinal", "weighted_ce"])
    p.add_argument("--trials", type=int, default=20)
    p.set_defaults(fn=_cmd_gradcheck)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
