"""Command-line entry point.

Subcommands:
    run          run one generation experiment and write its artifacts
    metrics      recompute the metrics report from a saved record log
    check-prop1  Monte-Carlo check of the assembly success-probability bound
    train-fgib   fit the fragment scorer on a labeled dataset

Failures exit nonzero with a one-line error JSON on stderr so scripts can
parse them.
"""

from __future__ import annotations

import argparse
import json
import sys

from geam.errors import ConfigError, GeamError


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="geam", description="fragment-based molecular generation"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one generation experiment")
    run.add_argument("--config", help="JSON run configuration")
    run.add_argument(
        "--desk",
        action="store_true",
        help="shrink to desk scale (target 500, short prefill)",
    )
    run.add_argument("--seed", type=int, help="override the config seed")
    run.add_argument("--mode", help="override the config mode")
    run.add_argument("--out", required=True, help="output directory")
    run.add_argument(
        "--no-figures",
        action="store_true",
        help="skip figure rendering",
    )

    metrics = sub.add_parser(
        "metrics", help="recompute metrics from a record log"
    )
    metrics.add_argument("--records", required=True, help="records JSONL")
    metrics.add_argument(
        "--reference", required=True, help="reference SMILES file"
    )
    metrics.add_argument(
        "--hit",
        action="append",
        default=None,
        metavar="RULE",
        help="hit rule like 'y>=0.5' (repeatable; default y>=0.5)",
    )
    metrics.add_argument(
        "--primary",
        help="component scored by the top-mean metric "
        "(default: the only component, if there is exactly one)",
    )
    metrics.add_argument(
        "--minimize",
        action="store_true",
        help="treat lower raw values of the primary component as better",
    )
    metrics.add_argument(
        "--out", help="write metrics.json/csv and figures here instead of stdout"
    )

    prop = sub.add_parser(
        "check-prop1", help="check the success-probability lower bound"
    )
    prop.add_argument(
        "--config",
        help="JSON grid configuration (keys: sizes, ts, ns, batches, seed)",
    )

    train = sub.add_parser("train-fgib", help="fit the fragment scorer")
    train.add_argument(
        "--data", required=True, help="dataset file, lines of SMILES<TAB>Y"
    )
    train.add_argument("--out", required=True, help="checkpoint path (.npz)")
    train.add_argument("--seed", type=int, default=0)
    train.add_argument("--epochs", type=int, help="override training epochs")
    return parser


def _cmd_run(args: argparse.Namespace) -> int:
    from geam.harness import RunConfig, run_experiment

    if args.config:
        config = RunConfig.from_json_file(args.config)
    else:
        config = RunConfig()
    if args.seed is not None:
        config.seed = args.seed
    if args.mode is not None:
        config = RunConfig.from_dict({**config.to_dict(), "mode": args.mode})
    if args.desk:
        config.apply_desk_profile()

    result = run_experiment(config, out_dir=args.out, render=not args.no_figures)
    report = result.report
    print(f"records: {report.n_records}")
    print(f"oracle calls: {report.oracle_calls}")
    print(f"novel hit ratio: {report.novel_hit_ratio:.2f}%")
    print(f"novelty: {report.novelty:.2f}%")
    print(f"#circles (hits): {report.n_circles_hits}")
    top = report.novel_top_mean
    print(f"novel top mean: {'NA' if top is None else format(top, '.4f')}")
    print(f"artifacts: {args.out}")
    return 0


def _cmd_metrics(args: argparse.Namespace) -> int:
    from geam.datasets import read_reference_smiles
    from geam.metrics import HitRule, compute_metrics, reference_fingerprints
    from geam.records import read_records
    from geam.report import render_metrics_figures

    records = read_records(args.records)
    reference = reference_fingerprints(read_reference_smiles(args.reference))
    rules = tuple(HitRule.parse(text) for text in (args.hit or ["y>=0.5"]))

    primary = args.primary
    if primary is None:
        names = sorted({n for r in records for n, _, _ in r.components})
        if len(names) != 1:
            raise ConfigError(
                f"--primary is required with multiple components: {names}"
            )
        primary = names[0]

    report = compute_metrics(
        records,
        reference,
        rules,
        primary=primary,
        maximize=not args.minimize,
    )
    if args.out:
        import os

        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "metrics.json"), "w") as fh:
            fh.write(report.to_json() + "\n")
        with open(os.path.join(args.out, "metrics.csv"), "w") as fh:
            fh.write(report.to_csv())
        render_metrics_figures(
            records, report.vocab_trajectory, os.path.join(args.out, "figures")
        )
        print(f"artifacts: {args.out}")
    else:
        print(report.to_json())
    return 0


def _cmd_check_prop1(args: argparse.Namespace) -> int:
    from geam.prop_bound import run_prop1_grid

    kwargs: dict = {}
    if args.config:
        with open(args.config) as fh:
            doc = json.load(fh)
        allowed = {"sizes", "ts", "ns", "batches", "seed"}
        unknown = set(doc) - allowed
        if unknown:
            raise ConfigError(f"unknown grid keys: {sorted(unknown)}")
        kwargs = doc

    reports = run_prop1_grid(**kwargs)
    for cell in reports:
        print(cell.line())
    failed = sum(1 for cell in reports if not cell.passed)
    print(f"{len(reports) - failed}/{len(reports)} cells passed")
    return 1 if failed else 0


def _cmd_train_fgib(args: argparse.Namespace) -> int:
    import dataclasses

    from geam.datasets import read_dataset
    from geam.fgib import FgibConfig, train_fgib

    dataset = read_dataset(args.data)
    config = FgibConfig()
    if args.epochs is not None:
        config = dataclasses.replace(config, epochs=args.epochs)
    model, history = train_fgib(dataset, config, seed=args.seed)
    model.save(args.out)
    for epoch, stats in enumerate(history):
        print(
            f"epoch {epoch}: loss={stats['loss']:.6f} "
            f"nll={stats['nll']:.6f} kl={stats['kl']:.6f}"
        )
    print(f"checkpoint: {args.out}")
    return 0


_COMMANDS = {
    "run": _cmd_run,
    "metrics": _cmd_metrics,
    "check-prop1": _cmd_check_prop1,
    "train-fgib": _cmd_train_fgib,
}


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except GeamError as exc:
        doc = {"error": type(exc).__name__, "message": str(exc)}
        print(json.dumps(doc, sort_keys=True), file=sys.stderr)
        return 1
    except OSError as exc:
        doc = {"error": type(exc).__name__, "message": str(exc)}
        print(json.dumps(doc, sort_keys=True), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
