"""Command line entry point: generate, train, evaluate, export-dot, benchmark.

Exit codes: 0 success, 1 usage error, 2 data or model error, 3 when most runs
of a training set diverged.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

from . import data as datamod
from .experiment import (
    ExperimentConfig,
    TaskMismatchError,
    load_dataset,
    run_experiment,
    split_seed_for_run,
    write_summary,
)
from .optimizers import OptimizerKind
from .serialize import ModelFormatError, load_tree, save_tree, to_dot
from .training import EarlyStopping, evaluate
from .tree import Activation, GenerationError, count_parameters, generate_tree, validate

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_DIVERGED = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_experiment_flags(p: argparse.ArgumentParser, training: bool = True):
    p.add_argument("--config", help="JSON experiment config; flags override its values")
    p.add_argument("--dataset", help="iris, wine, friedman, mnist or a CSV path")
    p.add_argument("--task", choices=["classification", "regression"])
    p.add_argument("--target-column", help="CSV target column (name or index)")
    p.add_argument("--mnist-dir")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--depth", type=int)
    p.add_argument("--arity", type=int)
    p.add_argument("--leaf-prob", type=float)
    p.add_argument("--min-size", type=int)
    p.add_argument("--activation", choices=["sigmoid", "relu"])
    if not training:
        return
    p.add_argument("--runs", type=int)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--optimizer", choices=[k.name.lower() for k in OptimizerKind])
    p.add_argument("--eta", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--patience", type=int)
    p.add_argument("--no-early-stopping", action="store_true")
    p.add_argument("--rmsprop-convention", choices=["paper", "standard"])
    p.add_argument("--out", help="output directory (default $BNEURALT_OUT or ./bneuralt_runs)")


def build_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    top = {}
    for flag, name in [("dataset", "dataset"), ("task", "task"), ("mnist_dir", "mnist_dir"),
                       ("seed", "master_seed"), ("runs", "runs"), ("out", "output_dir")]:
        val = getattr(args, flag, None)
        if val is not None:
            top[name] = val
    if getattr(args, "target_column", None) is not None:
        tc = args.target_column
        top["target_column"] = int(tc) if tc.lstrip("-").isdigit() else tc
    tree = {}
    for flag, name in [("depth", "depth_cap"), ("arity", "arity_cap"),
                       ("leaf_prob", "leaf_prob"), ("min_size", "min_size")]:
        if getattr(args, flag, None) is not None:
            tree[name] = getattr(args, flag)
    if getattr(args, "activation", None):
        tree["internal_activation"] = Activation[args.activation.upper()]
    train = {}
    hyper = {}
    if getattr(args, "optimizer", None):
        train["optimizer"] = OptimizerKind.parse(args.optimizer)
    for flag in ("epochs", "batch_size"):
        if getattr(args, flag, None) is not None:
            train[flag] = getattr(args, flag)
    if getattr(args, "eta", None) is not None:
        hyper["eta"] = args.eta
    if getattr(args, "rmsprop_convention", None):
        hyper["rmsprop_convention"] = args.rmsprop_convention
    if getattr(args, "no_early_stopping", False):
        train["early_stopping"] = None
    elif getattr(args, "patience", None) is not None:
        base = cfg.train.early_stopping or EarlyStopping()
        train["early_stopping"] = dataclasses.replace(base, patience=args.patience)
    if hyper:
        train["hyper"] = dataclasses.replace(cfg.train.hyper, **hyper)
    return dataclasses.replace(
        cfg,
        tree=dataclasses.replace(cfg.tree, **tree),
        train=dataclasses.replace(cfg.train, **train),
        **top,
    )


def cmd_generate(args) -> int:
    cfg = build_config(args)
    full, _ = load_dataset(cfg, cfg.master_seed)
    tree_cfg = dataclasses.replace(cfg.tree, rng_seed=cfg.master_seed)
    try:
        tree = generate_tree(tree_cfg, full.task, full.input_dim)
    except GenerationError as exc:
        print(f"generation failed: {exc}", file=sys.stderr)
        return EXIT_DATA
    problems = validate(tree)
    if problems:  # pragma: no cover - generator bug guard
        print("generated tree is invalid:\n  " + "\n  ".join(problems), file=sys.stderr)
        return EXIT_DATA
    save_tree(tree, args.model)
    pc = count_parameters(tree)
    print(f"wrote {args.model}: {len(tree)} nodes ({tree.n_internal} neural, {tree.n_leaves} leaves), "
          f"{pc.total} parameters ({pc.edges} edges + {pc.biases} biases)")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = build_config(args)
    results, summary = run_experiment(cfg, jobs=args.jobs)
    for r in results:
        status = "FAILED" if r.failed else "ok"
        print(f"run {r.run_id:3d}  {summary.metric_name}={r.test_metric:.4f}  params={r.n_params}"
              f"  size={r.tree_size}  best_epoch={r.best_epoch}  {status}")
    print(summary.format())
    print(f"outputs in {cfg.resolved_output_dir()}")
    return EXIT_DIVERGED if summary.failed * 2 > summary.runs else EXIT_OK


def cmd_benchmark(args) -> int:
    names = [s.strip() for s in args.datasets.split(",") if s.strip()]
    base = build_config(args)
    root = base.resolved_output_dir()
    summaries = []
    for name in names:
        cfg = dataclasses.replace(base, dataset=name, output_dir=str(root / Path(name).stem), task=None)
        _, summary = run_experiment(cfg, jobs=args.jobs)
        summaries.append(summary)
        print(summary.format(), flush=True)
    root.mkdir(parents=True, exist_ok=True)
    write_summary(root / "benchmark", summaries)
    diverged = sum(s.failed for s in summaries) * 2 > sum(s.runs for s in summaries)
    return EXIT_DIVERGED if diverged else EXIT_OK


def _evaluation_set(args, tree):
    cfg = build_config(args)
    full, held_out = load_dataset(cfg, cfg.master_seed)
    if held_out is not None:
        return held_out if args.split == "test" else full
    if args.split == "all":
        return full
    split_seed = args.split_seed
    if args.run_id is not None:
        split_seed = split_seed_for_run(cfg.master_seed, args.run_id)
    tr, te = datamod.shuffle_split(full, cfg.train_fraction, split_seed)
    return te if args.split == "test" else tr


def cmd_evaluate(args) -> int:
    tree = load_tree(args.model)
    data = _evaluation_set(args, tree)
    ev = evaluate(tree, data)
    print(f"examples: {len(data)}")
    if ev.accuracy is not None:
        print(f"accuracy: {ev.accuracy:.6f}")
        print(f"error_rate: {ev.metric:.6f}")
        for c, (tp, fp) in enumerate(zip(ev.tpr, ev.fpr)):
            print(f"class {c}: tpr={tp:.4f} fpr={fp:.4f}")
    else:
        print(f"mse: {ev.mse:.6g}")
        print(f"r2: {ev.r2:.6f}")
    print(f"loss: {ev.loss:.6g}")
    return EXIT_OK


def cmd_export_dot(args) -> int:
    text = to_dot(load_tree(args.model), weights=args.weights)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def make_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="bneuralt", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("generate", help="generate a random tree and save it")
    p.add_argument("model", help="output model file (JSON)")
    _add_experiment_flags(p, training=False)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="run independent generate+train cycles")
    _add_experiment_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="score a saved model")
    p.add_argument("model")
    _add_experiment_flags(p, training=False)
    p.add_argument("--split", choices=["test", "train", "all"], default="all")
    p.add_argument("--split-seed", type=int, default=0)
    p.add_argument("--run-id", type=int, help="reuse the split of this run of `train --seed`")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("export-dot", help="write a Graphviz rendering of a model")
    p.add_argument("model")
    p.add_argument("--weights", action="store_true", help="label edges with weights")
    p.add_argument("--out")
    p.set_defaults(func=cmd_export_dot)

    p = sub.add_parser("benchmark", help="train over several datasets and tabulate")
    _add_experiment_flags(p)
    p.add_argument("--datasets", default="iris,wine,friedman")
    p.set_defaults(func=cmd_benchmark)
    return parser


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    try:
        return args.func(args)
    except (datamod.DataError, ModelFormatError, TaskMismatchError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
