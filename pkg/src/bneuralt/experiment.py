"""Repeated generate-and-train runs with per-run seeds and aggregate summaries."""

from __future__ import annotations

import csv
import dataclasses
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import data as datamod
from .optimizers import HyperParams
from .serialize import save_tree
from .training import EarlyStopping, TrainConfig, TrainReport, evaluate, train, write_convergence_csv
from .tree import Activation, TreeGenConfig, count_parameters, generate_tree

OUT_ENV = "BNEURALT_OUT"
MNIST_ENV = "BNEURALT_MNIST_DIR"
BUILTINS = ("iris", "wine", "friedman", "mnist")


class TaskMismatchError(ValueError):
    pass


def derive_seed(master_seed: int, index: int) -> int:
    """64-bit seed for run ``index``; independent of how many runs are requested."""
    ss = np.random.SeedSequence(master_seed, spawn_key=(index,))
    return int(ss.generate_state(1, np.uint64)[0])


def _sub_seeds(run_seed: int, k: int = 3) -> list[int]:
    return [int(s) for s in np.random.SeedSequence(run_seed).generate_state(k, np.uint64)]


def split_seed_for_run(master_seed: int, run_id: int) -> int:
    """Seed of the train/test split used by run ``run_id``."""
    return _sub_seeds(derive_seed(master_seed, run_id))[0]


@dataclass
class ExperimentConfig:
    dataset: str = "iris"
    task: str | None = None  # expected task; also the CSV task when ``dataset`` is a path
    target_column: int | str = -1
    tree: TreeGenConfig = TreeGenConfig()
    train: TrainConfig = TrainConfig()
    runs: int = 30
    master_seed: int = 0
    output_dir: str | None = None
    train_fraction: float = 0.8
    normalize: str = "full"  # "full" (before splitting) or "train" (train-split statistics)
    friedman_n: int = 1200
    mnist_dir: str | None = None
    mnist_train_subset: int | None = None
    exclude_failed: bool = False

    def __post_init__(self):
        if self.runs < 1:
            raise ValueError("runs must be >= 1")
        if self.normalize not in ("full", "train"):
            raise ValueError("normalize must be 'full' or 'train'")

    # -- JSON shape -------------------------------------------------------

    def to_dict(self) -> dict:
        tr = self.train
        es = tr.early_stopping
        return {
            "dataset": self.dataset,
            "task": self.task,
            "target_column": self.target_column,
            "tree": {
                "depth_cap": self.tree.depth_cap,
                "arity_cap": self.tree.arity_cap,
                "leaf_prob": self.tree.leaf_prob,
                "min_size": self.tree.min_size,
                "weight_init": list(self.tree.weight_init),
                "internal_activation": Activation(self.tree.internal_activation).name.lower(),
                "max_retries": self.tree.max_retries,
            },
            "train": {
                "optimizer": tr.optimizer.name.lower(),
                **dataclasses.asdict(tr.hyper),
                "epochs": tr.epochs,
                "batch_size": tr.batch_size,
                "early_stopping": None if es is None else dataclasses.asdict(es),
            },
            "runs": self.runs,
            "master_seed": self.master_seed,
            "output_dir": self.output_dir,
            "train_fraction": self.train_fraction,
            "normalize": self.normalize,
            "friedman_n": self.friedman_n,
            "mnist_dir": self.mnist_dir,
            "mnist_train_subset": self.mnist_train_subset,
            "exclude_failed": self.exclude_failed,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> ExperimentConfig:
        doc = dict(doc)
        unknown = set(doc) - {f.name for f in dataclasses.fields(cls)}
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        tree_doc = dict(doc.pop("tree", {}) or {})
        if "internal_activation" in tree_doc:
            tree_doc["internal_activation"] = Activation[str(tree_doc["internal_activation"]).upper()]
        if "weight_init" in tree_doc:
            tree_doc["weight_init"] = tuple(tree_doc["weight_init"])
        train_doc = dict(doc.pop("train", {}) or {})
        hp_names = {f.name for f in dataclasses.fields(HyperParams)}
        hp = HyperParams(**{k: train_doc.pop(k) for k in list(train_doc) if k in hp_names})
        es_doc = train_doc.pop("early_stopping", {})
        es = None if es_doc is None else EarlyStopping(**es_doc)
        train_cfg = TrainConfig(hyper=hp, early_stopping=es, **train_doc)
        return cls(tree=TreeGenConfig(**tree_doc), train=train_cfg, **doc)

    @classmethod
    def load(cls, path) -> ExperimentConfig:
        return cls.from_dict(json.loads(Path(path).read_text()))

    def resolved_output_dir(self) -> Path:
        return Path(self.output_dir or os.environ.get(OUT_ENV, "bneuralt_runs"))


@dataclass
class RunResult:
    run_id: int
    seed: int
    test_metric: float  # accuracy or r2
    test_error: float | None
    test_mse: float | None
    n_params: int
    tree_size: int
    best_epoch: int
    stopped_epoch: int
    failed: bool
    report: TrainReport = field(repr=False, compare=False)
    model: object = field(default=None, repr=False, compare=False)


@dataclass
class Summary:
    dataset: str
    optimizer: str
    metric_name: str
    runs: int
    failed: int
    mean_metric: float
    std_metric: float
    mean_params: float
    mean_size: float

    def as_row(self) -> dict:
        return dataclasses.asdict(self)

    def format(self) -> str:
        return (
            f"{self.dataset:<10} {self.optimizer:<8} {self.metric_name}={self.mean_metric:.3f}"
            f" (std {self.std_metric:.3f})  params={self.mean_params:.0f}  size={self.mean_size:.0f}"
            f"  runs={self.runs} failed={self.failed}"
        )


def load_dataset(cfg: ExperimentConfig, seed: int = 0) -> tuple[datamod.Dataset, datamod.Dataset | None]:
    """Full (normalized) dataset, or the fixed (train, test) pair for MNIST."""
    name = cfg.dataset
    if name == "mnist":
        directory = cfg.mnist_dir or os.environ.get(MNIST_ENV)
        if not directory:
            raise datamod.DataError(f"MNIST needs mnist_dir or ${MNIST_ENV}")
        tr = datamod.load_mnist(directory, "train")
        te = datamod.load_mnist(directory, "test")
        if cfg.mnist_train_subset:
            rows = np.random.default_rng(seed).permutation(len(tr))[: cfg.mnist_train_subset]
            tr = tr.subset(np.sort(rows))
        full = tr
        held_out = te
    elif name == "friedman":
        full, held_out = datamod.generate_friedman(cfg.friedman_n, noise_seed=seed), None
    elif name in ("iris", "wine"):
        full, held_out = datamod.load_builtin(name), None
    else:
        full = datamod.load_csv(name, cfg.target_column, cfg.task or "classification")
        held_out = None
    if cfg.task is not None and full.task.kind != cfg.task:
        raise TaskMismatchError(f"dataset {name!r} is {full.task.kind}, config expects {cfg.task}")
    if held_out is None and cfg.normalize == "full":
        full = datamod.minmax_normalize(full)
    return full, held_out


def _split(cfg, full, held_out, split_seed):
    if held_out is not None:
        return full, held_out
    tr, te = datamod.shuffle_split(full, cfg.train_fraction, split_seed)
    if cfg.normalize == "train":
        rec = datamod.fit_minmax(tr)
        tr, te = datamod.apply_minmax(tr, rec), datamod.apply_minmax(te, rec)
    return tr, te


def run_once(cfg: ExperimentConfig, run_id: int, full=None, held_out=None) -> RunResult:
    seed = derive_seed(cfg.master_seed, run_id)
    split_seed, tree_seed, shuffle_seed = _sub_seeds(seed)
    if full is None:
        full, held_out = load_dataset(cfg, cfg.master_seed)
    train_set, test_set = _split(cfg, full, held_out, split_seed)
    tree = generate_tree(
        dataclasses.replace(cfg.tree, rng_seed=tree_seed), train_set.task, train_set.input_dim
    )
    trained, report = train(
        tree, train_set, test_set, dataclasses.replace(cfg.train, shuffle_seed=shuffle_seed)
    )
    ev = evaluate(trained, test_set)
    metric = ev.accuracy if ev.accuracy is not None else ev.r2
    return RunResult(
        run_id, seed, metric, ev.error_rate, ev.mse, count_parameters(trained).total, len(trained),
        report.best_epoch, report.stopped_epoch, report.failed, report, trained,
    )


def _run_job(args):
    cfg, run_id = args
    return run_once(cfg, run_id)


def run_experiment(cfg: ExperimentConfig, jobs: int = 1, write: bool = True) -> tuple[list[RunResult], Summary]:
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_job, [(cfg, i) for i in range(cfg.runs)]))
    else:
        full, held_out = load_dataset(cfg, cfg.master_seed)
        results = [run_once(cfg, i, full, held_out) for i in range(cfg.runs)]
    results.sort(key=lambda r: r.run_id)
    summary = summarize(cfg, results)
    if write:
        write_outputs(cfg, results, summary)
    return results, summary


def summarize(cfg: ExperimentConfig, results: list[RunResult]) -> Summary:
    used = [r for r in results if not (cfg.exclude_failed and r.failed)] or results
    metrics = np.array([r.test_metric for r in used], dtype=np.float64)
    is_class = used[0].test_error is not None
    std = float(np.std(metrics, ddof=1)) if len(metrics) > 1 else 0.0
    return Summary(
        dataset=Path(cfg.dataset).stem if cfg.dataset not in BUILTINS else cfg.dataset,
        optimizer=cfg.train.optimizer.name.lower(),
        metric_name="accuracy" if is_class else "r2",
        runs=len(results),
        failed=sum(r.failed for r in results),
        mean_metric=math.fsum(metrics) / len(metrics),
        std_metric=std,
        mean_params=math.fsum(r.n_params for r in used) / len(used),
        mean_size=math.fsum(r.tree_size for r in used) / len(used),
    )


RUN_FIELDS = ("run_id", "seed", "test_metric", "test_error", "test_mse", "n_params",
              "tree_size", "best_epoch", "stopped_epoch", "failed")


def write_outputs(cfg: ExperimentConfig, results: list[RunResult], summary: Summary) -> Path:
    out = cfg.resolved_output_dir()
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(json.dumps(cfg.to_dict(), indent=1) + "\n")
    for r in results:
        save_tree(r.model, out / f"run_{r.run_id:03d}_model.json")
        write_convergence_csv(out / f"run_{r.run_id:03d}_convergence.csv", [(r.run_id, r.report)])
    with open(out / "runs.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RUN_FIELDS)
        for r in results:
            w.writerow([_cell(getattr(r, f)) for f in RUN_FIELDS])
    write_summary(out / "summary", [summary])
    return out


def write_summary(stem: Path, summaries: list[Summary]) -> None:
    stem = Path(stem)
    with open(stem.with_suffix(".csv"), "w", newline="") as fh:
        fields = [f.name for f in dataclasses.fields(Summary)]
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(fields)
        for s in summaries:
            w.writerow([_cell(getattr(s, f)) for f in fields])
    stem.with_suffix(".txt").write_text("\n".join(s.format() for s in summaries) + "\n")


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return int(v)
    if isinstance(v, float):
        return repr(v)
    return v

