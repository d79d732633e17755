"""Epoch loop (online or mini-batch), evaluation and restore-best early stopping."""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple

import numpy as np

from . import _kernels
from .data import Dataset
from .forward import NumericError
from .metrics import MetricError, error_rate, mse, per_class_rates, r2_fit
from .optimizers import HyperParams, OptimizerKind, OptimizerState
from .tree import NeuralTree

CONVERGENCE_FIELDS = ("run_id", "epoch", "train_loss", "eval_loss", "train_metric", "eval_metric")


@dataclass(frozen=True)
class EarlyStopping:
    patience: int = 50
    monitor: str = "eval"  # "eval" or "train"
    criterion: str | None = None  # "error_rate" or "mse"; None picks by task

    def __post_init__(self):
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if self.monitor not in ("eval", "train"):
            raise ValueError("monitor must be 'eval' or 'train'")
        if self.criterion not in (None, "error_rate", "mse"):
            raise ValueError("criterion must be 'error_rate' or 'mse'")


@dataclass(frozen=True)
class TrainConfig:
    optimizer: OptimizerKind = OptimizerKind.RMSPROP
    hyper: HyperParams = HyperParams()
    epochs: int = 500
    batch_size: int | None = None  # None trains online, one update per example
    early_stopping: EarlyStopping | None = EarlyStopping()
    shuffle_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "optimizer", OptimizerKind.parse(self.optimizer))
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.batch_size is not None and self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


class EpochRecord(NamedTuple):
    epoch: int
    train_loss: float
    eval_loss: float
    train_metric: float
    eval_metric: float


@dataclass
class TrainReport:
    per_epoch: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0
    stopped_epoch: int = 0
    final_params_restored: bool = False
    wall_time: float = 0.0
    failed: bool = False
    failure: str | None = None
    optimizer_steps: int = 0
    gradient_evaluations: int = 0


@dataclass(frozen=True)
class Evaluation:
    """Scores of a tree on one dataset.

    ``metric`` is the error rate for classification and the r2 fit for
    regression; ``loss`` is the mean over examples of the summed squared
    output residuals (plain MSE for regression).
    """

    metric: float
    loss: float
    predictions: np.ndarray
    accuracy: float | None = None
    mse: float | None = None
    r2: float | None = None
    tpr: np.ndarray | None = None
    fpr: np.ndarray | None = None

    @property
    def error_rate(self) -> float | None:
        return None if self.accuracy is None else self.metric


def _check_data(tree: NeuralTree, data: Dataset):
    if len(data) == 0:
        raise ValueError("empty dataset")
    if data.task != tree.task:
        raise ValueError(f"dataset task {data.task} does not match tree task {tree.task}")
    if data.input_dim != tree.input_dim:
        raise ValueError(f"dataset has {data.input_dim} features, tree expects {tree.input_dim}")


def _predict(tree: NeuralTree, params: np.ndarray, data: Dataset):
    pred = np.empty(len(data))
    loss = np.empty(len(data))
    status = _kernels.predict(
        data.features, data.targets.astype(np.float64), tree.task.n_classes,
        *tree.kernel_args(), tree.out_nodes, params, pred, loss,
    )
    if status:
        raise NumericError(f"non-finite activation at node {status - 1}", status - 1)
    return pred, loss


def _score(tree: NeuralTree, params: np.ndarray, data: Dataset, rates: bool = False) -> Evaluation:
    pred, loss = _predict(tree, params, data)
    mean_loss = float(np.mean(loss))
    if tree.task.is_classification:
        labels = pred.astype(np.int64)
        err = error_rate(labels, data.targets)
        tpr = fpr = None
        if rates:
            tpr, fpr = per_class_rates(labels, data.targets, tree.task.n_classes)
        return Evaluation(err, mean_loss, labels, accuracy=1.0 - err, tpr=tpr, fpr=fpr)
    try:
        fit = r2_fit(pred, data.targets)
    except MetricError:
        fit = float("nan")
    return Evaluation(fit, mean_loss, pred, mse=mse(pred, data.targets), r2=fit)


def evaluate(tree: NeuralTree, data: Dataset) -> Evaluation:
    _check_data(tree, data)
    return _score(tree, tree.params, data, rates=True)


def train(
    tree: NeuralTree, train_set: Dataset, eval_set: Dataset | None, cfg: TrainConfig = TrainConfig()
) -> tuple[NeuralTree, TrainReport]:
    """Fit the tree's parameters; the input tree is left unchanged."""
    _check_data(tree, train_set)
    if eval_set is not None:
        _check_data(tree, eval_set)
    es = cfg.early_stopping
    if es is not None and es.monitor == "eval" and eval_set is None:
        raise ValueError("early stopping on the eval split needs an eval_set")
    criterion = None
    if es is not None:
        criterion = es.criterion or ("error_rate" if tree.task.is_classification else "mse")
        if criterion == "error_rate" and not tree.task.is_classification:
            raise ValueError("error_rate monitoring needs a classification task")

    t0 = time.perf_counter()
    report = TrainReport()
    params = tree.params.copy()
    state = OptimizerState.zeros(cfg.optimizer, len(params))
    hp = cfg.hyper
    rng = np.random.default_rng(cfg.shuffle_seed)
    y_train = train_set.targets.astype(np.float64)
    counters = np.zeros(2, dtype=np.int64)
    batch = 1 if cfg.batch_size is None else cfg.batch_size

    best_value = np.inf
    best_params = None
    wait = 0
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(len(train_set))
        last_good = params.copy()
        status = _kernels.train_epoch(
            train_set.features, y_train, order, batch, tree.task.n_classes,
            tree.kind, tree.activation, tree.parent, tree.feature, tree.child_ptr, tree.child_idx,
            tree.bias_slot, tree.post_order, tree.pre_order, tree.out_nodes, tree.out_pos,
            params, state.v, state.m, counters,
            int(cfg.optimizer), hp.eta, hp.gamma, hp.beta1, hp.beta2, hp.epsilon,
            hp.rmsprop_convention == "standard",
        )
        if status == 0:
            try:
                tr = _score(tree, params, train_set)
                ev = _score(tree, params, eval_set) if eval_set is not None else None
            except NumericError as exc:
                status, detail = 1, str(exc)
        else:
            detail = (
                f"non-finite activation at node {status - 1}"
                if status > 0
                else f"parameter {-status - 1} became non-finite"
            )
        if status != 0:
            report.failed = True
            report.failure = f"diverged in epoch {epoch}: {detail}"
            params = last_good
            break
        nan = float("nan")
        rec = EpochRecord(
            epoch, tr.loss, ev.loss if ev else nan, tr.metric, ev.metric if ev else nan
        )
        report.per_epoch.append(rec)
        report.stopped_epoch = epoch
        if es is None:
            continue
        watched = tr if es.monitor == "train" else ev
        value = watched.metric if criterion == "error_rate" else watched.loss
        if value < best_value:
            best_value, best_params, wait = value, params.copy(), 0
            report.best_epoch = epoch
        else:
            wait += 1
            if wait >= es.patience:
                break

    if es is None:
        report.best_epoch = report.stopped_epoch
    elif best_params is not None:
        report.final_params_restored = report.best_epoch != report.stopped_epoch or report.failed
        params = best_params
    report.optimizer_steps = int(counters[0])
    report.gradient_evaluations = int(counters[1])
    report.wall_time = time.perf_counter() - t0
    return tree.with_params(params), report


def write_convergence_csv(path, runs: Iterable[tuple[int, TrainReport]]) -> None:
    """Per-epoch trajectories, one row per (run, epoch)."""
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(CONVERGENCE_FIELDS)
        for run_id, report in runs:
            for rec in report.per_epoch:
                out.writerow([run_id, rec.epoch, *(repr(float(v)) for v in rec[1:])])
