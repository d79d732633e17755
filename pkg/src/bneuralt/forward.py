"""Forward pass: children before parents, one visit per node."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .tree import Activation, NeuralTree, NodeKind


class NumericError(ArithmeticError):
    """A non-finite value appeared; ``node`` names the offending node when known."""

    def __init__(self, message: str, node: int | None = None):
        super().__init__(message)
        self.node = node


@dataclass(frozen=True)
class Prediction:
    value: float | int
    scores: np.ndarray | None = None

    @property
    def is_class(self) -> bool:
        return self.scores is not None


@dataclass(frozen=True)
class ForwardTrace:
    activations: np.ndarray
    pre_activations: np.ndarray
    prediction: Prediction


def activate(kind: Activation, z: float) -> float:
    if not math.isfinite(z):
        raise NumericError(f"non-finite pre-activation {z!r}")
    kind = Activation(kind)
    if kind == Activation.ARGMAX:
        raise ValueError("argmax is not an elementwise activation")
    return _kernels.activate(int(kind), float(z))


def _check_input(tree: NeuralTree, x) -> np.ndarray:
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.shape != (tree.input_dim,):
        raise ValueError(f"expected {tree.input_dim} features, got shape {x.shape}")
    return x


def _prediction(tree: NeuralTree, h: np.ndarray) -> Prediction:
    if tree.task.is_classification:
        scores = h[tree.out_nodes].copy()
        return Prediction(int(np.argmax(scores)), scores)
    return Prediction(float(h[0]))


def forward(tree: NeuralTree, x, params: np.ndarray | None = None) -> ForwardTrace:
    """Evaluate the tree on one example.

    ``params`` overrides the tree's own parameter vector (used for lookahead
    evaluations and finite differences).
    """
    x = _check_input(tree, x)
    params = tree.params if params is None else np.ascontiguousarray(params, dtype=np.float64)
    n = len(tree)
    h = np.empty(n)
    z = np.empty(n)
    status = _kernels.forward(x, params, *tree.kernel_args(), h, z)
    if status:
        node = status - 1
        raise NumericError(f"non-finite activation at node {node}", node)
    return ForwardTrace(h, z, _prediction(tree, h))


def forward_recursive(tree: NeuralTree, x, visits: np.ndarray | None = None) -> ForwardTrace:
    """Plain recursive post-order evaluation, kept as a readable reference.

    ``visits`` (length ``len(tree)``) is incremented once per node evaluation.
    """
    x = _check_input(tree, x)
    n = len(tree)
    h = np.empty(n)
    z = np.full(n, np.nan)
    params = tree.params

    def visit(j: int) -> float:
        kids = [int(c) for c in tree.children(j)]
        vals = [visit(c) for c in kids]
        if visits is not None:
            visits[j] += 1
        if tree.kind[j] == NodeKind.LEAF:
            h[j] = x[tree.feature[j]]
        elif tree.activation[j] == Activation.ARGMAX:
            h[j] = max(vals)
        else:
            s = 0.0
            for c, v in zip(kids, vals):
                s += params[c - 1] * v
            s += params[tree.bias_slot[j]]
            z[j] = s
            h[j] = activate(Activation(int(tree.activation[j])), s)
        return h[j]

    visit(0)
    return ForwardTrace(h, z, _prediction(tree, h))
