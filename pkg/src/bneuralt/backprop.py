"""Backward pass: per-node deltas (parents first) and parameter gradients."""

from __future__ import annotations

import numpy as np

from . import _kernels
from .forward import ForwardTrace, forward
from .tree import Activation, NeuralTree, NodeKind


def target_vector(tree: NeuralTree, target) -> np.ndarray:
    """One-hot class target, or the scalar regression target as a length-1 vector."""
    out = np.empty(tree.task.n_outputs)
    if tree.task.is_classification:
        c = int(target)
        if not 0 <= c < tree.task.n_classes:
            raise ValueError(f"class index {c} outside [0, {tree.task.n_classes})")
    _kernels.fill_targets(float(target), tree.task.n_classes, out)
    return out


def _check_trace(tree: NeuralTree, trace: ForwardTrace):
    if trace.activations.shape != (len(tree),):
        raise ValueError("trace does not belong to this tree")
    if np.isnan(trace.activations).any():
        raise ValueError("trace is missing activations")
    neural = (tree.kind != NodeKind.LEAF) & (tree.activation != Activation.ARGMAX)
    if np.isnan(trace.pre_activations[neural]).any():
        raise ValueError("trace is missing pre-activations")


def compute_deltas(tree: NeuralTree, trace: ForwardTrace, target, params=None) -> np.ndarray:
    """Delta per node; NaN for leaves and for an argmax root, which have none."""
    _check_trace(tree, trace)
    params = tree.params if params is None else np.ascontiguousarray(params, dtype=np.float64)
    delta = np.empty(len(tree))
    _kernels.deltas(
        target_vector(tree, target), params, trace.activations, trace.pre_activations,
        tree.kind, tree.activation, tree.parent, tree.out_pos, tree.pre_order, delta,
    )
    return delta


def compute_deltas_recursive(tree: NeuralTree, trace: ForwardTrace, target, order: list | None = None):
    """Reference recursion from the root downwards.

    ``order`` collects node ids in the order their delta is written.
    """
    _check_trace(tree, trace)
    h, z, w = trace.activations, trace.pre_activations, tree.params
    t = target_vector(tree, target)
    delta = np.full(len(tree), np.nan)

    def slope(j):
        return _kernels.local_slope(int(tree.activation[j]), h[j], z[j])

    def visit(j: int):
        if tree.kind[j] == NodeKind.LEAF:
            return
        if tree.activation[j] != Activation.ARGMAX:
            if tree.out_pos[j] >= 0:
                delta[j] = (h[j] - t[tree.out_pos[j]]) * slope(j)
            else:
                parent_delta = delta[tree.parent[j]]
                assert not np.isnan(parent_delta), "parent delta read before written"
                delta[j] = slope(j) * parent_delta * w[j - 1]
            if order is not None:
                order.append(j)
        for c in tree.children(j):
            visit(int(c))

    visit(0)
    return delta


def compute_gradients(tree: NeuralTree, trace: ForwardTrace, deltas: np.ndarray) -> np.ndarray:
    """Gradient vector laid out like ``tree.params``."""
    _check_trace(tree, trace)
    if deltas.shape != (len(tree),):
        raise ValueError("delta map does not belong to this tree")
    grad = np.empty_like(tree.params)
    _kernels.gradients(trace.activations, deltas, tree.activation, tree.parent, tree.bias_slot, grad)
    return grad


def gradient(tree: NeuralTree, x, target, params=None) -> np.ndarray:
    """Forward, deltas and gradients for one example in one call."""
    trace = forward(tree, x, params)
    return compute_gradients(tree, trace, compute_deltas(tree, trace, target, params))


def example_loss(tree: NeuralTree, x, target, params=None) -> float:
    """Half the sum of squared output residuals, the quantity the deltas differentiate."""
    trace = forward(tree, x, params)
    out = trace.activations[tree.out_nodes]
    r = out - target_vector(tree, target)
    return 0.5 * float(r @ r)


def finite_difference_gradient(tree: NeuralTree, x, target, h: float = 1e-6) -> np.ndarray:
    """Central differences of :func:`example_loss`, one parameter at a time."""
    if h <= 0:
        raise ValueError("step h must be positive")
    base = tree.params.copy()
    grad = np.empty_like(base)
    for i in range(len(base)):
        w = base.copy()
        w[i] = base[i] + h
        up = example_loss(tree, x, target, w)
        w[i] = base[i] - h
        down = example_loss(tree, x, target, w)
        grad[i] = (up - down) / (2 * h)
    return grad
