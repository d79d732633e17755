"""Compiled inner loops over the flat tree arrays.

Layout conventions shared by every kernel:

* node ``j > 0`` owns the weight of the edge to its parent at ``params[j - 1]``;
* ``bias_slot[j]`` indexes the bias of node ``j`` inside ``params`` (``-1``
  when the node carries no bias);
* ``post`` lists node ids children-first, ``pre`` lists them parents-first;
* ``out_pos[j]`` is the output position of node ``j`` (class index for the
  level-1 class nodes, ``0`` for a regression root, ``-1`` otherwise).

Status codes returned by the kernels are ``0`` on success, ``j + 1`` when the
activation of node ``j`` became non-finite, and ``-(i + 1)`` when parameter
``i`` became non-finite after an optimizer update.
"""

import math

import numpy as np
from numba import njit

LEAF = 2
SIGMOID = 0
RELU = 1
ARGMAX = 2

GD, MGD, NAG, ADAGRAD, RMSPROP, ADAM = range(6)


@njit(cache=True)
def sigmoid(z):
    if z >= 0.0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


@njit(cache=True)
def activate(kind, z):
    if kind == RELU:
        return z if z > 0.0 else 0.0
    return sigmoid(z)


@njit(cache=True)
def local_slope(kind, h, z):
    if kind == RELU:
        return 1.0 if z > 0.0 else 0.0
    return h * (1.0 - h)


@njit(cache=True)
def forward(x, params, kind, act, feat, child_ptr, child_idx, bias_slot, post, h, z):
    for j in post:
        if kind[j] == LEAF:
            h[j] = x[feat[j]]
            z[j] = np.nan
        elif act[j] == ARGMAX:
            best = child_idx[child_ptr[j]]
            for k in range(child_ptr[j] + 1, child_ptr[j + 1]):
                c = child_idx[k]
                if h[c] > h[best]:
                    best = c
            h[j] = h[best]
            z[j] = np.nan
        else:
            s = 0.0
            for k in range(child_ptr[j], child_ptr[j + 1]):
                c = child_idx[k]
                s += params[c - 1] * h[c]
            s += params[bias_slot[j]]
            hj = activate(act[j], s)
            z[j] = s
            h[j] = hj
            if not (math.isfinite(s) and math.isfinite(hj)):
                return j + 1
    return 0


@njit(cache=True)
def deltas(targets, params, h, z, kind, act, parent, out_pos, pre, delta):
    """Write one delta per neural node, parents strictly before children."""
    for j in pre:
        if kind[j] == LEAF or act[j] == ARGMAX:
            delta[j] = np.nan
            continue
        slope = local_slope(act[j], h[j], z[j])
        if out_pos[j] >= 0:
            delta[j] = (h[j] - targets[out_pos[j]]) * slope
        else:
            delta[j] = slope * delta[parent[j]] * params[j - 1]


@njit(cache=True)
def gradients(h, delta, act, parent, bias_slot, grad):
    n = h.shape[0]
    for j in range(1, n):
        p = parent[j]
        if act[p] == ARGMAX:
            grad[j - 1] = 0.0
        else:
            grad[j - 1] = delta[p] * h[j]
    for j in range(n):
        if bias_slot[j] >= 0:
            grad[bias_slot[j]] = delta[j]


@njit(cache=True)
def fill_targets(y, n_classes, targets):
    if n_classes == 0:
        targets[0] = y
    else:
        for c in range(n_classes):
            targets[c] = 0.0
        targets[int(y)] = 1.0


@njit(cache=True)
def output_loss(h, out_nodes, targets):
    s = 0.0
    for k in range(out_nodes.shape[0]):
        r = h[out_nodes[k]] - targets[k]
        s += r * r
    return s


@njit(cache=True)
def optimizer_step(kind, params, grad, v, m, t, eta, gamma, beta1, beta2, eps, rms_standard):
    """Apply one update in place; ``t`` is the (already incremented) step count."""
    if kind == ADAM:
        c1 = 1.0 - beta1 ** t
        c2 = 1.0 - beta2 ** t
    for i in range(params.shape[0]):
        g = grad[i]
        if kind == GD:
            params[i] -= eta * g
        elif kind == MGD or kind == NAG:
            v[i] = gamma * v[i] + eta * g
            params[i] -= v[i]
        elif kind == ADAGRAD:
            v[i] = v[i] + g * g
            params[i] -= eta / math.sqrt(v[i] + eps) * g
        elif kind == RMSPROP:
            if rms_standard:
                v[i] = gamma * v[i] + (1.0 - gamma) * g * g
            else:
                v[i] = (1.0 - gamma) * v[i] + gamma * g * g
            params[i] -= eta / math.sqrt(v[i] + eps) * g
        else:
            m[i] = beta1 * m[i] + (1.0 - beta1) * g
            v[i] = beta2 * v[i] + (1.0 - beta2) * g * g
            params[i] -= eta / math.sqrt(v[i] / c2 + eps) * (m[i] / c1)
    for i in range(params.shape[0]):
        if not math.isfinite(params[i]):
            return -(i + 1)
    return 0


@njit(cache=True)
def train_epoch(
    X, y, order, batch_size, n_classes,
    kind, act, parent, feat, child_ptr, child_idx, bias_slot, post, pre,
    out_nodes, out_pos,
    params, v, m, counters,
    opt_kind, eta, gamma, beta1, beta2, eps, rms_standard,
):
    """One pass over ``order``; ``counters`` holds [optimizer steps, gradient evaluations]."""
    n = kind.shape[0]
    n_params = params.shape[0]
    h = np.empty(n)
    z = np.empty(n)
    delta = np.empty(n)
    grad = np.empty(n_params)
    acc = np.empty(n_params)
    look = np.empty(n_params)
    targets = np.empty(out_nodes.shape[0])
    n_ex = order.shape[0]
    start = 0
    while start < n_ex:
        stop = min(start + batch_size, n_ex)
        if opt_kind == NAG:
            for i in range(n_params):
                look[i] = params[i] - gamma * v[i]
        else:
            look[:] = params
        acc[:] = 0.0
        for e in range(start, stop):
            row = order[e]
            status = forward(X[row], look, kind, act, feat, child_ptr, child_idx, bias_slot, post, h, z)
            if status != 0:
                return status
            fill_targets(y[row], n_classes, targets)
            deltas(targets, look, h, z, kind, act, parent, out_pos, pre, delta)
            gradients(h, delta, act, parent, bias_slot, grad)
            counters[1] += 1
            for i in range(n_params):
                acc[i] += grad[i]
        count = stop - start
        for i in range(n_params):
            acc[i] /= count
        counters[0] += 1
        status = optimizer_step(
            opt_kind, params, acc, v, m, counters[0], eta, gamma, beta1, beta2, eps, rms_standard
        )
        if status != 0:
            return status
        start = stop
    return 0


@njit(cache=True)
def predict(
    X, y, n_classes,
    kind, act, feat, child_ptr, child_idx, bias_slot, post,
    out_nodes, params, pred, loss,
):
    """Fill ``pred`` (class index or regression output) and per-example squared loss."""
    n = kind.shape[0]
    h = np.empty(n)
    z = np.empty(n)
    targets = np.empty(out_nodes.shape[0])
    for row in range(X.shape[0]):
        status = forward(X[row], params, kind, act, feat, child_ptr, child_idx, bias_slot, post, h, z)
        if status != 0:
            return status
        fill_targets(y[row], n_classes, targets)
        loss[row] = output_loss(h, out_nodes, targets)
        if n_classes == 0:
            pred[row] = h[out_nodes[0]]
        else:
            best = 0
            for c in range(1, n_classes):
                if h[out_nodes[c]] > h[out_nodes[best]]:
                    best = c
            pred[row] = best
    return 0
