import mpmath as mp
import numpy as np
import pytest

from bneuralt import Activation, Node, NodeKind, Task, TreeGenConfig, generate_tree
from bneuralt.tree import NeuralTree

ACCEPTANCE_LINES = []


def record_criterion(number, ok, detail):
    """Remember one acceptance verdict; printed again in the terminal summary."""
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'} - {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def flat_regression_tree(weights, bias, features, input_dim, activation=Activation.SIGMOID):
    """Sigmoid root fed directly by leaves."""
    kids = [(i + 1, w) for i, w in enumerate(weights)]
    nodes = [Node(0, NodeKind.ROOT, activation, bias, None, kids)]
    nodes += [Node(i + 1, NodeKind.LEAF, feature_index=f) for i, f in enumerate(features)]
    return NeuralTree.from_nodes(nodes, Task.regression(), input_dim, 5, 5)


def two_class_tree(w=(0.3, 0.6, 0.2, 0.9), b=(0.1, -0.2)):
    """Argmax root over two sigmoid class nodes with two leaves each (n = 7)."""
    nodes = [
        Node(0, NodeKind.ROOT, Activation.ARGMAX, None, None, [(1, 1.0), (4, 1.0)]),
        Node(1, NodeKind.INTERNAL, Activation.SIGMOID, b[0], None, [(2, w[0]), (3, w[1])]),
        Node(2, NodeKind.LEAF, feature_index=0),
        Node(3, NodeKind.LEAF, feature_index=1),
        Node(4, NodeKind.INTERNAL, Activation.SIGMOID, b[1], None, [(5, w[2]), (6, w[3])]),
        Node(5, NodeKind.LEAF, feature_index=0),
        Node(6, NodeKind.LEAF, feature_index=1),
    ]
    return NeuralTree.from_nodes(nodes, Task.classification(2), 2, 5, 5)


def random_tree(seed, classification=True, activation=Activation.SIGMOID, depth=4, arity=4,
                leaf_prob=0.4, input_dim=5, n_classes=3, weight_init=(0.0, 1.0)):
    task = Task.classification(n_classes) if classification else Task.regression()
    cfg = TreeGenConfig(depth_cap=depth, arity_cap=arity, leaf_prob=leaf_prob,
                        internal_activation=activation, rng_seed=seed, weight_init=weight_init)
    return generate_tree(cfg, task, input_dim)


def gradient_mismatch(analytic, numeric, floor=1e-10):
    """Largest relative error over entries whose absolute gap exceeds ``floor``."""
    gap = np.abs(analytic - numeric)
    scale = np.maximum(np.abs(analytic), np.abs(numeric))
    rel = np.where(gap > floor, gap / np.where(scale > 0, scale, 1.0), 0.0)
    return float(rel.max(initial=0.0))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def mp_loss(tree, x, target, params):
    """Half squared output error, evaluated recursively in mpmath arithmetic."""
    h = {}

    def value(j):
        if tree.kind[j] == NodeKind.LEAF:
            return mp.mpf(float(x[tree.feature[j]]))
        vals = [(int(c), value(int(c))) for c in tree.children(j)]
        if tree.activation[j] == Activation.ARGMAX:
            return max(v for _, v in vals)
        z = mp.fsum(params[c - 1] * v for c, v in vals) + params[tree.bias_slot[j]]
        h[j] = 1 / (1 + mp.exp(-z)) if tree.activation[j] == Activation.SIGMOID else max(z, mp.mpf(0))
        return h[j]

    value(0)
    if tree.task.is_classification:
        goal = [1 if k == int(target) else 0 for k in range(tree.task.n_classes)]
    else:
        goal = [mp.mpf(float(target))]
    return mp.fsum((h[int(j)] - t) ** 2 for j, t in zip(tree.out_nodes, goal)) / 2


def mp_central_difference(tree, x, target, h="1e-15", dps=50):
    """Central differences in 50-digit arithmetic: truncation and rounding both negligible."""
    with mp.workdps(dps):
        base = [mp.mpf(float(w)) for w in tree.params]
        step = mp.mpf(h)
        grad = np.empty(len(base))
        for i in range(len(base)):
            up = list(base)
            up[i] += step
            down = list(base)
            down[i] -= step
            grad[i] = float((mp_loss(tree, x, target, up) - mp_loss(tree, x, target, down)) / (2 * step))
    return grad


def gradient_check_suite(n_cases=100, seed=2024, oracle=mp_central_difference, floor=1e-10):
    """Random (tree, input, target) triples across tasks and activations.

    Returns (worst relative error, cases checked). ReLU inputs that put a
    pre-activation within reach of the kink, or leave every node dead, are
    redrawn since finite differences are meaningless there.
    """
    from bneuralt.backprop import gradient
    from bneuralt.forward import forward

    rng = np.random.default_rng(seed)
    worst, done, attempt = 0.0, 0, 0
    while done < n_cases:
        attempt += 1
        classification = done % 2 == 0
        act = Activation.SIGMOID if (done // 2) % 2 == 0 else Activation.RELU
        depth = int(rng.integers(2, 5))
        arity = int(rng.integers(2, 5))
        d = int(rng.integers(1, 9))
        init = (0.0, 1.0) if done % 3 else (-1.0, 1.0)
        tree = random_tree(int(rng.integers(2**32)), classification, act, depth, arity,
                           float(rng.uniform(0.2, 0.7)), d, int(rng.integers(2, 5)), init)
        x = rng.uniform(0.0, 1.0, d)
        target = int(rng.integers(tree.task.n_classes)) if classification else float(rng.uniform())
        if act == Activation.RELU:
            z = forward(tree, x).pre_activations
            neural = (tree.kind != NodeKind.LEAF) & (tree.activation == Activation.RELU)
            if np.any(np.abs(z[neural]) < 1e-4):
                continue
        g = gradient(tree, x, target)
        if act == Activation.RELU and not np.any(g):
            continue
        worst = max(worst, gradient_mismatch(g, oracle(tree, x, target), floor))
        done += 1
    return worst, done


def degrading_eval_run(patience=5):
    """Training drives the output from ~0.3 toward 0.9 while the eval targets
    sit around 0.7, so the eval loss falls, bottoms out, then climbs again."""
    from bneuralt import Dataset, EarlyStopping, TrainConfig, train

    tree = flat_regression_tree([0.2, 0.2], -1.2, [0, 1], 2)
    x = np.array([[0.5, 0.5]] * 4)
    train_set = Dataset(x, np.full(4, 0.9), Task.regression())
    eval_set = Dataset(x[:2], np.array([0.65, 0.75]), Task.regression())
    cfg = TrainConfig(optimizer="gd", epochs=400, early_stopping=EarlyStopping(patience=patience))
    trained, report = train(tree, train_set, eval_set, cfg)
    return tree, trained, report, eval_set
