import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bneuralt import Activation, Node, NodeKind, NumericError, Task, activate, forward
from bneuralt.forward import forward_recursive
from bneuralt.tree import NeuralTree

from conftest import flat_regression_tree, random_tree

# 1 / (1 + e^-2) and 1 / (1 + e^-0.5), evaluated with mpmath at 30 digits
SIGMOID_2 = 0.880797077977882444059729141302
SIGMOID_HALF = 0.622459331201854564638900565746


def test_sigmoid_at_zero():
    assert activate(Activation.SIGMOID, 0.0) == 0.5


def test_sigmoid_at_two():
    assert activate(Activation.SIGMOID, 2.0) == pytest.approx(SIGMOID_2, abs=1e-15)


def test_relu_negative():
    assert activate(Activation.RELU, -3.2) == 0.0
    assert activate(Activation.RELU, 1.25) == 1.25


def test_sigmoid_extremes_do_not_overflow():
    assert activate(Activation.SIGMOID, 800.0) == 1.0
    assert activate(Activation.SIGMOID, -800.0) == pytest.approx(0.0, abs=1e-300)


def test_activate_rejects_non_finite():
    with pytest.raises(NumericError):
        activate(Activation.SIGMOID, math.inf)
    with pytest.raises(NumericError):
        activate(Activation.RELU, math.nan)


def test_zero_weights_give_half():
    tree = flat_regression_tree([0.0, 0.0], 0.0, [0, 1], 2)
    assert forward(tree, [1.0, 1.0]).prediction.value == 0.5


def test_weighted_sum_example():
    tree = flat_regression_tree([0.2, 0.4], 0.1, [0, 1], 2)
    trace = forward(tree, [1.0, 0.5])
    assert trace.pre_activations[0] == pytest.approx(0.5, abs=1e-15)
    assert trace.prediction.value == pytest.approx(SIGMOID_HALF, abs=1e-15)
    np.testing.assert_array_equal(trace.activations[1:], [1.0, 0.5])


def class_score_tree(biases):
    """Argmax root over class nodes whose scores are sigmoid(bias) (zero-weight leaves)."""
    nodes = [Node(0, NodeKind.ROOT, Activation.ARGMAX, None, None, [])]
    for b in biases:
        cid = len(nodes)
        nodes[0].children.append((cid, 1.0))
        nodes.append(Node(cid, NodeKind.INTERNAL, Activation.SIGMOID, b, None,
                          [(cid + 1, 0.0), (cid + 2, 0.0)]))
        nodes.append(Node(cid + 1, NodeKind.LEAF, feature_index=0))
        nodes.append(Node(cid + 2, NodeKind.LEAF, feature_index=0))
    return NeuralTree.from_nodes(nodes, Task.classification(len(biases)), 1, 5, 5)


def test_argmax_tie_goes_to_lowest_index():
    logit = lambda p: math.log(p / (1 - p))
    tree = class_score_tree([logit(0.2), logit(0.9), logit(0.9)])
    pred = forward(tree, [0.3]).prediction
    assert pred.scores[1] == pred.scores[2]
    assert pred.value == 1
    assert forward_recursive(tree, [0.3]).prediction.value == 1


def test_dimension_mismatch():
    tree = flat_regression_tree([0.2, 0.4], 0.1, [0, 1], 2)
    with pytest.raises(ValueError):
        forward(tree, [1.0, 2.0, 3.0])


def test_relu_explosion_names_node():
    tree = flat_regression_tree([1e308, 1e308], 0.0, [0, 1], 2, activation=Activation.RELU)
    with pytest.raises(NumericError) as info:
        forward(tree, [1.0, 1.0])
    assert info.value.node == 0


@pytest.mark.parametrize("classification", [True, False])
@pytest.mark.parametrize("act", [Activation.SIGMOID, Activation.RELU])
def test_kernel_matches_recursive_bit_for_bit(classification, act):
    rng = np.random.default_rng(0)
    for seed in range(30):
        tree = random_tree(seed, classification, act, depth=5, arity=5, weight_init=(-1.0, 1.0))
        x = rng.uniform(size=tree.input_dim)
        a = forward(tree, x)
        b = forward_recursive(tree, x)
        np.testing.assert_array_equal(a.activations, b.activations)
        neural = (tree.kind != NodeKind.LEAF) & (tree.activation != Activation.ARGMAX)
        np.testing.assert_array_equal(a.pre_activations[neural], b.pre_activations[neural])
        assert a.prediction.value == b.prediction.value


def test_every_node_visited_once():
    for seed in range(20):
        tree = random_tree(seed, seed % 2 == 0)
        visits = np.zeros(len(tree), dtype=np.int64)
        forward_recursive(tree, np.full(tree.input_dim, 0.5), visits)
        assert np.all(visits == 1)
        # the kernel walks the precomputed post-order: a permutation of all ids
        assert sorted(tree.post_order.tolist()) == list(range(len(tree)))


def test_post_order_puts_children_first():
    tree = random_tree(4, True, depth=5, arity=5)
    position = np.empty(len(tree), dtype=np.int64)
    position[tree.post_order] = np.arange(len(tree))
    for j in range(1, len(tree)):
        assert position[j] < position[tree.parent[j]]


def test_activation_ranges():
    rng = np.random.default_rng(1)
    for seed in range(20):
        for act in (Activation.SIGMOID, Activation.RELU):
            tree = random_tree(seed, False, act, weight_init=(-2.0, 2.0))
            h = forward(tree, rng.uniform(size=tree.input_dim)).activations
            neural = tree.kind != NodeKind.LEAF
            if act == Activation.SIGMOID:
                assert np.all((h[1:][neural[1:]] > 0) & (h[1:][neural[1:]] < 1))
            else:
                assert np.all(h[1:][neural[1:]] >= 0)
            assert 0 < h[0] < 1  # regression root is always a sigmoid


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**31), feature=st.integers(0, 4), bump=st.floats(0.0, 1.0),
       base=st.lists(st.floats(0.0, 1.0), min_size=5, max_size=5))
def test_monotone_in_every_input(seed, feature, bump, base):
    tree = random_tree(seed, False, Activation.SIGMOID, input_dim=5, weight_init=(0.0, 1.0))
    x = np.array(base)
    y = x.copy()
    y[feature] = min(1.0, y[feature] + bump)
    assert forward(tree, y).prediction.value >= forward(tree, x).prediction.value
