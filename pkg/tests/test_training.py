import math

import numpy as np
import pytest

from bneuralt import (
    Activation,
    Dataset,
    EarlyStopping,
    HyperParams,
    OptimizerState,
    Task,
    TrainConfig,
    evaluate,
    load_builtin,
    minmax_normalize,
    shuffle_split,
    train,
)
from bneuralt.backprop import gradient
from bneuralt.forward import forward
from bneuralt.optimizers import update_inplace
from bneuralt.training import CONVERGENCE_FIELDS, write_convergence_csv

from conftest import degrading_eval_run, flat_regression_tree, random_tree


@pytest.fixture(scope="module")
def iris_split():
    iris = minmax_normalize(load_builtin("iris"))
    return shuffle_split(iris, 0.8, seed=0)


def iris_tree(seed=0, act=Activation.SIGMOID):
    return random_tree(seed, True, act, depth=3, arity=3, input_dim=4, n_classes=3)


def test_zero_epochs_returns_tree_unchanged(iris_split):
    tree = iris_tree()
    out, report = train(tree, *iris_split, TrainConfig(epochs=0))
    np.testing.assert_array_equal(out.params, tree.params)
    assert report.per_epoch == [] and report.stopped_epoch == 0 and not report.failed


def test_single_example_gd_loss_never_rises():
    tree = random_tree(6, False, input_dim=3)
    data = Dataset(np.array([[0.2, 0.7, 0.4]]), np.array([0.95]), Task.regression())
    cfg = TrainConfig(optimizer="gd", hyper=HyperParams(eta=0.05), epochs=50, early_stopping=None)
    _, report = train(tree, data, None, cfg)
    losses = [r.train_loss for r in report.per_epoch]
    assert len(losses) == 50
    assert all(b <= a for a, b in zip(losses, losses[1:]))
    assert losses[-1] < losses[0]


def test_input_tree_not_mutated(iris_split):
    tree = iris_tree()
    before = tree.params.copy()
    train(tree, *iris_split, TrainConfig(epochs=3))
    np.testing.assert_array_equal(tree.params, before)


def test_restore_best_exactness():
    _, trained, report, eval_set = degrading_eval_run()
    assert report.final_params_restored
    assert report.best_epoch < report.stopped_epoch
    best = report.per_epoch[report.best_epoch - 1]
    ev = evaluate(trained, eval_set)
    assert ev.loss == best.eval_loss
    assert ev.metric == best.eval_metric
    assert report.stopped_epoch - report.best_epoch == 5


def test_report_epoch_ordering(iris_split):
    _, report = train(iris_tree(), *iris_split, TrainConfig(epochs=30, early_stopping=EarlyStopping(patience=3)))
    assert 1 <= report.best_epoch <= report.stopped_epoch <= 30
    assert [r.epoch for r in report.per_epoch] == list(range(1, report.stopped_epoch + 1))


def test_shuffle_determinism(iris_split):
    cfg = TrainConfig(epochs=10, shuffle_seed=42)
    a_tree, a = train(iris_tree(), *iris_split, cfg)
    b_tree, b = train(iris_tree(), *iris_split, cfg)
    assert a.per_epoch == b.per_epoch
    np.testing.assert_array_equal(a_tree.params, b_tree.params)
    _, c = train(iris_tree(), *iris_split, TrainConfig(epochs=10, shuffle_seed=43))
    assert c.per_epoch != a.per_epoch


@pytest.mark.parametrize("kind", ["gd", "mgd", "nag", "adagrad", "rmsprop", "adam"])
def test_online_step_budget(iris_split, kind):
    tr, te = iris_split
    _, report = train(iris_tree(), tr, te, TrainConfig(optimizer=kind, epochs=7, early_stopping=None))
    assert report.optimizer_steps == len(tr) * 7
    # one forward/backward per step; under Nesterov it is taken at the lookahead point
    assert report.gradient_evaluations == report.optimizer_steps


def test_minibatch_step_count(iris_split):
    tr, te = iris_split
    _, report = train(iris_tree(), tr, te, TrainConfig(epochs=4, batch_size=32, early_stopping=None))
    assert report.optimizer_steps == math.ceil(len(tr) / 32) * 4
    assert report.gradient_evaluations == len(tr) * 4


def test_batch_of_one_equals_online(iris_split):
    for kind in ("gd", "rmsprop"):
        online = train(iris_tree(2), *iris_split, TrainConfig(optimizer=kind, epochs=5, early_stopping=None))
        batch1 = train(iris_tree(2), *iris_split,
                       TrainConfig(optimizer=kind, epochs=5, batch_size=1, early_stopping=None))
        np.testing.assert_array_equal(online[0].params, batch1[0].params)
        assert online[1].per_epoch == batch1[1].per_epoch


def test_minibatch_uses_mean_gradient():
    tree = random_tree(13, False, input_dim=2)
    X = np.array([[0.1, 0.9], [0.4, 0.3], [0.8, 0.6]])
    y = np.array([0.2, 0.5, 0.9])
    data = Dataset(X, y, Task.regression())
    cfg = TrainConfig(optimizer="gd", epochs=1, batch_size=3, early_stopping=None, shuffle_seed=0)
    trained, _ = train(tree, data, None, cfg)
    mean_grad = np.mean([gradient(tree, X[i], y[i]) for i in range(3)], axis=0)
    np.testing.assert_allclose(trained.params, tree.params - 0.1 * mean_grad, rtol=1e-14, atol=1e-16)


def test_online_nag_matches_manual_protocol():
    tree = random_tree(21, False, input_dim=2)
    X = np.array([[0.1, 0.9], [0.4, 0.3], [0.8, 0.6]])
    y = np.array([0.2, 0.5, 0.9])
    data = Dataset(X, y, Task.regression())
    cfg = TrainConfig(optimizer="nag", epochs=1, early_stopping=None, shuffle_seed=5)
    trained, _ = train(tree, data, None, cfg)
    order = np.random.default_rng(5).permutation(3)
    hp = HyperParams()
    state = OptimizerState.zeros("nag", len(tree.params))
    w = tree.params.copy()
    for i in order:
        look = w - hp.gamma * state.v
        update_inplace(state, w, gradient(tree, X[i], y[i], look), hp)
    np.testing.assert_allclose(trained.params, w, rtol=1e-14, atol=1e-16)


def test_relu_divergence_marks_run_failed():
    # ReLU class nodes pass residuals through unsquashed, so a huge step blows up
    tree = random_tree(1, True, Activation.RELU, depth=4, arity=4, input_dim=2, n_classes=2,
                       weight_init=(1.0, 2.0))
    X = np.full((4, 2), 1.0)
    data = Dataset(X, np.array([0, 1, 0, 1]), Task.classification(2))
    cfg = TrainConfig(optimizer="gd", hyper=HyperParams(eta=1e307), epochs=5, early_stopping=None)
    out, report = train(tree, data, None, cfg)
    assert report.failed and "diverged" in report.failure
    assert np.all(np.isfinite(out.params))


def test_evaluate_perfect_classifier():
    tree = iris_tree()
    iris = minmax_normalize(load_builtin("iris"))
    preds = np.array([forward(tree, x).prediction.value for x in iris.features])
    relabelled = Dataset(iris.features, preds, iris.task)
    ev = evaluate(tree, relabelled)
    assert ev.metric == 0.0 and ev.accuracy == 1.0
    np.testing.assert_array_equal(ev.predictions, preds)


def test_evaluate_mean_predictor_has_zero_r2():
    truth = np.array([0.2, 0.4, 0.9, 0.5])
    mean = truth.mean()
    tree = flat_regression_tree([0.0, 0.0], math.log(mean / (1 - mean)), [0, 0], 1)
    data = Dataset(np.zeros((4, 1)), truth, Task.regression())
    ev = evaluate(tree, data)
    assert ev.r2 == pytest.approx(0.0, abs=1e-12)
    assert ev.mse == pytest.approx(np.mean((truth - mean) ** 2), rel=1e-12)


def test_evaluate_reports_class_rates(iris_split):
    trained, _ = train(iris_tree(), *iris_split, TrainConfig(epochs=20))
    ev = evaluate(trained, iris_split[1])
    assert ev.tpr.shape == (3,) and ev.fpr.shape == (3,)
    assert 0.0 <= ev.accuracy <= 1.0 and ev.accuracy + ev.error_rate == 1.0


def test_task_and_shape_mismatch(iris_split):
    reg = random_tree(0, False, input_dim=4)
    with pytest.raises(ValueError):
        train(reg, *iris_split)
    wrong_dim = random_tree(0, True, input_dim=5)
    with pytest.raises(ValueError):
        evaluate(wrong_dim, iris_split[1])
    with pytest.raises(ValueError):
        train(iris_tree(), iris_split[0], None, TrainConfig(epochs=2))


def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(batch_size=0)
    with pytest.raises(ValueError):
        EarlyStopping(patience=0)
    with pytest.raises(ValueError):
        EarlyStopping(monitor="test")


def test_convergence_csv(tmp_path, iris_split):
    _, report = train(iris_tree(), *iris_split, TrainConfig(epochs=3, early_stopping=None))
    path = tmp_path / "conv.csv"
    write_convergence_csv(path, [(7, report)])
    lines = path.read_text().splitlines()
    assert lines[0] == ",".join(CONVERGENCE_FIELDS)
    assert lines[0] == "run_id,epoch,train_loss,eval_loss,train_metric,eval_metric"
    assert len(lines) == 4
    first = lines[1].split(",")
    assert first[:2] == ["7", "1"]
    assert float(first[2]) == report.per_epoch[0].train_loss
