"""Grow a neural tree for Iris, train it, and look at what came out."""

import tempfile
from pathlib import Path

import numpy as np

from bneuralt import (
    Task,
    TrainConfig,
    TreeGenConfig,
    count_parameters,
    evaluate,
    generate_tree,
    load_builtin,
    minmax_normalize,
    save_tree,
    shuffle_split,
    to_dot,
    train,
)

# features are scaled to [0, 1] before anything else
iris = minmax_normalize(load_builtin("iris"))
train_set, test_set = shuffle_split(iris, 0.8, seed=1)
print("train", train_set.features.shape, "test", test_set.features.shape)

# the root gets one subtree per class; below that arity is drawn from 2..m
cfg = TreeGenConfig(depth_cap=5, arity_cap=5, leaf_prob=0.4, rng_seed=7)
tree = generate_tree(cfg, Task.classification(3), input_dim=4)
print("nodes:", len(tree), "params:", count_parameters(tree))

before = evaluate(tree, test_set)
print(f"untrained test accuracy {before.accuracy:.3f}")

trained, report = train(tree, train_set, test_set, TrainConfig(optimizer="rmsprop", epochs=200))
after = evaluate(trained, test_set)
print(f"trained test accuracy {after.accuracy:.3f} (best epoch {report.best_epoch}, stopped {report.stopped_epoch})")
print("per-class tpr", np.round(after.tpr, 3), "fpr", np.round(after.fpr, 3))

# loss curve, every 10th epoch
for rec in report.per_epoch[::10]:
    print(f"  epoch {rec.epoch:4d}  train {rec.train_loss:.4f}  eval {rec.eval_loss:.4f}")

out = Path(tempfile.mkdtemp())
save_tree(trained, out / "iris_tree.json")
(out / "iris_tree.dot").write_text(to_dot(trained))
print("model and graphviz file in", out)
