"""Analytic gradients against central differences on a small random tree."""

import numpy as np

from bneuralt import Activation, Task, TreeGenConfig, finite_difference_gradient, generate_tree, gradient

rng = np.random.default_rng(3)

for act in (Activation.SIGMOID, Activation.RELU):
    cfg = TreeGenConfig(depth_cap=3, arity_cap=3, leaf_prob=0.3, internal_activation=act,
                        weight_init=(-1.0, 1.0), rng_seed=11)
    tree = generate_tree(cfg, Task.regression(), input_dim=4)
    x = rng.uniform(size=4)
    g = gradient(tree, x, 0.3)
    fd = finite_difference_gradient(tree, x, 0.3, h=1e-6)
    gap = np.abs(g - fd)
    print(f"{act.name.lower():8s} {len(g):3d} params  max |analytic - fd| = {gap.max():.2e}")

# the fd noise floor sits around 1e-10, so tiny entries disagree in relative
# terms; the test suite uses an mpmath oracle for that reason
