"""Backpropagation neural trees: sparse stochastic m-ary trees trained by SGD."""

from .backprop import compute_deltas, compute_gradients, finite_difference_gradient, gradient
from .data import (
    Dataset,
    generate_friedman,
    load_builtin,
    load_csv,
    load_idx,
    minmax_normalize,
    shuffle_split,
)
from .forward import ForwardTrace, NumericError, Prediction, activate, forward
from .metrics import error_rate, mse, per_class_rates, r2_fit
from .optimizers import DivergenceError, HyperParams, OptimizerKind, OptimizerState, lookahead_params, step
from .serialize import load_tree, save_tree, to_dot
from .training import EarlyStopping, Evaluation, TrainConfig, TrainReport, evaluate, train
from .tree import (
    Activation,
    GenerationError,
    NeuralTree,
    Node,
    NodeKind,
    Task,
    TreeGenConfig,
    count_parameters,
    generate_tree,
    tree_size,
    validate,
)

__version__ = "0.1.0"
