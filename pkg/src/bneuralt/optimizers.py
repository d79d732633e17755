"""Per-parameter update rules: GD, momentum, Nesterov, Adagrad, RMSprop, Adam.

Every rule subtracts the step, so the gradients produced by
:mod:`bneuralt.backprop` are used as-is.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace

import numpy as np

from . import _kernels


class OptimizerKind(enum.IntEnum):
    GD = _kernels.GD
    MGD = _kernels.MGD
    NAG = _kernels.NAG
    ADAGRAD = _kernels.ADAGRAD
    RMSPROP = _kernels.RMSPROP
    ADAM = _kernels.ADAM

    @classmethod
    def parse(cls, name: str | OptimizerKind) -> OptimizerKind:
        if isinstance(name, cls):
            return name
        try:
            return cls[str(name).upper()]
        except KeyError:
            raise ValueError(f"unknown optimizer {name!r}; choose from {[k.name for k in cls]}") from None


class DivergenceError(ArithmeticError):
    def __init__(self, message: str, index: int):
        super().__init__(message)
        self.index = index


@dataclass(frozen=True)
class HyperParams:
    eta: float = 0.1
    gamma: float = 0.9
    beta1: float = 0.9
    beta2: float = 0.9
    epsilon: float = 1e-8
    # "paper": v <- (1 - gamma) v + gamma g^2; "standard": v <- gamma v + (1 - gamma) g^2
    rmsprop_convention: str = "paper"

    def __post_init__(self):
        if self.eta <= 0:
            raise ValueError("eta must be positive")
        for name in ("gamma", "beta1", "beta2"):
            if not 0.0 <= getattr(self, name) < 1.0:
                raise ValueError(f"{name} must lie in [0, 1)")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.rmsprop_convention not in ("paper", "standard"):
            raise ValueError("rmsprop_convention is 'paper' or 'standard'")


@dataclass
class OptimizerState:
    kind: OptimizerKind
    v: np.ndarray
    m: np.ndarray
    step: int = 0

    @classmethod
    def zeros(cls, kind, n_params: int) -> OptimizerState:
        return cls(OptimizerKind.parse(kind), np.zeros(n_params), np.zeros(n_params), 0)

    def copy(self) -> OptimizerState:
        return replace(self, v=self.v.copy(), m=self.m.copy())


def update_inplace(state: OptimizerState, params: np.ndarray, grads: np.ndarray, hp: HyperParams) -> None:
    """Mutating form of :func:`step`; raises :class:`DivergenceError` on non-finite output."""
    if params.shape != grads.shape or params.shape != state.v.shape:
        raise ValueError("parameter, gradient and state sizes differ")
    if not np.all(np.isfinite(grads)):
        raise ValueError("gradients must be finite")
    state.step += 1
    status = _kernels.optimizer_step(
        int(state.kind), params, grads, state.v, state.m, state.step,
        hp.eta, hp.gamma, hp.beta1, hp.beta2, hp.epsilon, hp.rmsprop_convention == "standard",
    )
    if status:
        idx = -status - 1
        raise DivergenceError(f"parameter {idx} became non-finite", idx)


def step(state: OptimizerState, params: np.ndarray, grads: np.ndarray, hp: HyperParams = HyperParams()):
    """Return ``(new_state, new_params)`` after one update; inputs are left untouched."""
    new_state = state.copy()
    new_params = np.array(params, dtype=np.float64)
    update_inplace(new_state, new_params, np.ascontiguousarray(grads, dtype=np.float64), hp)
    return new_state, new_params


def lookahead_params(state: OptimizerState, params: np.ndarray, hp: HyperParams = HyperParams()) -> np.ndarray:
    """Point where Nesterov evaluates the gradient; ``params`` itself for other rules."""
    params = np.asarray(params, dtype=np.float64)
    if state.kind != OptimizerKind.NAG:
        return params.copy()
    return params - hp.gamma * state.v
