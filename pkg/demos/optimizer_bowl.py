"""Six update rules on f(w) = 0.5 * |w|^2, started from w = (1, 1, 1)."""

import numpy as np

from bneuralt import HyperParams, OptimizerKind, OptimizerState, lookahead_params, step


def run(kind, hp, budget=10_000):
    state = OptimizerState.zeros(kind, 3)
    w = np.ones(3)
    for i in range(budget):
        if np.linalg.norm(w) < 1e-3:
            return i, np.linalg.norm(w)
        look = lookahead_params(state, w, hp)  # w itself unless NAG
        state, w = step(state, w, look, hp)   # gradient of the bowl is the point
    return None, np.linalg.norm(w)


for kind in OptimizerKind:
    steps, norm = run(kind, HyperParams(), budget=100_000 if kind == OptimizerKind.ADAGRAD else 10_000)
    print(f"{kind.name.lower():8s} steps={steps}  |w|={norm:.2e}")

# with (1 - gamma) v + gamma g^2 the step is close to eta * sign(g), so it
# never settles below ~eta; the usual decay does
steps, norm = run(OptimizerKind.RMSPROP, HyperParams(rmsprop_convention="standard"))
print(f"rmsprop (standard decay) steps={steps}  |w|={norm:.2e}")
