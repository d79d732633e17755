"""Several seeded regression runs on synthetic Friedman data."""

from bneuralt import HyperParams, TrainConfig, TreeGenConfig
from bneuralt.experiment import ExperimentConfig, run_experiment

cfg = ExperimentConfig(
    dataset="friedman",
    runs=4,
    master_seed=2,
    tree=TreeGenConfig(depth_cap=5, arity_cap=5, leaf_prob=0.4),
    train=TrainConfig(optimizer="rmsprop", hyper=HyperParams(eta=0.1), epochs=300),
)
results, summary = run_experiment(cfg, jobs=2, write=False)
for r in results:
    print(f"run {r.run_id}: r2={r.test_metric:.3f}  params={r.n_params}")
print(f"mean r2 {summary.mean_metric:.3f} (std {summary.std_metric:.3f})")
