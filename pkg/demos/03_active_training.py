"""Active training: start from a small pool and let the model pick what to run.

Each iteration trains for 200 steps, draws 1,000 candidates, executes the
most uncertain half (capped by the budget) and keeps the confident rest
with the discriminator's own label.
"""
import numpy as np

from perftestgen.active import ActiveState, ALConfig, train_active
from perftestgen.config import config_from_dict
from perftestgen.drivers import SimulatorDriver
from perftestgen.experiments import labeled_pool

cfg = config_from_dict({"dataset_size": 100_000, "learning_rate": 4e-3, "gen_learning_rate": 1e-3,
                        "beta1": 0.0, "seed": 0})
idx, labels = labeled_pool(cfg)

state = ActiveState.empty(4)
state.executed.append(idx, labels)
state.prelabeled = len(labels)

al = ALConfig(test_budget=500, max_iterations=40, steps_per_iteration=200, fjd_threshold=0.05)


def show(r):
    if r.iteration % 5 == 0:
        print(f"iter {r.iteration:3d}  step {r.step:5d}  accuracy {r.accuracy:.2f}  "
              f"fjd {r.fjd:.3f}  executed {r.executed}  self-labelled {r.self_labeled}")


model, log, state = train_active(cfg.new_model(), SimulatorDriver(cfg.simulator), al, state,
                                 rng=np.random.default_rng(1), ground_truth=cfg.simulator,
                                 on_record=show)
print("stopped on", log.stop_reason, "after", len(log.records), "iterations")
print("labels consumed:", log.records[-1].labels_consumed,
      f"(pool {state.prelabeled} + executed {log.records[-1].executed})")
