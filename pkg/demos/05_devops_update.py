"""The SUT changes: two bottlenecks are fixed in a new version.

The saved model replays its recent tests on the new version.  Labels that
flipped mean the model is stale, so it resumes training from the replays
rather than from scratch.
"""
import tempfile
from pathlib import Path

import numpy as np

from perftestgen.active import ALConfig, eval_generator_accuracy
from perftestgen.config import config_from_dict
from perftestgen.devops import devops_update
from perftestgen.drivers import SimulatorDriver
from perftestgen.experiments import run_passive
from perftestgen.simulator import remove_clusters

cfg = config_from_dict({"dataset_size": 300_000, "max_steps": 8000, "learning_rate": 4e-3,
                        "gen_learning_rate": 1e-3, "beta1": 0.0, "seed": 0})

with tempfile.TemporaryDirectory() as tmp:
    summary = run_passive(cfg, Path(tmp) / "v1")
    print(f"version 1 model: {summary.steps} steps, accuracy {summary.final_accuracy:.2f}")

    v2 = remove_clusters(cfg.simulator, [0, 1])
    al = ALConfig(test_budget=500, accuracy_target=0.8, max_iterations=25, steps_per_iteration=200,
                  fjd_threshold=0.1)
    model, report, log = devops_update(summary.checkpoint, SimulatorDriver(v2), al, ground_truth=v2)

print("change detected:", report.changed, f"({report.differing} of {report.replayed} replays flipped)")
print("accuracy on version 2 before update:", report.accuracy_before)
print("update ran", report.steps, "steps, stopped on", report.stop_reason)
print("accuracy after:", eval_generator_accuracy(model, v2, 1000, np.random.default_rng(0)).accuracy)
