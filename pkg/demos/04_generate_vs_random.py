"""Suites from a trained generator against uniform random testing.

Trains a short passive model, saves it, then compares how many tests in
each suite actually hit a bottleneck.
"""
import tempfile
from pathlib import Path

from perftestgen.config import config_from_dict
from perftestgen.experiments import run_compare, run_passive

cfg = config_from_dict({"dataset_size": 200_000, "max_steps": 5000, "learning_rate": 4e-3,
                        "gen_learning_rate": 1e-3, "beta1": 0.0, "seed": 0})

with tempfile.TemporaryDirectory() as tmp:
    summary = run_passive(cfg, Path(tmp) / "passive")
    print(f"trained {summary.steps} steps, last accuracy {summary.final_accuracy:.2f}")
    rows = run_compare(cfg, [summary.checkpoint], [1000, 5000, 10000])

print(f"{'size':>6} {'cgan +':>7} {'unique':>7} {'random +':>9} {'expected':>9}")
for r in rows:
    print(f"{r['size']:6d} {r['pcgan_positive']:7d} {r['pcgan_unique']:7d} "
          f"{r['random_positive']:9d} {r['random_expected']:9.0f}")

# duplicates grow with suite size: the generator keeps revisiting its favourite regions
for r in rows:
    print(f"size {r['size']}: {r['pcgan_unique'] / r['size']:.0%} unique")
