"""Passive training: a CGAN learns from a pool of already executed tests.

This is a shortened run (a 200k-test pool, 6,000 steps).  The command
line `perftestgen train --config configs/bench.toml` does the full run.
"""
import numpy as np

from perftestgen.active import TestStore, eval_generator_accuracy, sample_union
from perftestgen.codec import decode_indices, encode_indices
from perftestgen.config import config_from_dict
from perftestgen.experiments import labeled_pool

cfg = config_from_dict({"dataset_size": 200_000, "learning_rate": 4e-3, "gen_learning_rate": 1e-3,
                        "beta1": 0.0, "seed": 0})
idx, labels = labeled_pool(cfg)
print(f"pool of {len(labels)} executed tests, {labels.sum()} of them positive")

pool = TestStore(4)
pool.append(idx, labels)
model = cfg.new_model()
rng = np.random.default_rng(0)

for step in range(1, 6001):
    # 16 positive and 16 negative real tests against 32 generated ones
    real_idx, real_y = sample_union(rng, [pool], 32, balanced=True)
    d_loss, g_loss = model.train_step(encode_indices(cfg.space, real_idx), real_y)
    if step % 1000 == 0:
        acc = eval_generator_accuracy(model, cfg.simulator, 100)
        print(f"step {step:5d}  d_loss {d_loss:.3f}  g_loss {g_loss:.3f}  "
              f"accuracy {acc.accuracy:.2f}  unique {acc.unique}")

# ask the generator for tests that should violate the 1 s requirement
x, _ = model.synthesize(5, labels=1, rng=np.random.default_rng(5))
for r in decode_indices(cfg.space, x):
    verdict = "positive" if cfg.simulator.labels(r[None])[0] else "negative"
    print(cfg.space.indices_to_point(r), verdict)
