"""A look at the simulated system under test.

Twenty disjoint boxes in the CID x RID x IID x UID space add five seconds
to every request that lands inside them.
"""
import numpy as np

from perftestgen import default_benchmark, encode, decode, execute_sim, positive_count

sim = default_benchmark(seed=0)
space = sim.space

print("variables:", space.names, "cardinalities:", space.cardinalities)
print("combinations:", space.size)
print("positive combinations:", positive_count(sim), f"({positive_count(sim) / space.size:.2%})")

box = sim.clusters[3]
print("\ncluster 3 spans", box.lows, "to", box.highs)

# corners of a box are inside, the point just past the upper corner is not
for point in (box.lows, box.highs, tuple(h + 1 for h in box.highs)):
    t = execute_sim(sim, point)
    print(f"  {point} -> t_exe {t.t_exe:.2f}s label {t.label}")

# the codec maps each value onto [-1, 1] and back
p = (7, 32, 1, 50)
f = encode(space, p)
print("\nencode", p, "->", np.round(f, 4), "-> decode", decode(space, f))

# uniform random tests hit a bottleneck about 9.7% of the time
rng = np.random.default_rng(1)
idx = space.sample_indices(rng, 100_000)
print("random hit rate over 100k tests:", sim.labels(idx).mean())
