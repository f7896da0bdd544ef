"""Synthetic system under test with injected bottleneck clusters.

Execution time is computed, never slept: a point costs ``base_time``, plus
the cluster delay when it falls inside one of the axis-aligned boxes.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from .codec import InputSpace, default_space


@dataclass(frozen=True)
class BottleneckCluster:
    """Closed box: ``lows[i] <= value_i <= highs[i]`` on every axis."""

    lows: tuple[int, ...]
    highs: tuple[int, ...]
    delay: float = 5.0

    def __post_init__(self):
        object.__setattr__(self, "lows", tuple(int(x) for x in self.lows))
        object.__setattr__(self, "highs", tuple(int(x) for x in self.highs))
        if len(self.lows) != len(self.highs):
            raise ValueError("cluster lows/highs length mismatch")
        if any(lo > hi for lo, hi in zip(self.lows, self.highs)):
            raise ValueError(f"empty cluster box {self.lows}..{self.highs}")

    @property
    def volume(self) -> int:
        return int(np.prod([hi - lo + 1 for lo, hi in zip(self.lows, self.highs)]))

    def overlaps(self, other: "BottleneckCluster") -> bool:
        return all(a_lo <= b_hi and b_lo <= a_hi for a_lo, a_hi, b_lo, b_hi
                   in zip(self.lows, self.highs, other.lows, other.highs))

    def to_dict(self) -> dict:
        return {"lows": list(self.lows), "highs": list(self.highs), "delay": self.delay}


@dataclass(frozen=True)
class ExecutedTest:
    point: tuple
    t_exe: float
    label: int


def _raw_bounds(space: InputSpace) -> tuple[np.ndarray, np.ndarray]:
    """Cluster bounds are given in raw values; categorical axes use indices."""
    lo = np.array([v.lo if v.kind == "integer-range" else 0 for v in space.variables])
    hi = lo + space.cardinalities - 1
    return lo, hi


@dataclass(frozen=True)
class SimulatorConfig:
    space: InputSpace
    clusters: tuple[BottleneckCluster, ...] = ()
    base_time: float = 0.05
    threshold: float = 1.0
    seed: int = 0
    _lows: np.ndarray = field(init=False, repr=False, compare=False)
    _highs: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        clusters = tuple(self.clusters)
        object.__setattr__(self, "clusters", clusters)
        if not self.threshold > self.base_time:
            raise ValueError("threshold must exceed base_time")
        dom_lo, dom_hi = _raw_bounds(self.space)
        for i, c in enumerate(clusters):
            if len(c.lows) != self.space.n_features:
                raise ValueError(f"cluster {i} has wrong dimensionality")
            if np.any(np.array(c.lows) < dom_lo) or np.any(np.array(c.highs) > dom_hi):
                raise ValueError(f"cluster {i} leaves the input domain")
            if self.base_time + c.delay <= self.threshold:
                raise ValueError(f"cluster {i} delay does not cross the threshold")
            for j in range(i):
                if c.overlaps(clusters[j]):
                    raise ValueError(f"clusters {j} and {i} overlap")
        # cluster bounds as index offsets for vectorised membership tests
        n = self.space.n_features
        lows = np.array([c.lows for c in clusters], dtype=np.int64).reshape(-1, n) - dom_lo
        highs = np.array([c.highs for c in clusters], dtype=np.int64).reshape(-1, n) - dom_lo
        object.__setattr__(self, "_lows", lows)
        object.__setattr__(self, "_highs", highs)

    def cluster_index(self, idx: np.ndarray) -> np.ndarray:
        """Cluster id per index row, -1 when outside every cluster."""
        idx = np.atleast_2d(np.asarray(idx))
        out = np.full(idx.shape[0], -1, dtype=np.int64)
        for k in range(len(self.clusters)):
            inside = np.all((idx >= self._lows[k]) & (idx <= self._highs[k]), axis=1)
            out[inside] = k
        return out

    def times(self, idx: np.ndarray) -> np.ndarray:
        cid = self.cluster_index(idx)
        delays = np.array([c.delay for c in self.clusters] + [0.0])
        return self.base_time + delays[cid]

    def labels(self, idx: np.ndarray) -> np.ndarray:
        return (self.times(idx) > self.threshold).astype(np.int64)

    def to_dict(self) -> dict:
        return {
            "base_time": self.base_time,
            "threshold": self.threshold,
            "seed": self.seed,
            "clusters": [c.to_dict() for c in self.clusters],
        }


def execute_sim(config: SimulatorConfig, point: Sequence) -> ExecutedTest:
    idx = config.space.point_to_indices(point)
    t = float(config.times(idx[None, :])[0])
    return ExecutedTest(tuple(point), t, int(t > config.threshold))


def positive_count(config: SimulatorConfig) -> int:
    """Analytic number of bottlenecked combinations (sum of box volumes)."""
    return sum(c.volume for c in config.clusters)


def brute_force_positive_count(config: SimulatorConfig, chunk: int = 1 << 20) -> int:
    """Enumerate the whole space and count labelled-positive points."""
    all_idx = config.space.all_indices()
    total = 0
    for start in range(0, all_idx.shape[0], chunk):
        total += int(config.labels(all_idx[start:start + chunk]).sum())
    return total


CLUSTER_STREAM = 0x434C5553


def default_benchmark(seed: int = 0, n_clusters: int = 20,
                      shape: Sequence[int] = (10, 15, 10, 10), delay: float = 5.0) -> SimulatorConfig:
    """The 20x62x50x50 benchmark space with disjoint equal-volume clusters.

    Boxes are placed by seeded uniform rejection sampling on a stream of
    their own, so that other generators built from the same seed do not
    retrace the cluster corners.
    """
    space = default_space()
    rng = np.random.default_rng([seed, CLUSTER_STREAM])
    dom_lo, dom_hi = _raw_bounds(space)
    shape = np.asarray(shape)
    clusters: list[BottleneckCluster] = []
    attempts = 0
    while len(clusters) < n_clusters:
        attempts += 1
        if attempts > 100_000:
            raise RuntimeError("could not place disjoint clusters")
        lows = rng.integers(dom_lo, dom_hi - shape + 2)
        cand = BottleneckCluster(tuple(lows), tuple(lows + shape - 1), delay)
        if not any(cand.overlaps(c) for c in clusters):
            clusters.append(cand)
    return SimulatorConfig(space, tuple(clusters), seed=seed)


def remove_clusters(config: SimulatorConfig, indices: Iterable[int]) -> SimulatorConfig:
    drop = set()
    for i in indices:
        if not 0 <= i < len(config.clusters):
            raise IndexError(f"cluster index {i} out of range [0, {len(config.clusters)})")
        drop.add(i)
    kept = tuple(c for i, c in enumerate(config.clusters) if i not in drop)
    return replace(config, clusters=kept)
