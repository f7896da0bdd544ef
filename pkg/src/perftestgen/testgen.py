"""Suite generation from a trained generator, and the uniform random baseline."""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import checkpoint
from .cgan import CGANModel
from .codec import InputSpace, decode_indices
from .simulator import SimulatorConfig

log = logging.getLogger(__name__)


@dataclass
class SuiteReport:
    total: int
    unique: int
    positive: Optional[int] = None
    requested: int = 0


def _count_unique(idx: np.ndarray) -> int:
    return len(np.unique(idx, axis=0)) if len(idx) else 0


def generate_suite_indices(model: CGANModel, requirement: int, size: int, *,
                           seed: Optional[int] = None, unique: bool = False,
                           chunk: int = 1024) -> np.ndarray:
    """Index rows of ``size`` generated tests for one requirement.

    Duplicates are kept unless ``unique`` is set, in which case repeats are
    rejected and at most ``100 * size`` candidates are drawn.
    """
    if size < 1:
        raise ValueError("suite size must be >= 1")
    if not 0 <= requirement < model.num_labels:
        raise ValueError(f"unknown requirement id {requirement} (model has {model.num_labels})")
    rng = np.random.default_rng(model.seed if seed is None else seed)
    if not unique:
        parts, remaining = [], size
        while remaining > 0:
            n = min(chunk, remaining)
            x, _ = model.synthesize(n, labels=requirement, rng=rng)
            parts.append(decode_indices(model.space, x))
            remaining -= n
        return np.concatenate(parts)

    seen: set[tuple] = set()
    rows = []
    drawn = 0
    while len(rows) < size and drawn < 100 * size:
        n = min(chunk, 100 * size - drawn)
        x, _ = model.synthesize(n, labels=requirement, rng=rng)
        drawn += n
        for row in decode_indices(model.space, x):
            key = tuple(row)
            if key not in seen:
                seen.add(key)
                rows.append(row)
                if len(rows) == size:
                    break
    if len(rows) < size:
        log.warning("only %d unique tests after %d candidates", len(rows), drawn)
    return np.array(rows, dtype=np.int64).reshape(-1, model.space.n_features)


def generate_suite(source, requirement: int, size: int, *, seed: Optional[int] = None,
                   ground_truth: Optional[SimulatorConfig] = None,
                   unique: bool = False) -> tuple[list[tuple], SuiteReport]:
    """Generate a suite from a checkpoint path (or an in-memory model).

    Only the generator is used; the discriminator is never evaluated.
    """
    model = source if isinstance(source, CGANModel) else checkpoint.load(source)
    idx = generate_suite_indices(model, requirement, size, seed=seed, unique=unique)
    report = SuiteReport(total=len(idx), unique=_count_unique(idx), requested=size)
    if ground_truth is not None:
        report.positive = int(ground_truth.labels(idx).sum())
    return [model.space.indices_to_point(r) for r in idx], report


def random_suite_indices(space: InputSpace, size: int, rng: np.random.Generator) -> np.ndarray:
    if size < 1:
        raise ValueError("suite size must be >= 1")
    return space.sample_indices(rng, size)


def random_suite(space: InputSpace, size: int, rng: np.random.Generator) -> list[tuple]:
    """``size`` i.i.d. uniform test points."""
    return [space.indices_to_point(r) for r in random_suite_indices(space, size, rng)]


def write_suite_csv(path, space: InputSpace, points: Sequence[Sequence],
                    positives: Optional[Sequence[int]] = None) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(space.names + (["positive"] if positives is not None else []))
        for i, p in enumerate(points):
            w.writerow(list(p) + ([int(positives[i])] if positives is not None else []))


def read_suite_csv(path, space: InputSpace) -> list[tuple]:
    with Path(path).open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    out = []
    for row in rows:
        out.append(tuple(int(row[v.name]) if v.kind == "integer-range" else row[v.name]
                         for v in space.variables))
    return out
