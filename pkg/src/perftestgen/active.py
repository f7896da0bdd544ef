"""Pool-based active training of the CGAN.

Each iteration trains the discriminator on executed and self-labelled
tests, updates the generator, then ranks fresh candidates by least
confidence.  The most uncertain ones are executed on the driver; the
confident rest are kept with the discriminator's predicted label.
Training stops once the Frechet joint distance between candidates and
executed tests drops below a threshold.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .cgan import CGANModel
from .codec import InputSpace, decode_indices, encode_indices
from .drivers import ExecutionError, SimulatorDriver, TestDriver, execute_driver
from .simulator import SimulatorConfig

log = logging.getLogger(__name__)

FJD_REGULARIZATION = 1e-6


# -- least confidence ---------------------------------------------------------

def uncertainty(scores) -> np.ndarray:
    """Binary least-confidence: ``1 - max(s, 1 - s)``."""
    s = np.asarray(scores, dtype=np.float64)
    return 1.0 - np.maximum(s, 1.0 - s)


def least_confidence_rank(scores) -> np.ndarray:
    """Indices ordered from most to least uncertain; ties keep input order."""
    u = uncertainty(scores)
    if u.size == 0:
        raise ValueError("no scores to rank")
    return np.argsort(-u, kind="stable")


# -- Frechet joint distance ---------------------------------------------------

@dataclass
class GaussianSummary:
    mean: np.ndarray
    covariance: np.ndarray

    @classmethod
    def fit(cls, samples: np.ndarray, regularization: float = FJD_REGULARIZATION) -> "GaussianSummary":
        samples = np.asarray(samples, dtype=np.float64)
        mean = samples.mean(axis=0)
        centered = samples - mean
        cov = centered.T @ centered / max(len(samples) - 1, 1)
        cov = 0.5 * (cov + cov.T) + regularization * np.eye(samples.shape[1])
        return cls(mean, cov)


def _sqrtm_psd(mat: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(0.5 * (mat + mat.T))
    return (v * np.sqrt(np.clip(w, 0.0, None))) @ v.T


def frechet_distance(a: GaussianSummary, b: GaussianSummary) -> float:
    diff = a.mean - b.mean
    root_a = _sqrtm_psd(a.covariance)
    cross = _sqrtm_psd(root_a @ b.covariance @ root_a)
    value = diff @ diff + np.trace(a.covariance) + np.trace(b.covariance) - 2.0 * np.trace(cross)
    return float(max(value, 0.0))


def joint_vectors(features, labels, num_labels: int) -> np.ndarray:
    features = np.asarray(features, dtype=np.float64).reshape(len(labels), -1)
    return np.concatenate([features, np.eye(num_labels)[np.asarray(labels, dtype=np.int64)]], axis=1)


def fjd(real_x, real_y, synth_x, synth_y, num_labels: int = 2) -> float:
    """Frechet distance between Gaussians fitted to (features, one-hot label) vectors."""
    a = joint_vectors(real_x, real_y, num_labels)
    b = joint_vectors(synth_x, synth_y, num_labels)
    d = a.shape[1]
    if len(a) < d + 1 or len(b) < d + 1:
        raise ValueError(f"FJD needs at least {d + 1} samples per set, got {len(a)} and {len(b)}")
    return frechet_distance(GaussianSummary.fit(a), GaussianSummary.fit(b))


# -- accuracy against ground truth -------------------------------------------

@dataclass
class AccuracyReport:
    accuracy: float
    unique: int
    sample_size: int


def eval_generator_accuracy(model: CGANModel, config: SimulatorConfig, sample_size: int = 100,
                            rng: Optional[np.random.Generator] = None, label: int = 1) -> AccuracyReport:
    """Fraction of label-conditioned generated tests that hit a bottleneck."""
    if rng is None:
        rng = np.random.default_rng([model.seed, model.steps, 7])
    x, _ = model.synthesize(sample_size, labels=label, rng=rng)
    idx = decode_indices(model.space, x)
    hits = config.labels(idx)
    unique = len(np.unique(idx, axis=0)) if len(idx) else 0
    return AccuracyReport(float(hits.mean()) if len(hits) else 0.0, unique, sample_size)


# -- training data stores -----------------------------------------------------

class TestStore:
    """Append-only store of (index row, label) pairs."""

    __test__ = False  # not a pytest class

    def __init__(self, n_features: int):
        self.n_features = n_features
        self._chunks: list[tuple[np.ndarray, np.ndarray]] = []
        self._idx = np.empty((0, n_features), dtype=np.int64)
        self._labels = np.empty(0, dtype=np.int64)
        self._by_label: dict[int, np.ndarray] = {}

    def append(self, idx, labels) -> None:
        idx = np.asarray(idx, dtype=np.int64).reshape(-1, self.n_features)
        labels = np.asarray(labels, dtype=np.int64).reshape(-1)
        if len(idx) != len(labels):
            raise ValueError("index rows and labels differ in length")
        if len(idx):
            self._chunks.append((idx, labels))

    def _flush(self) -> None:
        if self._chunks:
            self._idx = np.concatenate([self._idx] + [c[0] for c in self._chunks])
            self._labels = np.concatenate([self._labels] + [c[1] for c in self._chunks])
            self._chunks.clear()
            self._by_label = {}

    @property
    def indices(self) -> np.ndarray:
        self._flush()
        return self._idx

    @property
    def labels(self) -> np.ndarray:
        self._flush()
        return self._labels

    def positions(self, label: int) -> np.ndarray:
        """Row positions holding ``label``."""
        self._flush()
        if label not in self._by_label:
            self._by_label[label] = np.flatnonzero(self._labels == label)
        return self._by_label[label]

    def clear(self) -> None:
        self._chunks.clear()
        self._idx = np.empty((0, self.n_features), dtype=np.int64)
        self._labels = np.empty(0, dtype=np.int64)
        self._by_label = {}

    def __len__(self) -> int:
        return len(self._labels) + sum(len(c[1]) for c in self._chunks)


def _draw(rng, stores, positions, count, idx_out, lab_out, at):
    sizes = np.array([len(p) for p in positions])
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    pick = rng.integers(0, offsets[-1], size=count)
    for k, store in enumerate(stores):
        sel = np.flatnonzero((pick >= offsets[k]) & (pick < offsets[k + 1]))
        if len(sel):
            rows = positions[k][pick[sel] - offsets[k]]
            idx_out[at + sel] = store.indices[rows]
            lab_out[at + sel] = store.labels[rows]


def sample_union(rng: np.random.Generator, stores, count: int, *, balanced: bool = False,
                 num_labels: int = 2) -> tuple[np.ndarray, np.ndarray]:
    """Draw ``count`` real tests with replacement from the union of ``stores``.

    With ``balanced`` every label present gets an equal share of the draw;
    otherwise rows are drawn uniformly.
    """
    total = sum(len(s) for s in stores)
    if total == 0:
        raise ValueError("no real tests to train on")
    idx = np.empty((count, stores[0].n_features), dtype=np.int64)
    labels = np.empty(count, dtype=np.int64)
    if not balanced:
        _draw(rng, stores, [np.arange(len(s)) for s in stores], count, idx, labels, 0)
        return idx, labels
    per_label = {c: [s.positions(c) for s in stores] for c in range(num_labels)}
    present = [c for c, pos in per_label.items() if sum(len(p) for p in pos)]
    shares = np.full(len(present), count // len(present))
    shares[:count % len(present)] += 1
    at = 0
    for c, n in zip(present, shares):
        _draw(rng, stores, per_label[c], int(n), idx, labels, at)
        at += int(n)
    return idx, labels


# -- the loop -----------------------------------------------------------------

@dataclass
class ALConfig:
    test_budget: int = 500
    fjd_threshold: float = 0.5
    uncertain_fraction: float = 0.5
    max_iterations: int = 200
    eval_sample_size: int = 100
    candidates_per_iteration: int = 1000
    steps_per_iteration: int = 50
    batch_size: int = 64
    fjd_sample_size: int = 2000
    accuracy_target: Optional[float] = None
    balanced_batches: bool = True

    def validate(self) -> None:
        if self.test_budget < 1:
            raise ValueError("test_budget must be >= 1")
        if not self.fjd_threshold > 0:
            raise ValueError("fjd_threshold must be > 0")
        if not 0 < self.uncertain_fraction <= 1:
            raise ValueError("uncertain_fraction must be in (0, 1]")
        if self.batch_size < 2 or self.batch_size % 2:
            raise ValueError("batch_size must be even and >= 2")
        if self.max_iterations < 1 or self.steps_per_iteration < 0:
            raise ValueError("max_iterations must be >= 1 and steps_per_iteration >= 0")


@dataclass
class IterationRecord:
    iteration: int
    step: int
    disc_loss: float
    gen_loss: float
    accuracy: float
    unique: int
    fjd: float
    executed: int
    self_labeled: int
    failures: int
    labels_consumed: int


@dataclass
class IterationLog:
    records: list[IterationRecord] = field(default_factory=list)
    stop_reason: str = ""

    def first_step_reaching(self, accuracy: float) -> Optional[int]:
        for r in self.records:
            if r.accuracy >= accuracy:
                return r.step
        return None

    def first_record_reaching(self, accuracy: float) -> Optional[IterationRecord]:
        for r in self.records:
            if r.accuracy >= accuracy:
                return r
        return None


@dataclass
class ActiveState:
    """Real-data stores carried across iterations (and into updates)."""

    executed: TestStore
    labeled: TestStore
    prelabeled: int = 0

    @classmethod
    def empty(cls, n_features: int) -> "ActiveState":
        return cls(TestStore(n_features), TestStore(n_features))


def _execute_indices(driver: TestDriver, space: InputSpace, idx: np.ndarray):
    """Run index rows on the driver; returns (ok_rows, labels, n_failed)."""
    if isinstance(driver, SimulatorDriver):
        _, labels = driver.execute_indices(idx)
        return idx, labels, 0
    points = [space.indices_to_point(row) for row in idx]
    outcomes = execute_driver(driver, points)
    keep = [i for i, o in enumerate(outcomes) if not isinstance(o, ExecutionError)]
    labels = np.array([outcomes[i].label for i in keep], dtype=np.int64)
    return idx[keep], labels, len(outcomes) - len(keep)


def predicted_labels(model: CGANModel, features: np.ndarray) -> np.ndarray:
    """Requirement label under which the discriminator finds each candidate most real."""
    scores = np.stack([model.classify(features, np.full(len(features), c))
                       for c in range(model.num_labels)], axis=1)
    return np.argmax(scores, axis=1)


def train_active(model: CGANModel, driver: TestDriver, config: ALConfig,
                 state: Optional[ActiveState] = None, *,
                 rng: Optional[np.random.Generator] = None,
                 ground_truth: Optional[SimulatorConfig] = None,
                 on_record: Optional[Callable[[IterationRecord], None]] = None,
                 ) -> tuple[CGANModel, IterationLog, ActiveState]:
    """Run the active loop until the FJD criterion (or a guard) stops it.

    ``state.executed`` may be pre-filled with a pre-labelled pool.  When
    ``ground_truth`` is given, generator accuracy is evaluated every
    iteration and ``config.accuracy_target`` (if set) also stops the loop.
    """
    config.validate()
    space = model.space
    state = state or ActiveState.empty(space.n_features)
    rng = rng if rng is not None else model.rng
    half = config.batch_size // 2
    log_ = IterationLog()

    for it in range(1, config.max_iterations + 1):
        d_losses, g_losses = [], []
        for _ in range(config.steps_per_iteration):
            real_idx, real_y = sample_union(rng, [state.executed, state.labeled], half,
                                            balanced=config.balanced_batches,
                                            num_labels=model.num_labels)
            d, g = model.train_step(encode_indices(space, real_idx), real_y)
            d_losses.append(d)
            g_losses.append(g)

        cand_x, cand_y = model.synthesize(config.candidates_per_iteration)
        scores = model.classify(cand_x, cand_y)
        order = least_confidence_rank(scores)
        n_uncertain = min(config.test_budget,
                          math.ceil(config.uncertain_fraction * len(order)))
        uncertain, certain = order[:n_uncertain], order[n_uncertain:]

        cand_idx = decode_indices(space, cand_x)
        ok_idx, ok_labels, failures = _execute_indices(driver, space, cand_idx[uncertain])
        state.executed.append(ok_idx, ok_labels)
        if len(certain):
            state.labeled.append(cand_idx[certain], predicted_labels(model, cand_x[certain]))

        ex_idx, ex_y = state.executed.indices, state.executed.labels
        if len(ex_y) > config.fjd_sample_size:
            pick = rng.choice(len(ex_y), config.fjd_sample_size, replace=False)
            ex_idx, ex_y = ex_idx[pick], ex_y[pick]
        try:
            distance = fjd(encode_indices(space, ex_idx), ex_y, cand_x, cand_y, model.num_labels)
        except ValueError:
            distance = math.inf

        acc = AccuracyReport(math.nan, 0, 0)
        if ground_truth is not None:
            acc = eval_generator_accuracy(model, ground_truth, config.eval_sample_size)
        rec = IterationRecord(
            iteration=it, step=model.steps,
            disc_loss=float(np.mean(d_losses)) if d_losses else math.nan,
            gen_loss=float(np.mean(g_losses)) if g_losses else math.nan,
            accuracy=acc.accuracy, unique=acc.unique, fjd=distance,
            executed=len(state.executed) - state.prelabeled,
            self_labeled=len(state.labeled), failures=failures,
            labels_consumed=len(state.executed),
        )
        log_.records.append(rec)
        if on_record:
            on_record(rec)
        log.debug("iteration %d step %d acc %.2f fjd %.4f", it, rec.step, rec.accuracy, distance)

        if distance <= config.fjd_threshold:
            log_.stop_reason = "fjd"
            break
        if config.accuracy_target is not None and rec.accuracy >= config.accuracy_target:
            log_.stop_reason = "accuracy"
            break
    else:
        log_.stop_reason = "max_iterations"
    return model, log_, state
