"""Incremental retraining when the system under test changes.

The most recent executed tests are replayed on the new version.  If any
oracle label differs (or a replay fails), the saved CGAN resumes the
active loop from those replays instead of training from scratch.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from . import checkpoint
from .active import ActiveState, ALConfig, _execute_indices, eval_generator_accuracy, train_active
from .cgan import CGANModel
from .drivers import TestDriver
from .simulator import SimulatorConfig

log = logging.getLogger(__name__)

HISTORY_INDICES = "history/indices"
HISTORY_LABELS = "history/labels"
LOW_BUDGET_REPLAYS = 100


@dataclass
class ExecutionHistory:
    """Executed tests in execution order, as index rows plus oracle labels."""

    indices: np.ndarray
    labels: np.ndarray

    def __len__(self) -> int:
        return len(self.labels)

    def last(self, n: int) -> "ExecutionHistory":
        n = min(n, len(self))
        return ExecutionHistory(self.indices[len(self) - n:], self.labels[len(self) - n:])

    def to_arrays(self) -> dict[str, np.ndarray]:
        return {HISTORY_INDICES: self.indices.astype(np.float64),
                HISTORY_LABELS: self.labels.astype(np.float64)}

    @classmethod
    def from_arrays(cls, arrays: dict) -> "ExecutionHistory":
        if HISTORY_INDICES not in arrays:
            raise checkpoint.CheckpointFormatError("checkpoint carries no execution history")
        idx = arrays[HISTORY_INDICES].astype(np.int64)
        labels = arrays[HISTORY_LABELS].astype(np.int64)
        return cls(idx.reshape(len(labels), -1), labels)


def save_with_history(model: CGANModel, path, history: ExecutionHistory) -> None:
    checkpoint.save(model, path, extra=history.to_arrays())


@dataclass
class ChangeReport:
    changed: bool
    replayed: ExecutionHistory
    differing: int
    failures: int


def detect_change(driver: TestDriver, history: ExecutionHistory, test_budget: int) -> ChangeReport:
    """Replay the last ``test_budget`` tests; any label change or failure counts."""
    if len(history) < 1:
        raise ValueError("execution history is empty")
    if test_budget < 1:
        raise ValueError("test_budget must be >= 1")
    old = history.last(test_budget)
    ok_idx, new_labels, failures = _execute_indices(driver, driver.space, old.indices)
    if failures:
        keep = {tuple(r) for r in ok_idx}
        old_kept = np.array([tuple(r) in keep for r in old.indices])
        old_labels = old.labels[old_kept]
    else:
        old_labels = old.labels
    differing = int(np.sum(old_labels != new_labels))
    return ChangeReport(differing > 0 or failures > 0,
                        ExecutionHistory(ok_idx, new_labels), differing, failures)


@dataclass
class UpdateReport:
    changed: bool
    steps: int
    iterations: int
    replayed: int
    differing: int
    executed: int
    stop_reason: str
    low_budget_warning: bool
    accuracy_before: Optional[float] = None
    accuracy_after: Optional[float] = None


def devops_update(checkpoint_path, driver: TestDriver, config: ALConfig, *,
                  ground_truth: Optional[SimulatorConfig] = None,
                  out_path=None, history_size: int = 10_000):
    """Check the SUT for changes and retrain the saved model if needed.

    Returns ``(model, report, log)``; ``log`` is None when nothing changed.
    The checkpoint is only rewritten (atomically) when retraining happened.
    """
    config.validate()
    model, extra = checkpoint.load(checkpoint_path, with_extra=True)
    history = ExecutionHistory.from_arrays(extra)
    state = ActiveState.empty(model.space.n_features)  # self-labelled tests are stale

    change = detect_change(driver, history, config.test_budget)
    if not change.changed:
        return model, UpdateReport(False, 0, 0, len(change.replayed), 0, 0, "unchanged",
                                   len(change.replayed) < LOW_BUDGET_REPLAYS), None

    state.executed.append(change.replayed.indices, change.replayed.labels)
    start = model.steps
    before = None
    log_ = None
    reason = ""
    if ground_truth is not None:
        before = eval_generator_accuracy(model, ground_truth, config.eval_sample_size).accuracy
    if before is not None and config.accuracy_target is not None and before >= config.accuracy_target:
        reason = "accuracy"
    else:
        model, log_, state = train_active(model, driver, config, state, ground_truth=ground_truth)
        reason = log_.stop_reason
    steps = model.steps - start
    low_budget = steps == 0 or len(change.replayed) < LOW_BUDGET_REPLAYS
    if low_budget:
        log.warning("update converged after %d steps with %d replays; test budget may be too low",
                    steps, len(change.replayed))

    # only results from the new version remain valid history
    executed = ExecutionHistory(state.executed.indices, state.executed.labels)
    save_with_history(model, Path(out_path or checkpoint_path), executed.last(history_size))
    after = log_.records[-1].accuracy if log_ and log_.records else before
    report = UpdateReport(True, steps, len(log_.records) if log_ else 0, len(change.replayed),
                          change.differing, len(executed) - len(change.replayed), reason,
                          low_budget, before, after)
    return model, report, log_
