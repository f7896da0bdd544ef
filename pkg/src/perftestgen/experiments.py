"""Scripted experiment runs: passive and active training, suite comparison,
random baseline, dataset summary and the DevOps update.

Every runner writes plain CSV/JSON into an output directory.  Metrics rows
carry no timestamps so identical config and seed give identical files.
"""
from __future__ import annotations

import csv
import json
import logging
import math
from collections import deque
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import checkpoint
from .active import ActiveState, IterationRecord, eval_generator_accuracy, sample_union, train_active
from .cgan import CGANModel
from .codec import encode_indices
from .config import ExperimentConfig
from .devops import ExecutionHistory, UpdateReport, devops_update, save_with_history
from .simulator import positive_count
from .testgen import generate_suite_indices, random_suite_indices, write_suite_csv

log = logging.getLogger(__name__)

METRICS_SCHEMA = "#schema=1"
METRICS_HEADER = ("step", "disc_loss", "gen_loss", "accuracy", "acc_mean", "acc_std",
                  "fjd", "labeled", "executed")
MILESTONES = (0.5, 0.8, 0.96)


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    return repr(float(v))


class MetricsWriter:
    """Append-only metrics CSV with a schema line ahead of the header."""

    def __init__(self, path, window: int = 100):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._fh = self.path.open("w", newline="")
        self._fh.write(METRICS_SCHEMA + "\n")
        self._csv = csv.writer(self._fh, lineterminator="\n")
        self._csv.writerow(METRICS_HEADER)
        self._recent: deque[float] = deque(maxlen=window)
        self.milestones: dict[str, Optional[int]] = {str(m): None for m in MILESTONES}
        self.milestone_labels: dict[str, Optional[int]] = {str(m): None for m in MILESTONES}

    def row(self, step: int, disc_loss: float, gen_loss: float, accuracy: float,
            fjd: float = math.nan, labeled: int = 0, executed: int = 0) -> None:
        if not math.isnan(accuracy):
            self._recent.append(accuracy)
            for m in MILESTONES:
                if accuracy >= m and self.milestones[str(m)] is None:
                    self.milestones[str(m)] = step
                    self.milestone_labels[str(m)] = labeled
        mean = float(np.mean(self._recent)) if self._recent else math.nan
        std = float(np.std(self._recent)) if self._recent else math.nan
        self._csv.writerow([_fmt(v) for v in (step, disc_loss, gen_loss, accuracy, mean, std,
                                              fjd, labeled, executed)])
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_metrics(path) -> list[dict]:
    with Path(path).open(newline="") as fh:
        first = fh.readline().strip()
        if first != METRICS_SCHEMA:
            raise ValueError(f"{path}: unexpected schema line {first!r}")
        return list(csv.DictReader(fh))


@dataclass
class RunSummary:
    mode: str
    seed: int
    steps: int
    epoch_size: int
    stop_reason: str
    milestones: dict
    milestone_labels: dict
    final_accuracy: float
    labels_pool: int
    labels_executed: int = 0
    checkpoint: str = ""
    extra: dict = field(default_factory=dict)

    def write(self, path) -> None:
        Path(path).write_text(json.dumps(asdict(self), indent=2, sort_keys=True) + "\n")


def labeled_pool(config: ExperimentConfig) -> tuple[np.ndarray, np.ndarray]:
    """The first ``dataset_size`` points of a seeded shuffle, labelled by simulated execution."""
    space = config.space
    order = np.random.default_rng(config.dataset_seed).permutation(space.size)[:config.dataset_size]
    idx = np.stack(np.unravel_index(order, space.cardinalities), axis=1).astype(np.int64)
    return idx, config.simulator.labels(idx)


def _require_simulator(config: ExperimentConfig, what: str) -> None:
    if config.http is not None:
        raise ValueError(f"{what} needs the simulator driver (accuracy is measured against its clusters)")


def run_passive(config: ExperimentConfig, out_dir=None) -> RunSummary:
    """Train on a pre-labelled pool until the accuracy target or the step limit."""
    _require_simulator(config, "passive training")
    out = Path(out_dir or config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    model = config.new_model()
    idx, labels = labeled_pool(config)
    state = ActiveState.empty(config.space.n_features)
    state.executed.append(idx, labels)
    rng = np.random.default_rng([config.seed, 1])
    half = config.batch_size // 2
    reason = "max_steps"
    acc = math.nan
    d_sum = g_sum = 0.0
    n_since = 0
    with MetricsWriter(out / "metrics.csv", config.rolling_window) as metrics:
        for step in range(1, config.step_limit + 1):
            real_idx, real_y = sample_union(rng, [state.executed], half,
                                            balanced=config.balanced_batches,
                                            num_labels=model.num_labels)
            d, g = model.train_step(encode_indices(config.space, real_idx), real_y)
            d_sum += d
            g_sum += g
            n_since += 1
            if step % config.eval_interval and step != config.step_limit:
                continue
            acc = eval_generator_accuracy(model, config.simulator, config.eval_sample_size).accuracy
            metrics.row(step, d_sum / n_since, g_sum / n_since, acc,
                        labeled=config.dataset_size, executed=0)
            d_sum = g_sum = 0.0
            n_since = 0
            if acc >= config.accuracy_target:
                reason = "accuracy"
                break
    ckpt = out / "model.ckpt"
    history = ExecutionHistory(idx, labels).last(config.history_size)
    save_with_history(model, ckpt, history)
    summary = RunSummary("passive", config.seed, model.steps, config.epoch_size, reason,
                         metrics.milestones, metrics.milestone_labels, acc,
                         config.dataset_size, 0, str(ckpt))
    summary.write(out / "summary.json")
    return summary


def run_active(config: ExperimentConfig, out_dir=None) -> RunSummary:
    """Active training starting from a pre-labelled pool of ``dataset_size`` points."""
    _require_simulator(config, "active training")
    out = Path(out_dir or config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    model = config.new_model()
    idx, labels = labeled_pool(config)
    state = ActiveState.empty(config.space.n_features)
    state.executed.append(idx, labels)
    state.prelabeled = len(labels)
    rng = np.random.default_rng([config.seed, 2])
    with MetricsWriter(out / "metrics.csv", config.rolling_window) as metrics:
        def on_record(r: IterationRecord) -> None:
            metrics.row(r.step, r.disc_loss, r.gen_loss, r.accuracy, r.fjd,
                        r.labels_consumed, r.executed)

        model, log_, state = train_active(model, config.driver(), config.al, state, rng=rng,
                                          ground_truth=config.simulator, on_record=on_record)
    ckpt = out / "model.ckpt"
    history = ExecutionHistory(state.executed.indices, state.executed.labels)
    save_with_history(model, ckpt, history.last(config.history_size))
    last = log_.records[-1] if log_.records else None
    summary = RunSummary("active", config.seed, model.steps, config.epoch_size, log_.stop_reason,
                         metrics.milestones, metrics.milestone_labels,
                         last.accuracy if last else math.nan, config.dataset_size,
                         last.executed if last else 0, str(ckpt),
                         {"iterations": len(log_.records),
                          "self_labeled": last.self_labeled if last else 0,
                          "final_fjd": last.fjd if last else math.nan})
    summary.write(out / "summary.json")
    return summary


COMPARE_HEADER = ("size", "pcgan_positive", "pcgan_unique", "acgan_positive", "acgan_unique",
                  "random_positive", "random_unique", "random_expected")


def run_compare(config: ExperimentConfig, checkpoints: Sequence, sizes: Sequence[int],
                out_dir=None, requirement: int = 1) -> list[dict]:
    """Positive and unique counts per suite size for each model and the random baseline.

    ``checkpoints`` holds the passive-trained and active-trained model (either
    a path or an in-memory model); a missing one leaves its columns empty.
    """
    _require_simulator(config, "comparison")
    models = []
    for src in checkpoints:
        if isinstance(src, CGANModel):
            models.append(src)
        else:
            if not Path(src).exists():
                raise FileNotFoundError(f"checkpoint not found: {src}")
            models.append(checkpoint.load(src))
    models = (models + [None, None])[:2]
    sim = config.simulator
    rate = positive_count(sim) / config.space.size
    rng = np.random.default_rng([config.seed, 3])
    rows = []
    for size in sizes:
        row = {"size": int(size)}
        for name, model in zip(("pcgan", "acgan"), models):
            if model is None:
                row[f"{name}_positive"] = row[f"{name}_unique"] = ""
                continue
            idx = generate_suite_indices(model, requirement, int(size), seed=config.seed)
            row[f"{name}_positive"] = int(sim.labels(idx).sum())
            row[f"{name}_unique"] = len(np.unique(idx, axis=0))
        idx = random_suite_indices(config.space, int(size), rng)
        row["random_positive"] = int(sim.labels(idx).sum())
        row["random_unique"] = len(np.unique(idx, axis=0))
        row["random_expected"] = size * rate
        rows.append(row)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with (out / "compare.csv").open("w", newline="") as fh:
            w = csv.DictWriter(fh, COMPARE_HEADER, lineterminator="\n")
            w.writeheader()
            w.writerows(rows)
    return rows


def run_baseline(config: ExperimentConfig, size: int, out_dir=None) -> dict:
    """Uniform random suite, labelled against the simulator when available."""
    rng = np.random.default_rng([config.seed, 4])
    idx = random_suite_indices(config.space, size, rng)
    points = [config.space.indices_to_point(r) for r in idx]
    positives = config.simulator.labels(idx) if config.http is None else None
    result = {"size": size, "unique": len(np.unique(idx, axis=0)),
              "positive": int(positives.sum()) if positives is not None else None}
    if out_dir is not None:
        write_suite_csv(Path(out_dir) / "baseline.csv", config.space, points, positives)
    return result


def run_generate(config: Optional[ExperimentConfig], checkpoint_path, requirement: int,
                 size: int, *, unique: bool = False, seed: Optional[int] = None,
                 out_dir=None) -> dict:
    model = checkpoint.load(checkpoint_path)
    idx = generate_suite_indices(model, requirement, size, seed=seed, unique=unique)
    positives = None
    if config is not None and config.http is None and config.space == model.space:
        positives = config.simulator.labels(idx)
    points = [model.space.indices_to_point(r) for r in idx]
    out = Path(out_dir or ".")
    write_suite_csv(out / "suite.csv", model.space, points, positives)
    return {"size": len(points), "unique": len(np.unique(idx, axis=0)) if len(idx) else 0,
            "positive": int(positives.sum()) if positives is not None else None}


def simulate(config: ExperimentConfig, out_dir) -> dict:
    """Dataset summary and cluster table for the configured simulator."""
    sim = config.simulator
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    pos = positive_count(sim)
    summary = {"points": sim.space.size, "positives": pos, "base_rate": pos / sim.space.size,
               "clusters": len(sim.clusters), "threshold": sim.threshold,
               "base_time": sim.base_time, "epoch_size": config.epoch_size}
    with (out / "summary.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(summary.keys())
        w.writerow([_fmt(v) for v in summary.values()])
    with (out / "clusters.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        names = sim.space.names
        w.writerow(["cluster"] + [f"{n}_lo" for n in names] + [f"{n}_hi" for n in names]
                   + ["delay", "points"])
        for i, c in enumerate(sim.clusters):
            w.writerow([i, *c.lows, *c.highs, repr(c.delay), c.volume])
    return summary


def run_update(config: ExperimentConfig, checkpoint_path, out_dir=None,
               out_checkpoint=None) -> UpdateReport:
    """Replay history on the configured SUT and retrain if its behaviour changed."""
    ground_truth = config.simulator if config.http is None else None
    out = Path(out_dir or config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    model, report, log_ = devops_update(checkpoint_path, config.driver(), config.al,
                                        ground_truth=ground_truth, out_path=out_checkpoint,
                                        history_size=config.history_size)
    if log_ is not None:
        with MetricsWriter(out / "update_metrics.csv", config.rolling_window) as metrics:
            for r in log_.records:
                metrics.row(r.step, r.disc_loss, r.gen_loss, r.accuracy, r.fjd,
                            r.labels_consumed, r.executed)
    (out / "update.json").write_text(json.dumps(asdict(report), indent=2, sort_keys=True) + "\n")
    return report
