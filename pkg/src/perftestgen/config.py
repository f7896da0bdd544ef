"""Experiment configuration loaded from a TOML file.

Schema (every table optional, defaults shown)::

    mode = "passive"            # passive | active | generate | baseline | devops
    seed = 0
    dataset_size = 3100000      # pre-labelled pool size
    dataset_seed = 0            # shuffles the full space before taking the pool
    batch_size = 64
    accuracy_target = 0.96
    max_steps = 0               # 0 -> 2 * epoch size
    eval_interval = 50
    eval_sample_size = 100
    rolling_window = 100
    learning_rate = 1e-4
    gen_learning_rate = 0.0     # 0 -> same as learning_rate
    beta1 = 0.9
    beta2 = 0.999
    balanced_batches = true
    history_size = 10000

    [space]                     # omit for the 20x62x50x50 benchmark space
    variables = [{name = "CID", kind = "integer-range", lo = 1, hi = 20}, ...]

    [simulator]
    base_time = 0.05
    threshold = 1.0
    cluster_seed = 0            # placement seed for generated clusters
    clusters = [{lows = [..], highs = [..], delay = 5.0}, ...]   # explicit boxes
    remove_clusters = [0, 1]    # drop clusters by index after loading

    [driver]
    kind = "simulator"          # or "http"
    base_url = "http://localhost:8080/rubis"
    requests = ["/ViewItem.php?itemId={IID}", ...]
    timeout = 10.0
    derived = {CN = "cat{CID}"}

    [active]                    # active-learning knobs
    test_budget = 500
    fjd_threshold = 0.5
    uncertain_fraction = 0.5
    max_iterations = 200
    candidates_per_iteration = 1000
    steps_per_iteration = 50
    fjd_sample_size = 2000
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from .active import ALConfig
from .cgan import CGANModel
from .codec import InputSpace, default_space
from .drivers import RUBIS_TEMPLATE, HttpDriver, HttpDriverConfig, SimulatorDriver
from .simulator import BottleneckCluster, SimulatorConfig, default_benchmark, remove_clusters

MODES = ("passive", "active", "generate", "baseline", "devops")


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    mode: str = "passive"
    seed: int = 0
    dataset_size: int = 3_100_000
    dataset_seed: int = 0
    batch_size: int = 64
    accuracy_target: float = 0.96
    max_steps: int = 0
    eval_interval: int = 50
    eval_sample_size: int = 100
    rolling_window: int = 100
    learning_rate: float = 1e-4
    gen_learning_rate: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.999
    balanced_batches: bool = True
    history_size: int = 10_000
    simulator: SimulatorConfig = field(default_factory=default_benchmark)
    http: Optional[HttpDriverConfig] = None
    al: ALConfig = field(default_factory=ALConfig)
    out_dir: Path = Path("runs")

    @property
    def space(self) -> InputSpace:
        return self.simulator.space

    @property
    def epoch_size(self) -> int:
        return epoch_size(self.dataset_size, self.batch_size)

    @property
    def step_limit(self) -> int:
        return self.max_steps or 2 * self.epoch_size

    def validate(self) -> None:
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.batch_size < 2 or self.batch_size % 2:
            raise ConfigError("batch_size must be even (half real, half fake)")
        if not 1 <= self.dataset_size <= self.space.size:
            raise ConfigError(f"dataset_size must be in [1, {self.space.size}]")
        if not (self.learning_rate > 0 and self.gen_learning_rate >= 0
                and 0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ConfigError("learning rates must be positive and betas in [0, 1)")
        if self.eval_interval < 1 or self.rolling_window < 1:
            raise ConfigError("eval_interval and rolling_window must be >= 1")
        try:
            self.al.validate()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def new_model(self) -> CGANModel:
        return CGANModel(self.space, seed=self.seed, learning_rate=self.learning_rate,
                         gen_learning_rate=self.gen_learning_rate or None,
                         beta1=self.beta1, beta2=self.beta2)

    def driver(self):
        if self.http is not None:
            return HttpDriver(self.http, self.space)
        return SimulatorDriver(self.simulator)


def epoch_size(dataset_size: int, batch_size: int = 64) -> int:
    """Sampling steps per pass over the data set."""
    return dataset_size // batch_size


def _pick(table: dict, cls, exclude=()) -> dict:
    names = {f.name for f in dataclasses.fields(cls)} - set(exclude)
    unknown = set(table) - names
    if unknown:
        raise ConfigError(f"unknown keys for {cls.__name__}: {sorted(unknown)}")
    return dict(table)


def simulator_from_table(table: dict, space: Optional[InputSpace]) -> SimulatorConfig:
    table = dict(table)
    removed = table.pop("remove_clusters", [])
    seed = int(table.pop("cluster_seed", 0))
    base_time = float(table.pop("base_time", 0.05))
    threshold = float(table.pop("threshold", 1.0))
    clusters = table.pop("clusters", None)
    if table:
        raise ConfigError(f"unknown simulator keys: {sorted(table)}")
    if clusters is None:
        if space is not None and space != default_space():
            raise ConfigError("a custom space needs explicit [simulator].clusters")
        sim = default_benchmark(seed)
    else:
        boxes = tuple(BottleneckCluster(c["lows"], c["highs"], float(c.get("delay", 5.0)))
                      for c in clusters)
        sim = SimulatorConfig(space or default_space(), boxes, seed=seed)
    sim = dataclasses.replace(sim, base_time=base_time, threshold=threshold)
    if removed:
        sim = remove_clusters(sim, removed)
    return sim


def config_from_dict(data: dict[str, Any], base_dir: Path = Path(".")) -> ExperimentConfig:
    data = dict(data)
    space = InputSpace.from_dict(data.pop("space")) if "space" in data else None
    try:
        sim = simulator_from_table(data.pop("simulator", {}), space)
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"bad simulator table: {exc}") from exc

    http = None
    driver = data.pop("driver", {"kind": "simulator"})
    kind = driver.get("kind", "simulator")
    if kind == "http":
        http = HttpDriverConfig(
            base_url=driver["base_url"],
            request_template=tuple(driver.get("requests", RUBIS_TEMPLATE)),
            timeout=float(driver.get("timeout", 10.0)),
            threshold=float(driver.get("threshold", sim.threshold)),
            derived=dict(driver.get("derived", {"CN": "cat{CID}"})),
        )
        try:
            http.validate(sim.space)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    elif kind != "simulator":
        raise ConfigError(f"unknown driver kind {kind!r}")

    al_table = data.pop("active", {})
    al = ALConfig(**_pick(al_table, ALConfig))
    output = data.pop("output", {})
    out_dir = Path(output.get("dir", "runs"))
    if not out_dir.is_absolute():
        out_dir = base_dir / out_dir

    top = _pick(data, ExperimentConfig, exclude=("simulator", "http", "al", "out_dir"))
    cfg = ExperimentConfig(simulator=sim, http=http, al=al, out_dir=out_dir, **top)
    cfg.al.batch_size = cfg.batch_size
    cfg.al.eval_sample_size = cfg.eval_sample_size
    cfg.al.balanced_batches = cfg.balanced_batches
    if cfg.al.accuracy_target is None and "accuracy_target" in top:
        cfg.al.accuracy_target = cfg.accuracy_target
    cfg.validate()
    return cfg


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        with path.open("rb") as fh:
            data = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return config_from_dict(data, path.parent)
