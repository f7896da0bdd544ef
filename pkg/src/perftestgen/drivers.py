"""Test drivers: run test points against a SUT and label them with the oracle.

Two drivers are provided: :class:`SimulatorDriver` (computed latencies,
vectorised) and :class:`HttpDriver`, which replays a sequence of GET
requests per test and times the whole sequence.  Requests are always
issued one at a time; concurrency would distort the latency being
measured.
"""
from __future__ import annotations

import logging
import string
import time
import urllib.error
import urllib.parse
import urllib.request
from dataclasses import dataclass, field
from typing import Protocol, Sequence, Union

import numpy as np

from .codec import DomainError, InputSpace
from .simulator import ExecutedTest, SimulatorConfig

log = logging.getLogger(__name__)


class ExecutionError(Exception):
    """A single test could not be executed; ``elapsed`` holds the partial timing."""

    def __init__(self, point, message: str, elapsed: float = 0.0):
        super().__init__(f"{point}: {message}")
        self.point = tuple(point)
        self.elapsed = elapsed


Outcome = Union[ExecutedTest, ExecutionError]


def oracle_label(t_exe: float, threshold: float) -> int:
    return int(t_exe > threshold)


class TestDriver(Protocol):
    __test__ = False  # not a pytest class

    space: InputSpace

    def execute(self, points: Sequence[Sequence]) -> list[Outcome]:
        """One outcome per point, in input order."""
        ...


class SimulatorDriver:
    def __init__(self, config: SimulatorConfig):
        self.config = config
        self.space = config.space

    def execute_indices(self, idx: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Vectorised path: times and labels for index rows."""
        t = self.config.times(idx)
        return t, (t > self.config.threshold).astype(np.int64)

    def execute(self, points):
        out: list[Outcome] = []
        for p in points:
            try:
                idx = self.space.point_to_indices(p)
            except DomainError as exc:
                out.append(ExecutionError(p, str(exc)))
                continue
            t = float(self.config.times(idx[None, :])[0])
            out.append(ExecutedTest(tuple(p), t, oracle_label(t, self.config.threshold)))
        return out


RUBIS_TEMPLATE = (
    "/SearchItemsByRegion.php?category={CID}&categoryName={CN}&region={RID}",
    "/ViewItem.php?itemId={IID}",
    "/ViewUserInfo.php?userId={UID}",
)


@dataclass
class HttpDriverConfig:
    """Request sequence for one test.

    ``request_template`` entries use ``{NAME}`` placeholders.  A name is
    bound either to an input variable or to an entry of ``derived``, which
    is itself a template over the input variables (e.g. ``"cat{CID}"``).
    """

    base_url: str
    request_template: tuple[str, ...] = RUBIS_TEMPLATE
    timeout: float = 10.0
    threshold: float = 1.0
    derived: dict[str, str] = field(default_factory=lambda: {"CN": "cat{CID}"})

    def placeholders(self) -> set[str]:
        names = set()
        for tpl in self.request_template:
            names.update(f for _, f, _, _ in string.Formatter().parse(tpl) if f)
        return names

    def validate(self, space: InputSpace) -> None:
        variables = set(space.names)
        unbound = self.placeholders() - variables - set(self.derived)
        if unbound:
            raise ValueError(f"unbound template placeholders: {sorted(unbound)}")
        for name, tpl in self.derived.items():
            used = {f for _, f, _, _ in string.Formatter().parse(tpl) if f}
            if used - variables:
                raise ValueError(f"derived binding {name!r} uses unknown names {sorted(used - variables)}")

    def urls(self, space: InputSpace, point: Sequence) -> list[str]:
        values = {n: str(v) for n, v in zip(space.names, point)}
        values.update({k: tpl.format(**values) for k, tpl in self.derived.items()})
        quoted = {k: urllib.parse.quote(v, safe="") for k, v in values.items()}
        base = self.base_url.rstrip("/")
        return [base + tpl.format(**quoted) for tpl in self.request_template]


def execute_http(config: HttpDriverConfig, space: InputSpace, point: Sequence) -> ExecutedTest:
    """Issue the template's GETs in order; t_exe is the summed wall-clock time."""
    elapsed = 0.0
    for url in config.urls(space, point):
        start = time.perf_counter()
        try:
            with urllib.request.urlopen(url, timeout=config.timeout) as resp:
                resp.read()
                status = resp.status
        except urllib.error.HTTPError as exc:
            elapsed += time.perf_counter() - start
            raise ExecutionError(point, f"HTTP {exc.code} from {url}", elapsed) from exc
        except (urllib.error.URLError, OSError) as exc:
            elapsed += time.perf_counter() - start
            raise ExecutionError(point, f"request to {url} failed: {exc}", elapsed) from exc
        elapsed += time.perf_counter() - start
        if not 200 <= status < 300:
            raise ExecutionError(point, f"HTTP {status} from {url}", elapsed)
    return ExecutedTest(tuple(point), elapsed, oracle_label(elapsed, config.threshold))


class HttpDriver:
    def __init__(self, config: HttpDriverConfig, space: InputSpace):
        config.validate(space)
        self.config = config
        self.space = space

    def execute(self, points):
        out: list[Outcome] = []
        for p in points:
            try:
                self.space.point_to_indices(p)
                out.append(execute_http(self.config, self.space, p))
            except (ExecutionError, DomainError) as exc:
                log.warning("test %s failed: %s", p, exc)
                out.append(exc if isinstance(exc, ExecutionError) else ExecutionError(p, str(exc)))
        return out


def execute_driver(driver: TestDriver, points: Sequence[Sequence]) -> list[Outcome]:
    """Run a batch; individual failures come back as :class:`ExecutionError` entries."""
    if len(points) == 0:
        return []
    return driver.execute(points)


def split_outcomes(outcomes: Sequence[Outcome]) -> tuple[list[ExecutedTest], list[ExecutionError]]:
    ok = [o for o in outcomes if isinstance(o, ExecutedTest)]
    failed = [o for o in outcomes if isinstance(o, ExecutionError)]
    return ok, failed
