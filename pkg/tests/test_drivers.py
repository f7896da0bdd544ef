import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qs, urlparse

import numpy as np
import pytest

from perftestgen.codec import default_space
from perftestgen.drivers import (RUBIS_TEMPLATE, ExecutionError, HttpDriver, HttpDriverConfig,
                                 SimulatorDriver, execute_driver, execute_http, oracle_label,
                                 split_outcomes)
from perftestgen.simulator import ExecutedTest

SPACE = default_space()


class StubServer:
    """Local SUT stand-in: records request paths, sleeps, fails on a chosen item id."""

    def __init__(self):
        self.delay = 0.0
        self.fail_item = None
        self.paths = []
        stub = self

        class Handler(BaseHTTPRequestHandler):
            def do_GET(self):
                stub.paths.append(self.path)
                time.sleep(stub.delay)
                query = parse_qs(urlparse(self.path).query)
                if stub.fail_item is not None and query.get("itemId") == [str(stub.fail_item)]:
                    self.send_response(503)
                    self.end_headers()
                    return
                body = b"ok"
                self.send_response(200)
                self.send_header("Content-Length", str(len(body)))
                self.end_headers()
                self.wfile.write(body)

            def log_message(self, *args):
                pass

        self.httpd = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self.url = f"http://127.0.0.1:{self.httpd.server_address[1]}/rubis"
        self.thread = threading.Thread(target=self.httpd.serve_forever, daemon=True)
        self.thread.start()

    def close(self):
        self.httpd.shutdown()
        self.httpd.server_close()


@pytest.fixture
def stub():
    s = StubServer()
    yield s
    s.close()


def test_oracle_label_is_strict():
    assert oracle_label(1.0, 1.0) == 0
    assert oracle_label(1.0001, 1.0) == 1


def test_three_requests_in_template_order(stub):
    cfg = HttpDriverConfig(stub.url)
    result = execute_http(cfg, SPACE, (3, 7, 11, 13))
    assert stub.paths == [
        "/rubis/SearchItemsByRegion.php?category=3&categoryName=cat3&region=7",
        "/rubis/ViewItem.php?itemId=11",
        "/rubis/ViewUserInfo.php?userId=13",
    ]
    assert isinstance(result, ExecutedTest) and result.label == 0


def test_slow_stub_crosses_threshold(stub):
    stub.delay = 0.4
    result = execute_http(HttpDriverConfig(stub.url), SPACE, (1, 1, 1, 1))
    assert result.t_exe == pytest.approx(1.2, abs=0.1)
    assert result.label == 1


def test_fault_injection_keeps_order(stub):
    stub.fail_item = 5
    driver = HttpDriver(HttpDriverConfig(stub.url), SPACE)
    points = [(1, 1, i, 1) for i in range(1, 11)]
    outcomes = execute_driver(driver, points)
    assert len(outcomes) == 10
    ok, failed = split_outcomes(outcomes)
    assert len(ok) == 9 and len(failed) == 1
    assert isinstance(outcomes[4], ExecutionError) and outcomes[4].point == (1, 1, 5, 1)
    assert [o.point for o in ok] == [p for p in points if p[2] != 5]


def test_unreachable_host_is_an_execution_error():
    cfg = HttpDriverConfig("http://127.0.0.1:9", timeout=1.0)
    out = HttpDriver(cfg, SPACE).execute([(1, 1, 1, 1)])
    assert isinstance(out[0], ExecutionError)


def test_out_of_domain_point_is_reported_not_raised(stub):
    out = HttpDriver(HttpDriverConfig(stub.url), SPACE).execute([(0, 1, 1, 1)])
    assert isinstance(out[0], ExecutionError) and stub.paths == []


def test_template_validation():
    with pytest.raises(ValueError):
        HttpDriverConfig("http://x", RUBIS_TEMPLATE, derived={}).validate(SPACE)
    with pytest.raises(ValueError):
        HttpDriverConfig("http://x", ("/a?{NOPE}",)).validate(SPACE)
    HttpDriverConfig("http://x").validate(SPACE)


def test_simulator_driver(bench):
    driver = SimulatorDriver(bench)
    rng = np.random.default_rng(0)
    points = [SPACE.indices_to_point(r) for r in SPACE.sample_indices(rng, 1000)]
    a, b = driver.execute(points), driver.execute(points)
    assert len(a) == 1000 and a == b
    assert all(o.label == oracle_label(o.t_exe, bench.threshold) for o in a)
    assert execute_driver(driver, []) == []
