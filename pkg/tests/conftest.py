import threading
import uuid

import pytest
from fakeredis import TcpFakeServer

from esg.broker import MemoryBroker
from esg.broker.resp import RespBroker


class RespServer:
    """A RESP2 server on an ephemeral localhost port, served from a thread."""

    def __init__(self):
        self.server = TcpFakeServer(("127.0.0.1", 0), server_type="redis")
        self.server.daemon_threads = True
        self.thread = threading.Thread(target=self.server.serve_forever, daemon=True)
        self.thread.start()
        host, port = self.server.server_address
        self.url = f"redis://{host}:{port}/0"

    def stop(self):
        self.server.shutdown()
        self.server.server_close()


@pytest.fixture(scope="session")
def resp_server():
    server = RespServer()
    yield server
    server.stop()


@pytest.fixture
def resp_broker_factory(resp_server):
    """Handles on a fresh namespace; every call returns a new handle on the same store."""
    namespace = f"t{uuid.uuid4().hex[:12]}"
    handles = []

    def make():
        handle = RespBroker(resp_server.url, namespace=namespace)
        handles.append(handle)
        return handle

    yield make
    for handle in handles:
        handle.close()


@pytest.fixture
def memory_broker_factory():
    shared = MemoryBroker()
    return lambda: shared


@pytest.fixture(params=["memory", "resp"])
def broker_factory(request):
    return request.getfixturevalue(f"{request.param}_broker_factory")


@pytest.fixture
def broker(broker_factory):
    return broker_factory()


# -- acceptance reporting --------------------------------------------------

_acceptance_lines: list[str] = []


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.failed):
        return
    if "test_acceptance.py" not in report.nodeid:
        return
    name = report.nodeid.split("::")[-1]
    verdict = "PASS" if report.passed else "FAIL"
    _acceptance_lines.append(f"{verdict}  {name}")


def pytest_terminal_summary(terminalreporter):
    if not _acceptance_lines:
        return
    terminalreporter.section("acceptance criteria")
    for line in _acceptance_lines:
        terminalreporter.write_line(line)
