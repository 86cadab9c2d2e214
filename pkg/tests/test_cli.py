import json
import os
import signal
import subprocess
import sys
import time

import httpx
import pytest

from esg.api import create_app
from esg.broker import MemoryBroker
from esg.cli import main
from esg.config import Settings, load_settings
from esg.core import EndpointKind
from esg.pv import pv_service
from support import LiveServer, Stack, free_port, toy_service

PV_FIT = {
    "position": {"latitude": 49.0, "longitude": 8.4},
    "sunrise": "2024-06-21T06:00:00Z",
    "sunset": "2024-06-21T18:00:00Z",
    "measurements": [{"time": "2024-06-21T12:00:00Z", "value": 3.0}],
}


# -- configuration ---------------------------------------------------------

def test_precedence_flags_over_env_over_file(tmp_path):
    cfg = tmp_path / "esg.toml"
    cfg.write_text('broker_url = "redis://file:1/0"\nbind_addr = "0.0.0.0:9000"\n'
                   'gc_retain_after_fetch_s = 60\nauth_enabled = true\n'
                   'auth_jwks_url = "http://idp/certs"\n')
    env = {"ESG_BROKER_URL": "redis://env:2/0", "ESG_GC_RETAIN_AFTER_FETCH_S": "120"}
    s = load_settings(str(cfg), env=env, overrides={"broker_url": "redis://flag:3/0",
                                                    "bind_addr": None})
    assert s.broker_url == "redis://flag:3/0"
    assert s.gc_retain_after_fetch_s == 120.0
    assert s.bind() == ("0.0.0.0", 9000)
    assert s.auth_enabled is True
    assert load_settings(env={}) == Settings()


def test_config_file_from_env_and_errors(tmp_path):
    cfg = tmp_path / "c.toml"
    cfg.write_text('log_level = "DEBUG"\n')
    assert load_settings(env={"ESG_CONFIG": str(cfg)}).log_level == "DEBUG"
    cfg.write_text("colour = 1\n")
    with pytest.raises(ValueError):
        load_settings(str(cfg), env={})
    with pytest.raises(ValueError):
        load_settings(env={"ESG_AUTH_ENABLED": "maybe"})
    with pytest.raises(ValueError):
        load_settings(env={"ESG_GC_INTERVAL_S": "soon"})


def test_derived_objects(tmp_path):
    s = Settings(worker_subscriptions="v1:request, v2:fit-parameters",
                 auth_enabled=True, auth_jwks_url="http://idp/certs",
                 auth_issuers="a,b", auth_required_claim="roles=pv-user",
                 gc_retain_after_fetch_s=5, gc_absolute_ttl_s=50)
    assert s.subscriptions() == [("v1", EndpointKind.REQUEST), ("v2", EndpointKind.FIT_PARAMETERS)]
    policy = s.auth_policy()
    assert policy.accepted_issuers == ("a", "b")
    assert policy.required_claim == ("roles", "pv-user")
    assert s.gc_policy().retain_after_fetch == 5
    assert s.load_service() is pv_service
    assert Settings().subscriptions() is None
    assert Settings().auth_policy().enabled is False
    with pytest.raises(ValueError):
        Settings(service="nocolon").load_service()


# -- openapi ---------------------------------------------------------------

def test_openapi_output_is_byte_stable():
    runs = [subprocess.run([sys.executable, "-m", "esg.cli", "openapi", "--version", "v1"],
                           capture_output=True, check=True).stdout for _ in range(2)]
    assert runs[0] == runs[1]
    doc = json.loads(runs[0])
    assert len(doc["paths"]) == 7


def test_openapi_unknown_version(capsys):
    assert main(["openapi", "--version", "v9"]) == 2
    assert "unknown version" in capsys.readouterr().err


def test_usage_errors():
    assert main([]) == 2
    assert main(["submit", "--version", "v1"]) == 2


# -- submit ----------------------------------------------------------------

@pytest.fixture
def live_pv():
    broker = MemoryBroker()
    with LiveServer(create_app(pv_service, broker)) as server:
        with Stack(pv_service, broker, workers=1, poll_wait=0.02):
            yield server


def submit(url, path, *extra):
    return main(["submit", "--base-url", url, "--version", "v1", "--input", str(path),
                 "--poll-initial", "0.05", *extra])


def test_submit_fit_and_wait(live_pv, tmp_path, capsys):
    path = tmp_path / "fit.json"
    path.write_text(json.dumps(PV_FIT))
    assert submit(live_pv.url, path, "--kind", "fit-parameters", "--wait") == 0
    out = json.loads(capsys.readouterr().out)
    assert out["parameters"]["peak_power_kw"] == pytest.approx(3.0)


def test_submit_without_wait_prints_handle(live_pv, tmp_path, capsys):
    path = tmp_path / "fit.json"
    path.write_text(json.dumps(PV_FIT))
    assert submit(live_pv.url, path, "--kind", "fit-parameters") == 0
    out = json.loads(capsys.readouterr().out)
    assert out["status_url"].endswith(f"/v1/fit-parameters/{out['task_ID']}/status/")


def test_submit_invalid_payload_exits_2(live_pv, tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(dict(PV_FIT, sunrise="dawn")))
    assert submit(live_pv.url, path, "--kind", "fit-parameters", "--wait") == 2
    detail = json.loads(capsys.readouterr().out)["detail"]
    assert detail == [{"loc": "/sunrise", "msg": "expected RFC 3339 date-time"}]


def test_submit_failed_task_exits_1(live_pv, tmp_path, capsys):
    path = tmp_path / "night.json"
    path.write_text(json.dumps(dict(PV_FIT, measurements=[
        {"time": "2024-06-21T23:00:00Z", "value": 1.0}])))
    assert submit(live_pv.url, path, "--kind", "fit-parameters", "--wait") == 1
    assert "daylight" in capsys.readouterr().out


def test_submit_unreachable_exits_3(tmp_path, capsys):
    path = tmp_path / "fit.json"
    path.write_text(json.dumps(PV_FIT))
    assert submit(f"http://127.0.0.1:{free_port()}", path, "--wait") == 3
    assert "cannot reach" in capsys.readouterr().err


def test_submit_timeout_exits_3(tmp_path, capsys):
    broker = MemoryBroker()
    spec = toy_service()
    path = tmp_path / "slow.json"
    path.write_text(json.dumps({"sleep": 5, "token": "t"}))
    with LiveServer(create_app(spec, broker)) as server:
        with Stack(spec, broker, workers=1, poll_wait=0.02, grace=0.1):
            code = submit(server.url, path, "--wait", "--max-wait", "0.5")
    assert code == 3


def test_submit_bad_input_file(tmp_path):
    assert submit("http://127.0.0.1:1", tmp_path / "missing.json") == 2


# -- process roles ---------------------------------------------------------

def _spawn(args, env):
    return subprocess.Popen([sys.executable, "-m", "esg.cli", *args], env=env,
                            stdout=subprocess.PIPE, stderr=subprocess.PIPE)


def test_serve_roles_end_to_end(resp_server, tmp_path):
    port = free_port()
    env = dict(os.environ, ESG_BROKER_URL=resp_server.url,
               ESG_BROKER_NAMESPACE=f"cli{port}", ESG_BIND_ADDR=f"127.0.0.1:{port}",
               ESG_WORKER_HEARTBEAT_S="1", ESG_WORKER_VISIBILITY_S="10",
               ESG_GC_INTERVAL_S="0.5")
    procs = [_spawn(["serve-api"], env), _spawn(["serve-worker"], env), _spawn(["serve-gc"], env)]
    try:
        url = f"http://127.0.0.1:{port}"
        deadline = time.monotonic() + 20
        while True:
            try:
                httpx.get(f"{url}/v1/openapi.json").raise_for_status()
                break
            except httpx.HTTPError:
                assert time.monotonic() < deadline, procs[0].stderr.read1().decode()
                time.sleep(0.1)
        path = tmp_path / "fit.json"
        path.write_text(json.dumps(PV_FIT))
        done = subprocess.run(
            [sys.executable, "-m", "esg.cli", "submit", "--kind", "fit-parameters",
             "--version", "v1", "--input", str(path), "--wait", "--poll-initial", "0.1",
             "--max-wait", "20"],
            env=dict(env, ESG_BASE_URL=url), capture_output=True, timeout=30,
        )
        assert done.returncode == 0, done.stderr
        assert json.loads(done.stdout)["parameters"]["peak_power_kw"] == pytest.approx(3.0)
    finally:
        for p in procs:
            p.send_signal(signal.SIGINT)
        codes = [p.wait(timeout=20) for p in procs]
    assert codes == [0, 0, 0]
    worker_log = procs[1].stdout.read().decode().splitlines()
    records = [json.loads(line) for line in worker_log if line.startswith("{")]
    assert any(r["msg"] == "task finished" and r["verdict"] == "success" for r in records)
