"""Helpers shared by the integration-style tests."""

import base64
import json
import socket
import threading
import time
from collections import Counter
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import jwt
import uvicorn
from cryptography.hazmat.primitives.asymmetric import rsa

from esg.core import HandlerError
from esg.gc import GcPolicy, run_gc
from esg.schema import BooleanNode, NumberNode, ObjectNode, ServiceSpec, ServiceVersion, StringNode
from esg.worker import Worker

# -- a toy service whose handlers sleep on request -------------------------

TOY_INPUT = ObjectNode(
    fields={
        "sleep": NumberNode(minimum=0, maximum=600),
        "token": StringNode(),
        "fail": BooleanNode(),
        "bad_output": BooleanNode(),
    },
    required={"sleep", "token"},
)
TOY_OUTPUT = ObjectNode(
    fields={"token": StringNode(), "slept": NumberNode(minimum=0)},
    required={"token", "slept"},
)


class ToyHandler:
    """Sleeps ``sleep`` seconds, echoes ``token``; counts calls per token."""

    def __init__(self, tag="v1"):
        self.tag = tag
        self.calls = Counter()
        self._lock = threading.Lock()

    def __call__(self, payload, progress=None):
        with self._lock:
            self.calls[payload["token"]] += 1
        time.sleep(payload["sleep"])
        if payload.get("fail"):
            raise HandlerError("bad geometry")
        if payload.get("bad_output"):
            return {"token": payload["token"], "slept": -1}
        return {"token": f"{self.tag}:{payload['token']}", "slept": payload["sleep"]}


def toy_service(handler=None, fit_handler=None, max_runtime=None) -> ServiceSpec:
    handler = handler or ToyHandler()
    kw = {}
    if fit_handler is not None:
        kw = dict(fit_input=TOY_INPUT, fit_output=TOY_OUTPUT, fit_handler=fit_handler)
    return ServiceSpec("toy", {"v1": ServiceVersion(TOY_INPUT, TOY_OUTPUT, handler,
                                                    max_runtime=max_runtime, **kw)})


# importable by worker subprocesses as "support:TOY_SPEC"
TOY_SPEC = toy_service()


# -- background process roles as threads -----------------------------------

class Stack:
    """Workers and a GC loop running on threads against one broker."""

    def __init__(self, spec, broker, workers=1, gc_policy=None, gc_interval=0.2, **worker_kw):
        self.shutdown = threading.Event()
        worker_kw.setdefault("poll_wait", 0.2)
        worker_kw.setdefault("grace", 5.0)
        self.workers = [Worker(spec, broker, **worker_kw) for _ in range(workers)]
        self.threads = [threading.Thread(target=w.run, args=(self.shutdown,), daemon=True)
                        for w in self.workers]
        if gc_policy is not None:
            self.threads.append(threading.Thread(
                target=run_gc, args=(broker, gc_policy, gc_interval, self.shutdown), daemon=True
            ))

    def __enter__(self):
        for t in self.threads:
            t.start()
        return self

    def __exit__(self, *exc):
        self.shutdown.set()
        for t in self.threads:
            t.join(timeout=10)


def free_port() -> int:
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


class LiveServer:
    """uvicorn serving an ASGI app on a localhost port from a thread."""

    def __init__(self, app):
        self.port = free_port()
        self.url = f"http://127.0.0.1:{self.port}"
        config = uvicorn.Config(app, host="127.0.0.1", port=self.port, log_config=None,
                                access_log=False, lifespan="off")
        self.server = uvicorn.Server(config)
        self.thread = threading.Thread(target=self.server.run, daemon=True)

    def __enter__(self):
        self.thread.start()
        deadline = time.monotonic() + 10
        while not self.server.started:
            if time.monotonic() > deadline:
                raise RuntimeError("server did not start")
            time.sleep(0.01)
        return self

    def __exit__(self, *exc):
        self.server.should_exit = True
        self.thread.join(timeout=10)


# -- identity provider stub -------------------------------------------------

ISSUER = "https://idp.test/realms/esg"
AUDIENCE = "pv-forecast"


def _b64(n: int) -> str:
    raw = n.to_bytes((n.bit_length() + 7) // 8, "big")
    return base64.urlsafe_b64encode(raw).rstrip(b"=").decode()


class StubIdp:
    """Holds an RSA key pair, serves its JWKS over HTTP and mints tokens."""

    def __init__(self, kid="key-1"):
        self.kid = kid
        self.key = rsa.generate_private_key(public_exponent=65537, key_size=2048)
        pub = self.key.public_key().public_numbers()
        self.jwks = {"keys": [{"kty": "RSA", "kid": kid, "use": "sig", "alg": "RS256",
                               "n": _b64(pub.n), "e": _b64(pub.e)}]}
        self.hits = 0
        idp = self

        class Handler(BaseHTTPRequestHandler):
            def do_GET(self):
                idp.hits += 1
                body = json.dumps(idp.jwks).encode()
                self.send_response(200)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(body)))
                self.end_headers()
                self.wfile.write(body)

            def log_message(self, *args):
                pass

        self.server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self.server.daemon_threads = True
        self.url = f"http://127.0.0.1:{self.server.server_address[1]}/certs"
        threading.Thread(target=self.server.serve_forever, daemon=True).start()

    def token(self, key=None, kid=None, **claims) -> str:
        now = int(time.time())
        body = {"iss": ISSUER, "aud": AUDIENCE, "iat": now, "exp": now + 300,
                "sub": "ems-1", "roles": ["pv-user"]}
        body.update(claims)
        body = {k: v for k, v in body.items() if v is not None}
        return jwt.encode(body, key or self.key, algorithm="RS256",
                          headers={"kid": kid or self.kid})

    def close(self):
        self.server.shutdown()
        self.server.server_close()
