"""The user-facing HTTP API: six task endpoints per version plus openapi.json.

The app is stateless; every piece of task state lives on the broker, so any
number of API processes can serve the same service.
"""

from __future__ import annotations

import json
import logging
from typing import Any, Sequence

from starlette.applications import Starlette
from starlette.exceptions import HTTPException
from starlette.middleware import Middleware
from starlette.requests import Request
from starlette.responses import JSONResponse, Response
from starlette.routing import Route

from esg.api.auth import AuthError, Authenticator, AuthPolicy
from esg.broker import Broker, BrokerUnavailable, UnknownTask, with_retry
from esg.core import EndpointKind, TaskEnvelope, new_task_id, parse_task_id
from esg.schema import ServiceSpec, UnknownVersion, UnsupportedEndpoint, emit_openapi, validate

log = logging.getLogger("esg.api")

DEFAULT_MAX_BODY = 10 * 1024 * 1024


class ApiError(Exception):
    def __init__(self, status: int, detail: Any, headers: dict | None = None):
        super().__init__(str(detail))
        self.status = status
        self.detail = detail
        self.headers = headers


def _reject_constant(name: str):
    raise ValueError(f"{name} is not valid JSON")


def _error_response(status: int, detail: Any, headers: dict | None = None) -> JSONResponse:
    return JSONResponse({"detail": detail}, status_code=status, headers=headers)


class TaskApi:
    """Request handlers bound to one service, broker and auth setup."""

    def __init__(self, spec: ServiceSpec, broker: Broker, auth: Authenticator,
                 max_body: int = DEFAULT_MAX_BODY, exempt_openapi: bool = True,
                 broker_attempts: int = 3):
        self.spec = spec
        self.broker = broker
        self.auth = auth
        self.max_body = max_body
        self.exempt_openapi = exempt_openapi
        self.broker_attempts = broker_attempts

    # -- helpers -----------------------------------------------------------

    def _authenticate(self, request: Request) -> dict:
        try:
            return self.auth.authenticate(request.headers)
        except AuthError as exc:
            headers = {"WWW-Authenticate": "Bearer"} if exc.status == 401 else None
            raise ApiError(exc.status, exc.reason, headers) from None

    def _broker(self, fn):
        try:
            return with_retry(fn, attempts=self.broker_attempts, cap=1.0)
        except BrokerUnavailable:
            raise ApiError(503, "message broker unavailable") from None

    def _endpoint(self, request: Request):
        version = request.path_params["version"]
        kind = request.path_params["kind"]
        try:
            return version, EndpointKind(kind), self.spec.resolve(version, kind)
        except (UnknownVersion, UnsupportedEndpoint, ValueError) as exc:
            raise ApiError(404, str(exc)) from None

    def _task_id(self, request: Request) -> str:
        try:
            return parse_task_id(request.path_params["task_id"])
        except ValueError:
            raise ApiError(404, "unknown task") from None

    async def _json_body(self, request: Request) -> Any:
        declared = request.headers.get("content-length")
        if declared is not None and declared.isdigit() and int(declared) > self.max_body:
            raise ApiError(413, f"request body exceeds {self.max_body} bytes")
        body = bytearray()
        async for chunk in request.stream():
            body.extend(chunk)
            if len(body) > self.max_body:
                raise ApiError(413, f"request body exceeds {self.max_body} bytes")
        try:
            return json.loads(body, parse_constant=_reject_constant)
        except (ValueError, UnicodeDecodeError) as exc:
            raise ApiError(422, [{"loc": "", "msg": f"invalid JSON: {exc}"}]) from None

    # -- endpoints ---------------------------------------------------------

    async def post_task(self, request: Request) -> Response:
        self._authenticate(request)
        version, kind, endpoint = self._endpoint(request)
        payload = await self._json_body(request)
        issues = validate(endpoint.input, payload)
        if issues:
            raise ApiError(422, [i.to_json() for i in issues])
        envelope = TaskEnvelope(new_task_id(), kind, version, payload)
        self._broker(lambda: self.broker.enqueue(envelope))
        log.info("task created", extra={"task_id": envelope.task_id, "version": version,
                                        "kind": kind.value})
        return JSONResponse({"task_ID": envelope.task_id}, status_code=201)

    async def get_status(self, request: Request) -> Response:
        self._authenticate(request)
        self._endpoint(request)
        task_id = self._task_id(request)
        try:
            status = self._broker(lambda: self.broker.get_status(task_id))
        except UnknownTask:
            raise ApiError(404, "unknown task") from None
        return JSONResponse(status.to_json())

    async def get_result(self, request: Request) -> Response:
        self._authenticate(request)
        self._endpoint(request)
        task_id = self._task_id(request)
        try:
            outcome = self._broker(lambda: self.broker.fetch_outcome(task_id))
        except UnknownTask:
            raise ApiError(404, "unknown task") from None
        if outcome is None:
            raise ApiError(409, "result not ready")
        if not outcome.ok:
            return _error_response(500, outcome.error_detail)
        return JSONResponse(outcome.result_payload)

    async def get_openapi(self, request: Request) -> Response:
        if not self.exempt_openapi:
            self._authenticate(request)
        version = request.path_params["version"]
        if version not in self.spec.versions:
            raise ApiError(404, f"unknown version {version!r}")
        return JSONResponse(emit_openapi(self.spec, self.auth.policy.enabled, version,
                                         exempt_openapi=self.exempt_openapi))

    async def add_slash(self, request: Request) -> Response:
        url = request.url.replace(path=request.url.path + "/")
        return JSONResponse({"detail": "moved permanently", "location": str(url)},
                            status_code=308, headers={"Location": str(url)})


def create_app(spec: ServiceSpec, broker: Broker, auth: AuthPolicy | Authenticator | None = None,
               max_body: int = DEFAULT_MAX_BODY, exempt_openapi: bool = True,
               middleware: Sequence[Middleware] = (), broker_attempts: int = 3) -> Starlette:
    """Build the ASGI app for ``spec``.

    ``middleware`` is the hook for rate limiting and similar concerns; none
    is installed by default.
    """
    if auth is None:
        auth = AuthPolicy()
    if isinstance(auth, AuthPolicy):
        auth = Authenticator(auth)
    api = TaskApi(spec, broker, auth, max_body, exempt_openapi, broker_attempts)

    routes = [
        Route("/{version}/openapi.json", api.get_openapi, methods=["GET"]),
        Route("/{version}/{kind}/", api.post_task, methods=["POST"]),
        Route("/{version}/{kind}/{task_id}/status/", api.get_status, methods=["GET"]),
        Route("/{version}/{kind}/{task_id}/result/", api.get_result, methods=["GET"]),
        Route("/{version}/{kind}", api.add_slash, methods=["POST"]),
        Route("/{version}/{kind}/{task_id}/status", api.add_slash, methods=["GET"]),
        Route("/{version}/{kind}/{task_id}/result", api.add_slash, methods=["GET"]),
    ]

    async def on_api_error(request, exc: ApiError):
        return _error_response(exc.status, exc.detail, exc.headers)

    async def on_http_error(request, exc: HTTPException):
        return _error_response(exc.status_code, exc.detail, getattr(exc, "headers", None))

    async def on_crash(request, exc: Exception):
        log.exception("unhandled error")
        return _error_response(500, "internal server error")

    app = Starlette(
        routes=routes,
        middleware=list(middleware),
        exception_handlers={ApiError: on_api_error, HTTPException: on_http_error,
                            Exception: on_crash},
    )
    app.router.redirect_slashes = False
    app.state.api = api
    return app
