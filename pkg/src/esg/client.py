"""Programmatic client for the submit/poll/fetch pattern.

Typical use::

    client = ServiceClient("https://pv.example.org", token=token)
    handle = client.submit("v1", "request", payload)
    forecast = client.wait(handle)
"""

from __future__ import annotations

import copy
import random
import time
from dataclasses import dataclass
from typing import Any, Callable

import httpx

from esg.core import EndpointKind, TaskStatus, check_version, parse_task_id


class ClientError(Exception):
    pass


class ValidationRejected(ClientError):
    """The service answered 422; ``detail`` lists ``{"loc", "msg"}`` entries."""

    def __init__(self, detail):
        super().__init__(f"input rejected: {detail}")
        self.detail = detail


class AuthRejected(ClientError):
    def __init__(self, status: int, detail):
        super().__init__(f"{status}: {detail}")
        self.status = status
        self.detail = detail


class NotFound(ClientError):
    pass


class ServiceUnavailable(ClientError):
    pass


class UnexpectedResponse(ClientError):
    def __init__(self, status: int, detail):
        super().__init__(f"unexpected HTTP {status}: {detail}")
        self.status = status
        self.detail = detail


class TaskFailed(ClientError):
    def __init__(self, detail):
        super().__init__(f"task failed: {detail}")
        self.detail = detail


class TimedOut(ClientError):
    pass


class PhaseFailed(ClientError):
    """One phase of :meth:`ServiceClient.fit_then_request` failed."""

    def __init__(self, phase: str, cause: ClientError):
        super().__init__(f"{phase} phase failed: {cause}")
        self.phase = phase
        self.cause = cause


@dataclass(frozen=True)
class PollPolicy:
    initial: float = 1.0
    factor: float = 1.5
    cap: float = 30.0
    max_wait: float | None = None
    jitter: float = 0.2

    def delays(self, rng: random.Random):
        delay = self.initial
        while True:
            yield delay * rng.uniform(1 - self.jitter, 1 + self.jitter)
            delay = min(delay * self.factor, self.cap)


@dataclass(frozen=True)
class TaskHandle:
    base_url: str
    version: str
    kind: EndpointKind
    task_id: str

    def __post_init__(self):
        object.__setattr__(self, "base_url", self.base_url.rstrip("/"))
        object.__setattr__(self, "kind", EndpointKind(self.kind))
        check_version(self.version)
        parse_task_id(self.task_id)

    @property
    def status_url(self) -> str:
        return f"{self.base_url}/{self.version}/{self.kind.value}/{self.task_id}/status/"

    @property
    def result_url(self) -> str:
        return f"{self.base_url}/{self.version}/{self.kind.value}/{self.task_id}/result/"


def submit_url(base_url: str, version: str, kind: EndpointKind | str) -> str:
    return f"{base_url.rstrip('/')}/{check_version(version)}/{EndpointKind(kind).value}/"


@dataclass(frozen=True)
class FitAndRequest:
    parameters: Any
    fit_output: Any
    result: Any


def _detail(resp: httpx.Response):
    try:
        return resp.json().get("detail", resp.text)
    except (ValueError, AttributeError):
        return resp.text


def _pointer_tokens(pointer: str) -> list[str]:
    if pointer == "":
        return []
    if not pointer.startswith("/"):
        raise ValueError(f"not a JSON pointer: {pointer!r}")
    return [t.replace("~1", "/").replace("~0", "~") for t in pointer[1:].split("/")]


def pointer_get(doc, pointer: str):
    for token in _pointer_tokens(pointer):
        doc = doc[int(token)] if isinstance(doc, list) else doc[token]
    return doc


def pointer_set(doc, pointer: str, value):
    tokens = _pointer_tokens(pointer)
    if not tokens:
        return value
    parent = doc
    for token in tokens[:-1]:
        parent = parent[int(token)] if isinstance(parent, list) else parent[token]
    last = tokens[-1]
    if isinstance(parent, list):
        parent[int(last)] = value
    else:
        parent[last] = value
    return doc


class ServiceClient:
    """Client for one service base URL; safe to share between threads."""

    def __init__(self, base_url: str, token: str | None = None, http: httpx.Client | None = None,
                 timeout: float = 30.0, poll: PollPolicy = PollPolicy(),
                 sleep: Callable[[float], None] = time.sleep, rng: random.Random | None = None):
        self.base_url = base_url.rstrip("/")
        self.token = token
        self.poll = poll
        self._owns_http = http is None
        self._http = http or httpx.Client(timeout=timeout)
        self._sleep = sleep
        self._rng = rng or random.Random()

    def close(self):
        if self._owns_http:
            self._http.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def _headers(self) -> dict:
        return {"Authorization": f"Bearer {self.token}"} if self.token else {}

    def _request(self, method: str, url: str, **kw) -> httpx.Response:
        try:
            return self._http.request(method, url, headers=self._headers(), **kw)
        except httpx.TransportError as exc:
            raise ServiceUnavailable(f"cannot reach {url}: {exc}") from exc

    def _raise_common(self, resp: httpx.Response) -> None:
        if resp.status_code in (401, 403):
            raise AuthRejected(resp.status_code, _detail(resp))
        if resp.status_code == 404:
            raise NotFound(_detail(resp))
        if resp.status_code in (502, 503, 504):
            raise ServiceUnavailable(_detail(resp))

    def submit(self, version: str, kind: EndpointKind | str, payload: Any) -> TaskHandle:
        resp = self._request("POST", submit_url(self.base_url, version, kind), json=payload)
        if resp.status_code == 201:
            return TaskHandle(self.base_url, version, EndpointKind(kind), resp.json()["task_ID"])
        if resp.status_code == 422:
            raise ValidationRejected(_detail(resp))
        self._raise_common(resp)
        raise UnexpectedResponse(resp.status_code, _detail(resp))

    def status(self, handle: TaskHandle) -> TaskStatus:
        resp = self._request("GET", handle.status_url)
        if resp.status_code == 200:
            return TaskStatus.from_json(resp.json())
        self._raise_common(resp)
        raise UnexpectedResponse(resp.status_code, _detail(resp))

    def result(self, handle: TaskHandle) -> Any:
        resp = self._request("GET", handle.result_url)
        if resp.status_code == 200:
            return resp.json()
        if resp.status_code == 500:
            raise TaskFailed(_detail(resp))
        self._raise_common(resp)
        raise UnexpectedResponse(resp.status_code, _detail(resp))

    def wait(self, handle: TaskHandle, poll: PollPolicy | None = None) -> Any:
        """Poll until the task is ready, then fetch its result once.

        Raises TaskFailed for a failed computation and TimedOut after
        ``poll.max_wait`` seconds. Transient network errors are retried.
        """
        poll = poll or self.poll
        deadline = None if poll.max_wait is None else time.monotonic() + poll.max_wait
        delays = poll.delays(self._rng)
        while True:
            try:
                ready = self.status(handle) is TaskStatus.READY
            except ServiceUnavailable:
                ready = False
            if ready:
                return self._fetch_ready(handle, deadline, delays)
            pause = next(delays)
            if deadline is not None:
                left = deadline - time.monotonic()
                if left <= 0:
                    raise TimedOut(f"task {handle.task_id} not ready after {poll.max_wait} s")
                pause = min(pause, left)
            self._sleep(pause)

    def _fetch_ready(self, handle, deadline, delays):
        while True:
            try:
                return self.result(handle)
            except ServiceUnavailable:
                if deadline is not None and time.monotonic() >= deadline:
                    raise TimedOut(f"result of {handle.task_id} unreachable") from None
                self._sleep(next(delays))

    def run(self, version: str, kind: EndpointKind | str, payload: Any,
            poll: PollPolicy | None = None) -> Any:
        return self.wait(self.submit(version, kind, payload), poll)

    def fit_then_request(self, version: str, fit_input: Any, request_input_template: Any,
                         parameter_slot: str = "/parameters", fit_output_pointer: str = "/parameters",
                         poll: PollPolicy | None = None) -> FitAndRequest:
        """Fit user specific parameters, then request with them inserted.

        The fitted parameters come back to the caller, who is expected to
        store them; the service keeps nothing beyond its GC windows.
        """
        try:
            fit_output = self.run(version, EndpointKind.FIT_PARAMETERS, fit_input, poll)
        except ClientError as exc:
            raise PhaseFailed("fit-parameters", exc) from exc
        parameters = pointer_get(fit_output, fit_output_pointer)
        request_input = pointer_set(copy.deepcopy(request_input_template), parameter_slot,
                                    copy.deepcopy(parameters))
        try:
            result = self.run(version, EndpointKind.REQUEST, request_input, poll)
        except ClientError as exc:
            raise PhaseFailed("request", exc) from exc
        return FitAndRequest(parameters, fit_output, result)


def submit(base_url: str, version: str, kind: EndpointKind | str, payload: Any,
           token: str | None = None, **kw) -> TaskHandle:
    with ServiceClient(base_url, token, **kw) as client:
        return client.submit(version, kind, payload)


def wait(handle: TaskHandle, poll: PollPolicy = PollPolicy(), token: str | None = None, **kw) -> Any:
    with ServiceClient(handle.base_url, token, **kw) as client:
        return client.wait(handle, poll)


def fit_then_request(base_url: str, version: str, fit_input: Any, request_input_template: Any,
                     parameter_slot: str = "/parameters", token: str | None = None,
                     poll: PollPolicy | None = None, **kw) -> FitAndRequest:
    with ServiceClient(base_url, token, **kw) as client:
        return client.fit_then_request(version, fit_input, request_input_template,
                                       parameter_slot, poll=poll)
