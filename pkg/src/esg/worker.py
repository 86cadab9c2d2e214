"""Worker process: claims tasks, runs service handlers, publishes outcomes."""

from __future__ import annotations

import json
import logging
import threading
import time
import uuid
from typing import Any, Iterable

from esg.broker import (
    DEFAULT_VISIBILITY,
    Broker,
    BrokerUnavailable,
    OutcomeAlreadySet,
    UnknownTask,
    backoff_delays,
)
from esg.core import EndpointKind, HandlerError, TaskEnvelope, TaskOutcome
from esg.schema import Endpoint, ServiceSpec, validate

log = logging.getLogger("esg.worker")

DEFAULT_HEARTBEAT = 60.0
DEFAULT_GRACE = 30.0
# how often a running task checks for abandonment
_TICK = 0.25


def _failure_message(exc: BaseException) -> str:
    if isinstance(exc, HandlerError):
        return str(exc) or "handler failed"
    return f"handler crashed: {type(exc).__name__}: {exc}"


class _HandlerRun:
    """Runs one handler call on a daemon thread so the caller can heartbeat."""

    def __init__(self, endpoint: Endpoint, payload: Any, progress):
        self.done = threading.Event()
        self.result: Any = None
        self.error: BaseException | None = None
        self._thread = threading.Thread(
            target=self._run, args=(endpoint, payload, progress), daemon=True
        )

    def _run(self, endpoint, payload, progress):
        try:
            self.result = endpoint.handler(payload, progress)
        except BaseException as exc:  # noqa: BLE001 - handler code is untrusted
            self.error = exc
        finally:
            self.done.set()

    def start(self):
        self._thread.start()
        return self


def outcome_for(envelope: TaskEnvelope, endpoint: Endpoint, run: _HandlerRun) -> TaskOutcome:
    tid = envelope.task_id
    if run.error is not None:
        return TaskOutcome.failure(tid, _failure_message(run.error))
    issues = validate(endpoint.output, run.result)
    if issues:
        shown = "; ".join(f"{i.path or '/'}: {i.message}" for i in issues[:5])
        return TaskOutcome.failure(tid, f"handler output does not match the data model: {shown}")
    try:
        json.dumps(run.result, allow_nan=False)
    except (TypeError, ValueError) as exc:
        return TaskOutcome.failure(tid, f"handler output is not JSON: {exc}")
    return TaskOutcome.success(tid, run.result)


def execute_task(envelope: TaskEnvelope, endpoint: Endpoint, broker: Broker, worker_id: str,
                 heartbeat: float = DEFAULT_HEARTBEAT, visibility: float = DEFAULT_VISIBILITY,
                 max_runtime: float | None = None,
                 abandon: threading.Event | None = None) -> TaskOutcome | None:
    """Run the handler for ``envelope`` while renewing its lease every ``heartbeat``.

    Returns the stored outcome, or None when the task was abandoned (lease left
    to expire) or another delivery already stored an outcome.
    """
    started = time.monotonic()

    def beat():
        try:
            broker.renew_claim(envelope.task_id, worker_id, visibility)
        except (BrokerUnavailable, UnknownTask):
            pass

    run = _HandlerRun(endpoint, envelope.input_payload, beat).start()
    next_beat = started + heartbeat
    while True:
        now = time.monotonic()
        step = min(next_beat - now, _TICK)
        if max_runtime is not None:
            step = min(step, started + max_runtime - now)
        if run.done.wait(max(step, 0.0)):
            outcome = outcome_for(envelope, endpoint, run)
            break
        if abandon is not None and abandon.is_set():
            log.warning("task abandoned", extra={"task_id": envelope.task_id,
                                                 "attempt": envelope.attempt})
            return None
        now = time.monotonic()
        if max_runtime is not None and now - started >= max_runtime:
            outcome = TaskOutcome.failure(
                envelope.task_id, f"handler exceeded the maximum runtime of {max_runtime} s"
            )
            break
        if now >= next_beat:
            beat()
            next_beat = now + heartbeat

    try:
        broker.put_outcome(outcome)
    except OutcomeAlreadySet:
        outcome = None
    except UnknownTask:
        # garbage collected meanwhile
        outcome = None
    log.info(
        "task finished",
        extra={
            "task_id": envelope.task_id,
            "attempt": envelope.attempt,
            "duration_s": round(time.monotonic() - started, 3),
            "verdict": outcome.verdict.value if outcome else "discarded",
        },
    )
    return outcome


class Worker:
    """One claim/execute loop; scale out by running more of them.

    ``subscriptions`` defaults to every (version, kind) the service offers.
    """

    def __init__(self, spec: ServiceSpec, broker: Broker,
                 subscriptions: Iterable[tuple[str, EndpointKind | str]] | None = None,
                 heartbeat: float = DEFAULT_HEARTBEAT, visibility: float = DEFAULT_VISIBILITY,
                 grace: float = DEFAULT_GRACE, poll_wait: float = 1.0,
                 worker_id: str | None = None):
        if heartbeat >= visibility:
            raise ValueError("heartbeat must be shorter than the visibility timeout")
        self.spec = spec
        self.broker = broker
        subs = spec.subscriptions() if subscriptions is None else subscriptions
        self.subscriptions = [(v, EndpointKind(k)) for v, k in subs]
        for version, kind in self.subscriptions:
            spec.resolve(version, kind)
        self.heartbeat = heartbeat
        self.visibility = visibility
        self.grace = grace
        self.poll_wait = poll_wait
        self.worker_id = worker_id or f"worker-{uuid.uuid4().hex[:12]}"
        self.executed = 0
        self._abandon = threading.Event()

    def _claim(self) -> TaskEnvelope | None:
        wait = self.poll_wait / max(len(self.subscriptions), 1)
        for version, kind in self.subscriptions:
            envelope = self.broker.claim(version, kind, self.worker_id,
                                         visibility=self.visibility, wait=wait)
            if envelope is not None:
                return envelope
        return None

    def run_once(self) -> TaskOutcome | None:
        envelope = self._claim()
        if envelope is None:
            return None
        version = self.spec.versions[envelope.version]
        endpoint = self.spec.resolve(envelope.version, envelope.kind)
        self.executed += 1
        return execute_task(envelope, endpoint, self.broker, self.worker_id,
                            heartbeat=self.heartbeat, visibility=self.visibility,
                            max_runtime=version.max_runtime, abandon=self._abandon)

    def run(self, shutdown: threading.Event) -> None:
        """Loop until ``shutdown`` is set; the in-flight task gets ``grace`` seconds."""
        watcher = threading.Thread(target=self._watch, args=(shutdown,), daemon=True)
        watcher.start()
        delays = None
        log.info("worker started", extra={"worker_id": self.worker_id,
                                          "subscriptions": [f"{v}:{k.value}" for v, k in self.subscriptions]})
        while not shutdown.is_set() and not self._abandon.is_set():
            try:
                self.run_once()
                delays = None
            except BrokerUnavailable as exc:
                delays = delays or backoff_delays()
                pause = next(delays)
                log.warning("broker unavailable", extra={"error": str(exc), "retry_in_s": round(pause, 3)})
                shutdown.wait(pause)
        log.info("worker stopped", extra={"worker_id": self.worker_id})

    def _watch(self, shutdown: threading.Event) -> None:
        shutdown.wait()
        if not self._abandon.wait(self.grace):
            self._abandon.set()

    def abandon(self) -> None:
        """Stop heartbeating the current task and leave the loop, as a crash would."""
        self._abandon.set()


def run_worker(spec: ServiceSpec, broker: Broker, subscriptions=None,
               heartbeat: float = DEFAULT_HEARTBEAT, shutdown_signal: threading.Event | None = None,
               **kw) -> None:
    Worker(spec, broker, subscriptions, heartbeat=heartbeat, **kw).run(
        shutdown_signal or threading.Event()
    )
