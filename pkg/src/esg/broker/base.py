"""The broker contract shared by the in-process and RESP-backed implementations."""

from __future__ import annotations

import abc
import random
import time
from dataclasses import dataclass
from datetime import datetime, timedelta
from typing import Callable, Iterator, TypeVar

from esg.core import (
    EndpointKind,
    TaskEnvelope,
    TaskOutcome,
    TaskStatus,
    format_timestamp,
    parse_timestamp,
)

DEFAULT_VISIBILITY = 30 * 60.0


class BrokerError(Exception):
    pass


class BrokerUnavailable(BrokerError):
    pass


class DuplicateTask(BrokerError):
    pass


class UnknownTask(BrokerError, LookupError):
    pass


class OutcomeAlreadySet(BrokerError):
    pass


@dataclass(frozen=True)
class KeyLayout:
    namespace: str

    def queue(self, version: str, kind: EndpointKind) -> str:
        return f"{self.namespace}:{version}:{EndpointKind(kind).value}:queue"

    def registry(self) -> str:
        return f"{self.namespace}:tasks"

    def envelope(self, task_id: str) -> str:
        return f"{self.namespace}:task:{task_id}:envelope"

    def status(self, task_id: str) -> str:
        return f"{self.namespace}:task:{task_id}:status"

    def outcome(self, task_id: str) -> str:
        return f"{self.namespace}:task:{task_id}:outcome"

    def meta(self, task_id: str) -> str:
        return f"{self.namespace}:task:{task_id}:meta"

    def claim(self, task_id: str) -> str:
        return f"{self.namespace}:task:{task_id}:claim"

    def task_keys(self, task_id: str) -> list[str]:
        # envelope last: readers treat a missing envelope as a missing task
        return [self.claim(task_id), self.outcome(task_id), self.status(task_id),
                self.meta(task_id), self.envelope(task_id)]


@dataclass(frozen=True)
class ClaimLease:
    worker_id: str
    claimed_at: datetime
    visibility_deadline: datetime

    def __post_init__(self):
        if not self.visibility_deadline > self.claimed_at:
            raise ValueError("visibility deadline must follow the claim time")

    @classmethod
    def start(cls, worker_id: str, now: datetime, visibility: float) -> "ClaimLease":
        return cls(worker_id, now, now + timedelta(seconds=visibility))

    def expired(self, now: datetime) -> bool:
        return self.visibility_deadline < now

    def to_json(self) -> dict:
        return {
            "worker_id": self.worker_id,
            "claimed_at": format_timestamp(self.claimed_at),
            "visibility_deadline": format_timestamp(self.visibility_deadline),
        }

    @classmethod
    def from_json(cls, doc: dict) -> "ClaimLease":
        return cls(doc["worker_id"], parse_timestamp(doc["claimed_at"]),
                   parse_timestamp(doc["visibility_deadline"]))


@dataclass(frozen=True)
class TaskMeta:
    task_id: str
    created_at: datetime
    first_fetched_at: datetime | None
    has_outcome: bool


class Broker(abc.ABC):
    """Queue and state store between API, worker and GC processes.

    Durations are in seconds. ``now`` arguments default to the wall clock.
    Delivery is at-least-once; outcome storage is idempotent.
    """

    @abc.abstractmethod
    def enqueue(self, envelope: TaskEnvelope) -> None: ...

    @abc.abstractmethod
    def claim(self, version: str, kind: EndpointKind, worker_id: str,
              visibility: float = DEFAULT_VISIBILITY, wait: float = 0.0) -> TaskEnvelope | None:
        """Take the oldest queued task and lease it to ``worker_id``.

        Blocks up to ``wait`` seconds when the queue is empty.
        """

    @abc.abstractmethod
    def renew_claim(self, task_id: str, worker_id: str, visibility: float) -> bool:
        """Push the lease deadline out; False if ``worker_id`` no longer holds it."""

    @abc.abstractmethod
    def get_claim(self, task_id: str) -> ClaimLease | None: ...

    @abc.abstractmethod
    def reap_expired_claims(self, now: datetime | None = None) -> int: ...

    @abc.abstractmethod
    def set_status(self, task_id: str, status: TaskStatus) -> None: ...

    @abc.abstractmethod
    def get_status(self, task_id: str) -> TaskStatus: ...

    @abc.abstractmethod
    def put_outcome(self, outcome: TaskOutcome) -> None: ...

    @abc.abstractmethod
    def fetch_outcome(self, task_id: str, now: datetime | None = None) -> TaskOutcome | None:
        """Return the outcome (None if not ready) and stamp the first fetch."""

    @abc.abstractmethod
    def delete_task(self, task_id: str) -> None: ...

    @abc.abstractmethod
    def scan_tasks(self) -> Iterator[TaskMeta]: ...

    @abc.abstractmethod
    def key_count(self) -> int:
        """Number of live keys under this broker's namespace."""

    def close(self) -> None:
        pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


# -- retry -----------------------------------------------------------------

T = TypeVar("T")


def backoff_delays(base: float = 0.1, factor: float = 2.0, cap: float = 10.0,
                   jitter: float = 0.2, rng: random.Random | None = None) -> Iterator[float]:
    rng = rng or random.Random()
    delay = base
    while True:
        yield delay * rng.uniform(1 - jitter, 1 + jitter)
        delay = min(delay * factor, cap)


def with_retry(fn: Callable[[], T], attempts: int = 4, sleep: Callable[[float], None] = time.sleep,
               **backoff) -> T:
    """Call ``fn``, retrying BrokerUnavailable with jittered exponential backoff."""
    delays = backoff_delays(**backoff)
    for attempt in range(attempts):
        try:
            return fn()
        except BrokerUnavailable:
            if attempt == attempts - 1:
                raise
            sleep(next(delays))
    raise AssertionError("unreachable")
