"""In-process broker: shared memory guarded by one condition variable."""

from __future__ import annotations

import threading
import time
from collections import deque
from dataclasses import dataclass, replace
from datetime import datetime, timedelta
from typing import Iterator

from esg.broker.base import (
    DEFAULT_VISIBILITY,
    Broker,
    BrokerUnavailable,
    ClaimLease,
    DuplicateTask,
    OutcomeAlreadySet,
    TaskMeta,
    UnknownTask,
)
from esg.core import (
    EndpointKind,
    TaskEnvelope,
    TaskOutcome,
    TaskStatus,
    apply_transition,
    truncate_ms,
    utcnow,
)


@dataclass
class _Record:
    envelope: TaskEnvelope
    status: TaskStatus
    attempt: int = 0
    outcome: TaskOutcome | None = None
    claim: ClaimLease | None = None
    first_fetched_at: datetime | None = None


class MemoryBroker(Broker):
    """Single-process broker for tests and single-node deployments.

    Share one instance between every API, worker and GC thread.
    """

    def __init__(self):
        self._cond = threading.Condition()
        self._tasks: dict[str, _Record] = {}
        self._queues: dict[tuple[str, EndpointKind], deque[str]] = {}
        self._closed = False

    def _check(self):
        if self._closed:
            raise BrokerUnavailable("broker closed")

    def _record(self, task_id: str) -> _Record:
        rec = self._tasks.get(task_id)
        if rec is None:
            raise UnknownTask(task_id)
        return rec

    def _queue(self, version: str, kind: EndpointKind) -> deque[str]:
        return self._queues.setdefault((version, EndpointKind(kind)), deque())

    def enqueue(self, envelope: TaskEnvelope) -> None:
        with self._cond:
            self._check()
            if envelope.task_id in self._tasks:
                raise DuplicateTask(envelope.task_id)
            self._tasks[envelope.task_id] = _Record(envelope, TaskStatus.QUEUED, envelope.attempt)
            self._queue(envelope.version, envelope.kind).append(envelope.task_id)
            self._cond.notify_all()

    def claim(self, version, kind, worker_id, visibility=DEFAULT_VISIBILITY, wait=0.0):
        if visibility <= 0:
            raise ValueError("visibility must be positive")
        deadline = time.monotonic() + max(wait, 0.0)
        with self._cond:
            while True:
                self._check()
                queue = self._queue(version, kind)
                while queue:
                    task_id = queue.popleft()
                    rec = self._tasks.get(task_id)
                    if rec is None or rec.claim is not None or rec.outcome is not None:
                        continue
                    now = utcnow()
                    rec.claim = ClaimLease.start(worker_id, now, visibility)
                    rec.status = apply_transition(rec.status, TaskStatus.RUNNING)
                    return replace(rec.envelope, attempt=rec.attempt)
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    return None
                self._cond.wait(remaining)

    def renew_claim(self, task_id, worker_id, visibility):
        with self._cond:
            self._check()
            rec = self._tasks.get(task_id)
            if rec is None or rec.claim is None or rec.claim.worker_id != worker_id:
                return False
            if rec.outcome is not None:
                return False
            rec.claim = replace(rec.claim, visibility_deadline=utcnow() + timedelta(seconds=visibility))
            return True

    def get_claim(self, task_id):
        with self._cond:
            self._check()
            return self._record(task_id).claim

    def reap_expired_claims(self, now=None):
        now = now or utcnow()
        count = 0
        with self._cond:
            self._check()
            for task_id, rec in self._tasks.items():
                if rec.claim is None or rec.outcome is not None or not rec.claim.expired(now):
                    continue
                rec.claim = None
                rec.status = TaskStatus.QUEUED
                rec.attempt += 1
                self._queue(rec.envelope.version, rec.envelope.kind).append(task_id)
                count += 1
            if count:
                self._cond.notify_all()
        return count

    def set_status(self, task_id, status):
        with self._cond:
            self._check()
            rec = self._record(task_id)
            rec.status = apply_transition(rec.status, TaskStatus(status))

    def get_status(self, task_id):
        with self._cond:
            self._check()
            return self._record(task_id).status

    def put_outcome(self, outcome):
        with self._cond:
            self._check()
            rec = self._record(outcome.task_id)
            if rec.outcome is not None:
                raise OutcomeAlreadySet(outcome.task_id)
            rec.outcome = replace(outcome, first_fetched_at=None)
            rec.status = TaskStatus.READY
            rec.claim = None

    def fetch_outcome(self, task_id, now=None):
        with self._cond:
            self._check()
            rec = self._record(task_id)
            if rec.outcome is None:
                return None
            if rec.first_fetched_at is None:
                rec.first_fetched_at = truncate_ms(now or utcnow())
            rec.outcome = rec.outcome.mark_fetched(rec.first_fetched_at)
            return rec.outcome

    def delete_task(self, task_id):
        with self._cond:
            self._check()
            self._tasks.pop(task_id, None)

    def scan_tasks(self) -> Iterator[TaskMeta]:
        with self._cond:
            self._check()
            snapshot = [
                TaskMeta(tid, rec.envelope.created_at, rec.first_fetched_at, rec.outcome is not None)
                for tid, rec in self._tasks.items()
            ]
        return iter(snapshot)

    def key_count(self):
        with self._cond:
            per_task = sum(3 + (rec.outcome is not None) + (rec.claim is not None)
                           for rec in self._tasks.values())
            queues = 0
            for q in self._queues.values():
                # ids of deleted tasks linger until a claimer skips them
                while q and q[0] not in self._tasks:
                    q.popleft()
                queues += bool(q)
            return per_task + queues + bool(self._tasks)

    def close(self):
        with self._cond:
            self._closed = True
            self._cond.notify_all()
