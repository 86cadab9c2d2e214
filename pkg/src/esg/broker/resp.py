"""Broker backed by any RESP2 key-value store (Redis, Valkey, KeyDB, ...).

Only plain string, list and expiry commands are used, so the store needs no
scripting or transactions. Every task lives under five keys that share its
id; a per-namespace registry list lets the GC enumerate tasks without SCAN.
"""

from __future__ import annotations

import contextlib
import json
import time
from typing import Iterator

import redis

from esg.broker.base import (
    DEFAULT_VISIBILITY,
    Broker,
    BrokerUnavailable,
    ClaimLease,
    DuplicateTask,
    KeyLayout,
    OutcomeAlreadySet,
    TaskMeta,
    UnknownTask,
)
from esg.core import (
    TaskEnvelope,
    TaskOutcome,
    TaskStatus,
    apply_transition,
    format_timestamp,
    parse_timestamp,
    truncate_ms,
    utcnow,
)

_CHUNK = 500


@contextlib.contextmanager
def _unavailable_on_io():
    try:
        yield
    except (redis.exceptions.ConnectionError, redis.exceptions.TimeoutError, OSError) as exc:
        raise BrokerUnavailable(str(exc)) from exc


def _dumps(doc) -> str:
    return json.dumps(doc, separators=(",", ":"), allow_nan=False)


class RespBroker(Broker):
    """Broker speaking RESP2 via redis-py.

    ``url`` looks like ``redis://[:password@]host:port/db``. Handles are
    thread-safe; separate handles (or processes) on the same store and
    namespace see the same tasks.
    """

    def __init__(self, url: str = "redis://localhost:6379/0", namespace: str = "esg",
                 key_ttl: float | None = None, client: redis.Redis | None = None,
                 connect_timeout: float = 5.0):
        self.keys = KeyLayout(namespace)
        self.key_ttl = key_ttl
        self._client = client or redis.Redis.from_url(
            url, socket_connect_timeout=connect_timeout, decode_responses=True
        )

    # -- helpers -----------------------------------------------------------

    def _set(self, key: str, value: str, **kw):
        if self.key_ttl:
            kw.setdefault("px", int(self.key_ttl * 1000))
        return self._client.set(key, value, **kw)

    def _load_meta(self, task_id: str) -> dict | None:
        raw = self._client.get(self.keys.meta(task_id))
        return None if raw is None else json.loads(raw)

    def _store_meta(self, task_id: str, meta: dict) -> None:
        self._set(self.keys.meta(task_id), _dumps(meta), xx=True)

    def _exists(self, task_id: str) -> bool:
        return bool(self._client.exists(self.keys.envelope(task_id)))

    # -- contract ----------------------------------------------------------

    def enqueue(self, envelope: TaskEnvelope) -> None:
        tid = envelope.task_id
        with _unavailable_on_io():
            if not self._set(self.keys.envelope(tid), _dumps(envelope.to_json()), nx=True):
                raise DuplicateTask(tid)
            meta = {"created_at": format_timestamp(envelope.created_at),
                    "first_fetched_at": None, "attempt": envelope.attempt}
            self._set(self.keys.meta(tid), _dumps(meta))
            self._set(self.keys.status(tid), TaskStatus.QUEUED.value)
            self._client.lpush(self.keys.registry(), tid)
            self._client.lpush(self.keys.queue(envelope.version, envelope.kind), tid)

    def claim(self, version, kind, worker_id, visibility=DEFAULT_VISIBILITY, wait=0.0):
        if visibility <= 0:
            raise ValueError("visibility must be positive")
        queue = self.keys.queue(version, kind)
        deadline = time.monotonic() + max(wait, 0.0)
        with _unavailable_on_io():
            while True:
                remaining = deadline - time.monotonic()
                if remaining > 0:
                    # BRPOP timeout 0 would block forever
                    popped = self._client.brpop([queue], timeout=max(remaining, 0.01))
                    task_id = popped[1] if popped else None
                else:
                    task_id = self._client.rpop(queue)
                if task_id is None:
                    if time.monotonic() >= deadline:
                        return None
                    continue
                envelope = self._try_claim(task_id, worker_id, visibility)
                if envelope is not None:
                    return envelope

    def _try_claim(self, task_id: str, worker_id: str, visibility: float) -> TaskEnvelope | None:
        if self._client.exists(self.keys.outcome(task_id)):
            return None
        lease = ClaimLease.start(worker_id, utcnow(), visibility)
        if not self._set(self.keys.claim(task_id), _dumps(lease.to_json()), nx=True):
            return None
        raw = self._client.get(self.keys.envelope(task_id))
        meta = self._load_meta(task_id)
        status = self._client.get(self.keys.status(task_id))
        if raw is None or meta is None or status is None:
            # deleted while queued
            self._client.delete(self.keys.claim(task_id))
            return None
        self._set(self.keys.status(task_id),
                  apply_transition(TaskStatus(status), TaskStatus.RUNNING).value)
        envelope = TaskEnvelope.from_json(json.loads(raw))
        return TaskEnvelope(envelope.task_id, envelope.kind, envelope.version,
                            envelope.input_payload, envelope.created_at, int(meta["attempt"]))

    def renew_claim(self, task_id, worker_id, visibility):
        with _unavailable_on_io():
            lease = self.get_claim(task_id) if self._exists(task_id) else None
            if lease is None or lease.worker_id != worker_id:
                return False
            if self._client.exists(self.keys.outcome(task_id)):
                return False
            renewed = ClaimLease.start(worker_id, utcnow(), visibility)
            renewed = ClaimLease(worker_id, lease.claimed_at, renewed.visibility_deadline)
            return bool(self._set(self.keys.claim(task_id), _dumps(renewed.to_json()), xx=True))

    def get_claim(self, task_id):
        with _unavailable_on_io():
            raw = self._client.get(self.keys.claim(task_id))
            if raw is None:
                if not self._exists(task_id):
                    raise UnknownTask(task_id)
                return None
            return ClaimLease.from_json(json.loads(raw))

    def _task_ids(self) -> list[str]:
        return list(dict.fromkeys(self._client.lrange(self.keys.registry(), 0, -1)))

    def reap_expired_claims(self, now=None):
        now = now or utcnow()
        count = 0
        with _unavailable_on_io():
            ids = self._task_ids()
            for start in range(0, len(ids), _CHUNK):
                chunk = ids[start:start + _CHUNK]
                leases = self._client.mget([self.keys.claim(t) for t in chunk])
                for task_id, raw in zip(chunk, leases):
                    if raw is None or not ClaimLease.from_json(json.loads(raw)).expired(now):
                        continue
                    if self._client.exists(self.keys.outcome(task_id)):
                        continue
                    # DEL is atomic: only one reaper wins the requeue
                    if not self._client.delete(self.keys.claim(task_id)):
                        continue
                    meta = self._load_meta(task_id)
                    raw_env = self._client.get(self.keys.envelope(task_id))
                    if meta is None or raw_env is None:
                        continue
                    meta["attempt"] = int(meta["attempt"]) + 1
                    self._store_meta(task_id, meta)
                    self._set(self.keys.status(task_id), TaskStatus.QUEUED.value, xx=True)
                    envelope = json.loads(raw_env)
                    self._client.lpush(self.keys.queue(envelope["version"], envelope["kind"]), task_id)
                    count += 1
        return count

    def set_status(self, task_id, status):
        with _unavailable_on_io():
            current = self._client.get(self.keys.status(task_id))
            if current is None:
                raise UnknownTask(task_id)
            new = apply_transition(TaskStatus(current), TaskStatus(status))
            self._set(self.keys.status(task_id), new.value, xx=True)

    def get_status(self, task_id):
        with _unavailable_on_io():
            current = self._client.get(self.keys.status(task_id))
        if current is None:
            raise UnknownTask(task_id)
        return TaskStatus(current)

    def put_outcome(self, outcome):
        tid = outcome.task_id
        with _unavailable_on_io():
            if not self._exists(tid):
                raise UnknownTask(tid)
            doc = outcome.to_json()
            doc["first_fetched_at"] = None
            if not self._set(self.keys.outcome(tid), _dumps(doc), nx=True):
                raise OutcomeAlreadySet(tid)
            self._set(self.keys.status(tid), TaskStatus.READY.value)
            self._client.delete(self.keys.claim(tid))

    def fetch_outcome(self, task_id, now=None):
        with _unavailable_on_io():
            raw = self._client.get(self.keys.outcome(task_id))
            if raw is None:
                if not self._exists(task_id):
                    raise UnknownTask(task_id)
                return None
            outcome = TaskOutcome.from_json(json.loads(raw))
            meta = self._load_meta(task_id)
            if meta is None:
                raise UnknownTask(task_id)
            if meta.get("first_fetched_at") is None:
                meta["first_fetched_at"] = format_timestamp(truncate_ms(now or utcnow()))
                self._store_meta(task_id, meta)
            return outcome.mark_fetched(parse_timestamp(meta["first_fetched_at"]))

    def delete_task(self, task_id):
        with _unavailable_on_io():
            # one DEL over all five keys is atomic on the server
            self._client.delete(*self.keys.task_keys(task_id))
            self._client.lrem(self.keys.registry(), 0, task_id)

    def scan_tasks(self) -> Iterator[TaskMeta]:
        with _unavailable_on_io():
            ids = self._task_ids()
            found: list[TaskMeta] = []
            for start in range(0, len(ids), _CHUNK):
                chunk = ids[start:start + _CHUNK]
                metas = self._client.mget([self.keys.meta(t) for t in chunk])
                pipe = self._client.pipeline(transaction=False)
                for t in chunk:
                    pipe.exists(self.keys.outcome(t))
                has_outcome = pipe.execute()
                for task_id, raw, done in zip(chunk, metas, has_outcome):
                    if raw is None:
                        if not self._exists(task_id):
                            # expired or half-deleted: drop the stale registry entry
                            self._client.lrem(self.keys.registry(), 0, task_id)
                        continue
                    meta = json.loads(raw)
                    fetched = meta.get("first_fetched_at")
                    found.append(TaskMeta(
                        task_id,
                        parse_timestamp(meta["created_at"]),
                        None if fetched is None else parse_timestamp(fetched),
                        bool(done),
                    ))
        return iter(found)

    def key_count(self):
        with _unavailable_on_io():
            total = 0
            for task_id in self._task_ids():
                total += self._client.exists(*self.keys.task_keys(task_id))
            total += self._client.exists(self.keys.registry())
            queue_keys = {
                self.keys.queue(v, k)
                for v, k in self._known_queues()
            }
            if queue_keys:
                total += self._client.exists(*queue_keys)
            return total

    def _known_queues(self) -> set[tuple[str, str]]:
        found = set()
        for task_id in self._task_ids():
            raw = self._client.get(self.keys.envelope(task_id))
            if raw is not None:
                env = json.loads(raw)
                found.add((env["version"], env["kind"]))
        return found

    def ping(self) -> bool:
        with _unavailable_on_io():
            return bool(self._client.ping())

    def close(self):
        self._client.close()
