"""Garbage collector: deletes task data that is most likely no longer needed."""

from __future__ import annotations

import logging
import math
import threading
import time
from dataclasses import dataclass
from datetime import datetime

from esg.broker import Broker, BrokerUnavailable
from esg.core import utcnow

log = logging.getLogger("esg.gc")


@dataclass(frozen=True)
class GcPolicy:
    """Retention windows in seconds.

    A task is deleted ``retain_after_fetch`` after its result was first
    fetched, or ``absolute_ttl`` after creation, whichever comes first.
    """

    retain_after_fetch: float = 15 * 60.0
    absolute_ttl: float = 48 * 3600.0

    def __post_init__(self):
        if self.retain_after_fetch < 0:
            raise ValueError("retain_after_fetch must be >= 0")
        if not self.absolute_ttl > self.retain_after_fetch:
            raise ValueError("absolute_ttl must exceed retain_after_fetch")

    def expired(self, created_at: datetime, first_fetched_at: datetime | None,
                now: datetime) -> bool:
        if first_fetched_at is not None and (
            (now - first_fetched_at).total_seconds() > self.retain_after_fetch
        ):
            return True
        return math.isfinite(self.absolute_ttl) and (
            (now - created_at).total_seconds() > self.absolute_ttl
        )


def sweep(broker: Broker, policy: GcPolicy = GcPolicy(), now: datetime | None = None) -> list[str]:
    now = now or utcnow()
    deleted = []
    for meta in broker.scan_tasks():
        if policy.expired(meta.created_at, meta.first_fetched_at, now):
            broker.delete_task(meta.task_id)
            deleted.append(meta.task_id)
    return deleted


def run_gc(broker: Broker, policy: GcPolicy = GcPolicy(), interval: float = 60.0,
           shutdown_signal: threading.Event | None = None, reap: bool = True) -> None:
    """Sweep every ``interval`` seconds until ``shutdown_signal`` is set.

    With ``reap`` the loop also re-queues tasks whose worker lease expired.
    """
    shutdown = shutdown_signal or threading.Event()
    while not shutdown.is_set():
        started = time.monotonic()
        try:
            requeued = broker.reap_expired_claims() if reap else 0
            deleted = sweep(broker, policy)
            log.info("sweep", extra={"deleted": len(deleted), "requeued": requeued,
                                     "duration_s": round(time.monotonic() - started, 3)})
        except BrokerUnavailable as exc:
            log.warning("sweep skipped, broker unavailable", extra={"error": str(exc)})
        shutdown.wait(max(0.0, interval - (time.monotonic() - started)))
