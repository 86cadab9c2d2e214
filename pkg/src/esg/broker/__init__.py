"""Queue and shared task state between the API, worker and GC processes."""

from __future__ import annotations

import threading

from esg.broker.base import (
    DEFAULT_VISIBILITY,
    Broker,
    BrokerError,
    BrokerUnavailable,
    ClaimLease,
    DuplicateTask,
    KeyLayout,
    OutcomeAlreadySet,
    TaskMeta,
    UnknownTask,
    backoff_delays,
    with_retry,
)
from esg.broker.memory import MemoryBroker

_memory_brokers: dict[str, MemoryBroker] = {}
_memory_lock = threading.Lock()


def open_broker(url: str, namespace: str = "esg") -> Broker:
    """Open a broker from a URL.

    ``memory://name`` returns the process-wide in-memory broker of that name;
    ``redis://`` and ``rediss://`` URLs connect to a RESP2 store.
    """
    if url.startswith("memory://"):
        name = url[len("memory://"):] + "|" + namespace
        with _memory_lock:
            return _memory_brokers.setdefault(name, MemoryBroker())
    if url.startswith(("redis://", "rediss://", "unix://")):
        from esg.broker.resp import RespBroker

        return RespBroker(url, namespace=namespace)
    raise ValueError(f"unsupported broker url {url!r}")


__all__ = [
    "DEFAULT_VISIBILITY", "Broker", "BrokerError", "BrokerUnavailable", "ClaimLease",
    "DuplicateTask", "KeyLayout", "OutcomeAlreadySet", "TaskMeta", "UnknownTask",
    "backoff_delays", "with_retry", "MemoryBroker", "open_broker",
]
