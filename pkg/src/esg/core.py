"""Domain types and the task lifecycle shared by API, worker and GC processes."""

from __future__ import annotations

import enum
import re
import uuid
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from typing import Any

_VERSION_RE = re.compile(r"v([0-9]+)")
_RFC3339_RE = re.compile(
    r"([0-9]{4})-([0-9]{2})-([0-9]{2})[Tt]([0-9]{2}):([0-9]{2}):([0-9]{2})(\.[0-9]+)?"
    r"([Zz]|[+-][0-9]{2}:[0-9]{2})"
)


class IllegalTransition(ValueError):
    def __init__(self, current: "TaskStatus", next: "TaskStatus"):
        super().__init__(f"illegal status transition {current.value} -> {next.value}")
        self.current = current
        self.next = next


class HandlerError(Exception):
    """Raised by service handlers to fail a task with a user-facing message."""


class TaskStatus(str, enum.Enum):
    QUEUED = "queued"
    RUNNING = "running"
    READY = "ready"

    def to_json(self) -> dict:
        return {"status": self.value}

    @classmethod
    def from_json(cls, doc: dict) -> "TaskStatus":
        return cls(doc["status"])


_ORDER = {TaskStatus.QUEUED: 0, TaskStatus.RUNNING: 1, TaskStatus.READY: 2}


def apply_transition(current: TaskStatus, next: TaskStatus) -> TaskStatus:
    """Return ``next`` if moving there from ``current`` is legal.

    Status only moves forward. Queued -> Ready is allowed because a fast
    worker can finish before anybody observes Running.
    """
    if _ORDER[next] < _ORDER[current]:
        raise IllegalTransition(current, next)
    return next


class EndpointKind(str, enum.Enum):
    REQUEST = "request"
    FIT_PARAMETERS = "fit-parameters"


class Verdict(str, enum.Enum):
    SUCCESS = "success"
    FAILURE = "failure"


def new_task_id() -> str:
    return str(uuid.uuid4())


def parse_task_id(text: str) -> str:
    """Canonicalise UUID text; raises ValueError for anything else."""
    if not isinstance(text, str) or len(text) != 36:
        raise ValueError(f"not a task id: {text!r}")
    value = str(uuid.UUID(text))
    if value != text.lower():
        raise ValueError(f"not a task id: {text!r}")
    return value


def check_version(tag: str) -> str:
    if not isinstance(tag, str) or not _VERSION_RE.fullmatch(tag):
        raise ValueError(f"version tag must look like 'v1', got {tag!r}")
    return tag


def version_number(tag: str) -> int:
    return int(_VERSION_RE.fullmatch(check_version(tag)).group(1))


# -- timestamps ------------------------------------------------------------

def utcnow() -> datetime:
    return truncate_ms(datetime.now(timezone.utc))


def truncate_ms(dt: datetime) -> datetime:
    """Drop sub-millisecond precision so values survive the wire form unchanged."""
    if dt.tzinfo is None:
        raise ValueError("naive datetimes are not accepted")
    dt = dt.astimezone(timezone.utc)
    return dt.replace(microsecond=dt.microsecond - dt.microsecond % 1000)


def format_timestamp(dt: datetime) -> str:
    """RFC 3339, UTC, millisecond precision, trailing ``Z``."""
    if dt.tzinfo is None:
        raise ValueError("naive datetimes are not accepted")
    dt = dt.astimezone(timezone.utc)
    return dt.strftime("%Y-%m-%dT%H:%M:%S.") + f"{dt.microsecond // 1000:03d}Z"


def parse_timestamp(text: str) -> datetime:
    """Parse an RFC 3339 timestamp (any offset) into an aware UTC datetime."""
    if not isinstance(text, str):
        raise ValueError(f"timestamp must be a string, got {type(text).__name__}")
    m = _RFC3339_RE.fullmatch(text)
    if m is None:
        raise ValueError(f"not an RFC 3339 timestamp: {text!r}")
    frac = m.group(7) or ""
    # fromisoformat in 3.10 only takes 3 or 6 fractional digits
    digits = (frac[1:] + "000000")[:6] if frac else ""
    zone = m.group(8)
    zone = "+00:00" if zone in ("Z", "z") else zone
    core = f"{m.group(1)}-{m.group(2)}-{m.group(3)}T{m.group(4)}:{m.group(5)}:{m.group(6)}"
    if digits:
        core += "." + digits
    try:
        dt = datetime.fromisoformat(core + zone)
    except ValueError as exc:
        raise ValueError(f"not an RFC 3339 timestamp: {text!r}") from exc
    return dt.astimezone(timezone.utc)


def _ts(value: datetime | None) -> str | None:
    return None if value is None else format_timestamp(value)


def _parse_opt(value: str | None) -> datetime | None:
    return None if value is None else parse_timestamp(value)


# -- task records ----------------------------------------------------------

@dataclass(frozen=True)
class TaskEnvelope:
    task_id: str
    kind: EndpointKind
    version: str
    input_payload: Any
    created_at: datetime = field(default_factory=utcnow)
    attempt: int = 0

    def __post_init__(self):
        parse_task_id(self.task_id)
        check_version(self.version)
        object.__setattr__(self, "kind", EndpointKind(self.kind))
        if self.attempt < 0:
            raise ValueError("attempt must be non-negative")
        object.__setattr__(self, "created_at", truncate_ms(self.created_at))

    def redelivered(self) -> "TaskEnvelope":
        return replace(self, attempt=self.attempt + 1)

    def to_json(self) -> dict:
        return {
            "task_id": self.task_id,
            "kind": self.kind.value,
            "version": self.version,
            "input_payload": self.input_payload,
            "created_at": format_timestamp(self.created_at),
            "attempt": self.attempt,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "TaskEnvelope":
        return cls(
            task_id=doc["task_id"],
            kind=EndpointKind(doc["kind"]),
            version=doc["version"],
            input_payload=doc["input_payload"],
            created_at=parse_timestamp(doc["created_at"]),
            attempt=int(doc["attempt"]),
        )


@dataclass(frozen=True)
class TaskOutcome:
    task_id: str
    verdict: Verdict
    result_payload: Any = None
    error_detail: str | None = None
    finished_at: datetime = field(default_factory=utcnow)
    first_fetched_at: datetime | None = None

    def __post_init__(self):
        object.__setattr__(self, "verdict", Verdict(self.verdict))
        object.__setattr__(self, "finished_at", truncate_ms(self.finished_at))
        if self.first_fetched_at is not None:
            object.__setattr__(self, "first_fetched_at", truncate_ms(self.first_fetched_at))
        if self.verdict is Verdict.SUCCESS and self.error_detail is not None:
            raise ValueError("a successful outcome carries no error_detail")
        if self.verdict is Verdict.FAILURE and (
            self.error_detail is None or self.result_payload is not None
        ):
            raise ValueError("a failed outcome carries error_detail and no result")

    @classmethod
    def success(cls, task_id: str, result: Any) -> "TaskOutcome":
        return cls(task_id, Verdict.SUCCESS, result_payload=result)

    @classmethod
    def failure(cls, task_id: str, detail: str) -> "TaskOutcome":
        return cls(task_id, Verdict.FAILURE, error_detail=str(detail))

    @property
    def ok(self) -> bool:
        return self.verdict is Verdict.SUCCESS

    def mark_fetched(self, now: datetime) -> "TaskOutcome":
        if self.first_fetched_at is not None:
            return self
        return replace(self, first_fetched_at=now)

    def to_json(self) -> dict:
        doc = {
            "task_id": self.task_id,
            "verdict": self.verdict.value,
            "finished_at": format_timestamp(self.finished_at),
            "first_fetched_at": _ts(self.first_fetched_at),
        }
        if self.ok:
            doc["result_payload"] = self.result_payload
        else:
            doc["error_detail"] = self.error_detail
        return doc

    @classmethod
    def from_json(cls, doc: dict) -> "TaskOutcome":
        return cls(
            task_id=doc["task_id"],
            verdict=Verdict(doc["verdict"]),
            result_payload=doc.get("result_payload"),
            error_detail=doc.get("error_detail"),
            finished_at=parse_timestamp(doc["finished_at"]),
            first_fetched_at=_parse_opt(doc.get("first_fetched_at")),
        )
