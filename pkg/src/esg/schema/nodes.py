"""Declarative data-model nodes and a total, exhaustive JSON payload validator."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Any, Mapping

from esg.core import parse_timestamp

MAX_ERRORS = 100


class _Unset:
    def __repr__(self):
        return "UNSET"

    def __bool__(self):
        return False


UNSET: Any = _Unset()


class SchemaError(ValueError):
    """A schema node violates its own invariants."""


@dataclass(frozen=True)
class ValidationIssue:
    path: str
    message: str

    def to_json(self) -> dict:
        return {"loc": self.path, "msg": self.message}


class ValidationFailed(ValueError):
    def __init__(self, issues: list[ValidationIssue]):
        self.issues = list(issues)
        summary = "; ".join(f"{i.path or '/'}: {i.message}" for i in self.issues[:5])
        super().__init__(f"{len(self.issues)} validation error(s): {summary}")


@dataclass(frozen=True, kw_only=True)
class SchemaNode:
    description: str | None = None
    example: Any = UNSET
    nullable: bool = False

    def __post_init__(self):
        self._check()
        if self.example is not UNSET:
            issues = validate(self, self.example)
            if issues:
                raise SchemaError(f"example does not validate: {issues[0]}")

    def _check(self) -> None:
        pass


@dataclass(frozen=True, kw_only=True)
class ObjectNode(SchemaNode):
    fields: Mapping[str, SchemaNode]
    required: frozenset[str] = frozenset()

    def _check(self):
        object.__setattr__(self, "fields", MappingProxyType(dict(self.fields)))
        object.__setattr__(self, "required", frozenset(self.required))
        extra = self.required - set(self.fields)
        if extra:
            raise SchemaError(f"required names not among fields: {sorted(extra)}")


@dataclass(frozen=True, kw_only=True)
class ArrayNode(SchemaNode):
    item: SchemaNode
    min_items: int | None = None
    max_items: int | None = None
    # items must be strictly increasing, compared on this key ("" = the item itself)
    increasing_by: str | None = None

    def _check(self):
        if self.min_items is not None and self.min_items < 0:
            raise SchemaError("min_items must be non-negative")
        _check_bounds(self.min_items, self.max_items)
        if self.increasing_by:
            if not isinstance(self.item, ObjectNode) or self.increasing_by not in self.item.fields:
                raise SchemaError(f"ordering key {self.increasing_by!r} is not an item field")


@dataclass(frozen=True, kw_only=True)
class StringNode(SchemaNode):
    format: str | None = None  # only "date-time"
    pattern: str | None = None

    def _check(self):
        if self.format not in (None, "date-time"):
            raise SchemaError(f"unsupported string format {self.format!r}")
        if self.pattern is not None:
            re.compile(self.pattern)


@dataclass(frozen=True, kw_only=True)
class NumberNode(SchemaNode):
    minimum: float | None = None
    maximum: float | None = None

    def _check(self):
        _check_bounds(self.minimum, self.maximum)


@dataclass(frozen=True, kw_only=True)
class IntegerNode(NumberNode):
    pass


@dataclass(frozen=True, kw_only=True)
class BooleanNode(SchemaNode):
    pass


@dataclass(frozen=True, kw_only=True)
class EnumNode(SchemaNode):
    values: tuple[str, ...]

    def _check(self):
        object.__setattr__(self, "values", tuple(self.values))
        if not self.values:
            raise SchemaError("enum needs at least one value")
        if len(set(self.values)) != len(self.values):
            raise SchemaError("enum values must be distinct")
        if not all(isinstance(v, str) for v in self.values):
            raise SchemaError("enum values must be strings")


def _check_bounds(lo, hi):
    if lo is not None and hi is not None and lo > hi:
        raise SchemaError(f"minimum {lo} exceeds maximum {hi}")


# -- validation ------------------------------------------------------------

class _Full(Exception):
    pass


class _Collector:
    def __init__(self, limit: int):
        self.limit = limit
        self.issues: list[ValidationIssue] = []

    def add(self, path: str, message: str) -> None:
        self.issues.append(ValidationIssue(path, message))
        if len(self.issues) >= self.limit:
            raise _Full


def _pointer(path: str, token: str | int) -> str:
    token = str(token).replace("~", "~0").replace("/", "~1")
    return f"{path}/{token}"


def _num(x) -> str:
    if isinstance(x, float) and x.is_integer():
        return str(int(x))
    return str(x)


def _is_number(value) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def validate(node: SchemaNode, payload: Any, limit: int = MAX_ERRORS) -> list[ValidationIssue]:
    """Check ``payload`` against ``node``; returns every issue found (up to ``limit``).

    An empty list means the payload conforms.
    """
    out = _Collector(limit)
    try:
        _walk(node, payload, "", out)
    except _Full:
        pass
    except RecursionError:
        out.issues.append(ValidationIssue("", "document nested too deeply"))
    return out.issues


def check(node: SchemaNode, payload: Any) -> None:
    issues = validate(node, payload)
    if issues:
        raise ValidationFailed(issues)


def _walk(node: SchemaNode, value: Any, path: str, out: _Collector) -> None:
    if value is None:
        if not node.nullable:
            out.add(path, "must not be null")
        return
    if isinstance(node, ObjectNode):
        _walk_object(node, value, path, out)
    elif isinstance(node, ArrayNode):
        _walk_array(node, value, path, out)
    elif isinstance(node, EnumNode):
        if not isinstance(value, str):
            out.add(path, "expected string")
        elif value not in node.values:
            out.add(path, f"must be one of {', '.join(node.values)}")
    elif isinstance(node, StringNode):
        _walk_string(node, value, path, out)
    elif isinstance(node, NumberNode):
        _walk_number(node, value, path, out)
    elif isinstance(node, BooleanNode):
        if not isinstance(value, bool):
            out.add(path, "expected boolean")
    else:
        raise SchemaError(f"unknown node type {type(node).__name__}")


def _walk_object(node: ObjectNode, value, path, out):
    if not isinstance(value, dict):
        out.add(path, "expected object")
        return
    for name, child in node.fields.items():
        if name in value:
            _walk(child, value[name], _pointer(path, name), out)
        elif name in node.required:
            out.add(_pointer(path, name), "field required")
    for name in value:
        if name not in node.fields:
            out.add(_pointer(path, name), "unexpected field")


def _walk_array(node: ArrayNode, value, path, out):
    if not isinstance(value, list):
        out.add(path, "expected array")
        return
    if node.min_items is not None and len(value) < node.min_items:
        out.add(path, f"at least {node.min_items} items required")
    if node.max_items is not None and len(value) > node.max_items:
        out.add(path, f"at most {node.max_items} items allowed")
    clean = []
    for i, item in enumerate(value):
        before = len(out.issues)
        _walk(node.item, item, _pointer(path, i), out)
        clean.append(len(out.issues) == before)
    if node.increasing_by is not None:
        _check_increasing(node, value, clean, path, out)


def _order_value(node: SchemaNode, value):
    if value is None:
        return None
    if isinstance(node, StringNode) and node.format == "date-time":
        return parse_timestamp(value)
    return value


def _check_increasing(node: ArrayNode, value, clean, path, out):
    key = node.increasing_by
    key_node = node.item.fields[key] if key else node.item
    previous = None
    for i, item in enumerate(value):
        if not clean[i]:
            continue
        raw = item.get(key) if key else item
        current = _order_value(key_node, raw)
        if current is None:
            continue
        if previous is not None and not current > previous:
            where = _pointer(_pointer(path, i), key) if key else _pointer(path, i)
            out.add(where, "must be strictly greater than the preceding item")
        previous = current


def _walk_string(node: StringNode, value, path, out):
    if not isinstance(value, str):
        out.add(path, "expected string")
        return
    if node.format == "date-time":
        try:
            parse_timestamp(value)
        except ValueError:
            out.add(path, "expected RFC 3339 date-time")
    if node.pattern is not None and re.search(node.pattern, value) is None:
        out.add(path, f"does not match pattern {node.pattern}")


def _walk_number(node: NumberNode, value, path, out):
    if isinstance(node, IntegerNode):
        if not _is_number(value) or (isinstance(value, float) and not value.is_integer()):
            out.add(path, "expected integer")
            return
    elif not _is_number(value):
        out.add(path, "expected number")
        return
    if isinstance(value, float) and not math.isfinite(value):
        out.add(path, "must be a finite number")
        return
    if node.minimum is not None and value < node.minimum:
        out.add(path, f"minimum {_num(node.minimum)} not reached")
    if node.maximum is not None and value > node.maximum:
        out.add(path, f"maximum {_num(node.maximum)} exceeded")
