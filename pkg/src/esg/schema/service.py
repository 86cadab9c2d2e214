"""Service definitions: versioned bundles of data models and handlers."""

from __future__ import annotations

from dataclasses import dataclass
from types import MappingProxyType
from typing import Any, Callable, Mapping

from esg.core import EndpointKind, check_version, version_number
from esg.schema.nodes import SchemaNode

# handler(input_payload, progress) -> result_payload
Handler = Callable[[Any, Callable[[], None]], Any]


class SpecInvalid(ValueError):
    pass


class UnknownVersion(LookupError):
    pass


class UnsupportedEndpoint(LookupError):
    pass


@dataclass(frozen=True)
class Endpoint:
    kind: EndpointKind
    input: SchemaNode
    output: SchemaNode
    handler: Handler


@dataclass(frozen=True)
class ServiceVersion:
    request_input: SchemaNode
    request_output: SchemaNode
    request_handler: Handler
    fit_input: SchemaNode | None = None
    fit_output: SchemaNode | None = None
    fit_handler: Handler | None = None
    description: str = ""
    # optional cap on handler runtime in seconds; overruns become failures
    max_runtime: float | None = None

    def __post_init__(self):
        present = [x is not None for x in (self.fit_input, self.fit_output, self.fit_handler)]
        if any(present) and not all(present):
            raise SpecInvalid("fit_input, fit_output and fit_handler must be given together")

    @property
    def supports_fitting(self) -> bool:
        return self.fit_handler is not None

    def endpoint(self, kind: EndpointKind) -> Endpoint | None:
        kind = EndpointKind(kind)
        if kind is EndpointKind.REQUEST:
            return Endpoint(kind, self.request_input, self.request_output, self.request_handler)
        if not self.supports_fitting:
            return None
        return Endpoint(kind, self.fit_input, self.fit_output, self.fit_handler)

    def kinds(self) -> list[EndpointKind]:
        return [k for k in EndpointKind if self.endpoint(k) is not None]


@dataclass(frozen=True)
class ServiceSpec:
    name: str
    versions: Mapping[str, ServiceVersion]
    description: str = ""

    def __post_init__(self):
        if not self.versions:
            raise SpecInvalid("a service needs at least one version")
        for tag, entry in self.versions.items():
            try:
                check_version(tag)
            except ValueError as exc:
                raise SpecInvalid(str(exc)) from None
            if not isinstance(entry, ServiceVersion):
                raise SpecInvalid(f"version {tag} is not a ServiceVersion")
        ordered = sorted(self.versions.items(), key=lambda kv: version_number(kv[0]))
        object.__setattr__(self, "versions", MappingProxyType(dict(ordered)))

    def resolve(self, version: str, kind: EndpointKind | str) -> Endpoint:
        entry = self.versions.get(version)
        if entry is None:
            raise UnknownVersion(f"unknown version {version!r}")
        try:
            kind = EndpointKind(kind)
        except ValueError:
            raise UnsupportedEndpoint(f"unknown endpoint {kind!r}") from None
        endpoint = entry.endpoint(kind)
        if endpoint is None:
            raise UnsupportedEndpoint(f"{version} does not support /{kind.value}/")
        return endpoint

    def subscriptions(self) -> list[tuple[str, EndpointKind]]:
        return [(tag, kind) for tag, entry in self.versions.items() for kind in entry.kinds()]
