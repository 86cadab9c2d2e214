"""Settings for every process role.

Precedence: explicit overrides (command-line flags) > ``ESG_*`` environment
variables > TOML config file > defaults. Keys in the file and the lower-cased
environment names (without ``ESG_``) match the field names below.
"""

from __future__ import annotations

import dataclasses
import importlib
import os
import sys
from dataclasses import dataclass, fields
from typing import Any, Mapping

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from esg.api.auth import AuthPolicy
from esg.core import EndpointKind
from esg.gc import GcPolicy

ENV_PREFIX = "ESG_"


@dataclass
class Settings:
    service: str = "esg.pv.service:pv_service"
    broker_url: str = "redis://localhost:6379/0"
    broker_namespace: str = "esg"
    bind_addr: str = "127.0.0.1:8800"
    max_body_bytes: int = 10 * 1024 * 1024

    auth_enabled: bool = False
    auth_jwks_url: str = ""
    auth_jwks_refresh_s: float = 300.0
    auth_static_key_files: str = ""  # comma separated PEM files
    auth_issuers: str = ""  # comma separated
    auth_audience: str = ""
    auth_required_claim: str = ""  # name=value
    auth_algorithms: str = "RS256,ES256"
    auth_clock_skew_s: float = 30.0
    auth_exempt_openapi: bool = True

    worker_subscriptions: str = ""  # e.g. "v1:request,v1:fit-parameters"; empty = all
    worker_heartbeat_s: float = 60.0
    worker_visibility_s: float = 1800.0
    worker_grace_s: float = 30.0

    gc_retain_after_fetch_s: float = 900.0
    gc_absolute_ttl_s: float = 48 * 3600.0
    gc_interval_s: float = 60.0

    base_url: str = "http://127.0.0.1:8800"
    token: str = ""
    log_level: str = "INFO"

    # -- derived objects ---------------------------------------------------

    def load_service(self):
        module, _, attr = self.service.partition(":")
        if not attr:
            raise ValueError(f"service must look like 'package.module:name', got {self.service!r}")
        return getattr(importlib.import_module(module), attr)

    def bind(self) -> tuple[str, int]:
        host, _, port = self.bind_addr.rpartition(":")
        return host or "127.0.0.1", int(port)

    def auth_policy(self) -> AuthPolicy:
        if not self.auth_enabled:
            return AuthPolicy()
        keys = []
        for path in _split(self.auth_static_key_files):
            with open(path) as fh:
                keys.append(fh.read())
        claim = None
        if self.auth_required_claim:
            name, sep, value = self.auth_required_claim.partition("=")
            if not sep:
                raise ValueError("auth_required_claim must look like name=value")
            claim = (name.strip(), value.strip())
        return AuthPolicy(
            enabled=True,
            accepted_issuers=tuple(_split(self.auth_issuers)),
            required_audience=self.auth_audience or None,
            required_claim=claim,
            static_keys=tuple(keys),
            jwks_url=self.auth_jwks_url or None,
            jwks_refresh_interval=self.auth_jwks_refresh_s,
            accepted_algorithms=tuple(_split(self.auth_algorithms)),
            clock_skew=self.auth_clock_skew_s,
        )

    def gc_policy(self) -> GcPolicy:
        return GcPolicy(self.gc_retain_after_fetch_s, self.gc_absolute_ttl_s)

    def subscriptions(self) -> list[tuple[str, EndpointKind]] | None:
        items = _split(self.worker_subscriptions)
        if not items:
            return None
        out = []
        for item in items:
            version, sep, kind = item.partition(":")
            if not sep:
                raise ValueError(f"subscription must look like 'v1:request', got {item!r}")
            out.append((version, EndpointKind(kind)))
        return out


def _split(value: str) -> list[str]:
    return [part.strip() for part in value.split(",") if part.strip()]


def _coerce(kind: type, value: Any, name: str):
    if isinstance(value, str) and kind is bool:
        lowered = value.strip().lower()
        if lowered in ("1", "true", "yes", "on"):
            return True
        if lowered in ("0", "false", "no", "off", ""):
            return False
        raise ValueError(f"{name}: expected a boolean, got {value!r}")
    if kind is bool and not isinstance(value, bool):
        raise ValueError(f"{name}: expected a boolean, got {value!r}")
    try:
        return kind(value)
    except (TypeError, ValueError):
        raise ValueError(f"{name}: cannot read {value!r} as {kind.__name__}") from None


_TYPES = {f.name: type(f.default) for f in fields(Settings)}


def load_settings(config_file: str | None = None, env: Mapping[str, str] | None = None,
                  overrides: Mapping[str, Any] | None = None) -> Settings:
    env = os.environ if env is None else env
    values: dict[str, Any] = {}
    config_file = config_file or env.get(ENV_PREFIX + "CONFIG")
    if config_file:
        with open(config_file, "rb") as fh:
            doc = tomllib.load(fh)
        for key, value in doc.items():
            if key not in _TYPES:
                raise ValueError(f"unknown setting {key!r} in {config_file}")
            values[key] = value
    for name in _TYPES:
        key = ENV_PREFIX + name.upper()
        if key in env:
            values[name] = env[key]
    for name, value in (overrides or {}).items():
        if name not in _TYPES:
            raise ValueError(f"unknown setting {name!r}")
        if value is not None:
            values[name] = value
    return dataclasses.replace(
        Settings(), **{k: _coerce(_TYPES[k], v, k) for k, v in values.items()}
    )
