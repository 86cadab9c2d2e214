"""Bearer-token (JWT) verification against static keys or a JWKS endpoint.

Verification is local: keys are fetched from the identity provider on a
background cadence, never per request.
"""

from __future__ import annotations

import logging
import threading
from dataclasses import dataclass, field
from typing import Any, Mapping

import httpx
import jwt

log = logging.getLogger("esg.auth")

SUPPORTED_ALGORITHMS = ("RS256", "ES256", "HS256")


class AuthError(Exception):
    def __init__(self, status: int, reason: str):
        super().__init__(reason)
        self.status = status
        self.reason = reason


@dataclass(frozen=True)
class AuthPolicy:
    enabled: bool = False
    accepted_issuers: tuple[str, ...] = ()
    required_audience: str | None = None
    # (claim name, value); a list-valued claim must contain the value
    required_claim: tuple[str, str] | None = None
    # PEM public keys, HMAC secrets or JWK dicts
    static_keys: tuple[Any, ...] = ()
    jwks_url: str | None = None
    jwks_refresh_interval: float = 300.0
    accepted_algorithms: tuple[str, ...] = ("RS256", "ES256")
    clock_skew: float = 30.0

    def __post_init__(self):
        object.__setattr__(self, "accepted_issuers", tuple(self.accepted_issuers))
        object.__setattr__(self, "static_keys", tuple(self.static_keys))
        object.__setattr__(self, "accepted_algorithms", tuple(self.accepted_algorithms))
        if self.required_claim is not None:
            object.__setattr__(self, "required_claim", tuple(self.required_claim))
        unknown = set(self.accepted_algorithms) - set(SUPPORTED_ALGORITHMS)
        if unknown:
            raise ValueError(f"unsupported algorithms: {sorted(unknown)}")
        if not self.enabled:
            return
        if bool(self.static_keys) == bool(self.jwks_url):
            raise ValueError("enabled auth needs exactly one key source: static_keys or jwks_url")
        if not self.accepted_algorithms:
            raise ValueError("enabled auth needs at least one accepted algorithm")


class JwksKeySet:
    """Keys from a JWKS URL, refreshed in the background and swapped atomically."""

    def __init__(self, url: str, refresh_interval: float = 300.0, timeout: float = 5.0):
        self.url = url
        self.refresh_interval = refresh_interval
        self.timeout = timeout
        self._keys: tuple[jwt.PyJWK, ...] = ()
        self._stop = threading.Event()
        self._thread: threading.Thread | None = None

    @property
    def keys(self) -> tuple[jwt.PyJWK, ...]:
        return self._keys

    def refresh(self) -> bool:
        try:
            resp = httpx.get(self.url, timeout=self.timeout)
            resp.raise_for_status()
            keyset = jwt.PyJWKSet.from_dict(resp.json())
        except (httpx.HTTPError, ValueError, jwt.PyJWKSetError) as exc:
            log.warning("jwks refresh failed", extra={"url": self.url, "error": str(exc)})
            return False
        self._keys = tuple(keyset.keys)
        return True

    def start(self) -> "JwksKeySet":
        self.refresh()
        if self._thread is None and self.refresh_interval > 0:
            self._thread = threading.Thread(target=self._loop, daemon=True, name="jwks-refresh")
            self._thread.start()
        return self

    def _loop(self):
        while not self._stop.wait(self.refresh_interval):
            self.refresh()

    def stop(self):
        self._stop.set()


@dataclass
class Authenticator:
    policy: AuthPolicy
    jwks: JwksKeySet | None = field(default=None)

    def __post_init__(self):
        if self.policy.enabled and self.policy.jwks_url and self.jwks is None:
            self.jwks = JwksKeySet(self.policy.jwks_url, self.policy.jwks_refresh_interval).start()

    def close(self):
        if self.jwks is not None:
            self.jwks.stop()

    def _candidate_keys(self, header: Mapping[str, Any]) -> list[Any]:
        if self.jwks is None:
            return list(self.policy.static_keys)
        kid = header.get("kid")
        keys = self.jwks.keys
        if kid is not None:
            keys = tuple(k for k in keys if k.key_id == kid)
        return [k.key for k in keys]

    def authenticate(self, headers: Mapping[str, str]) -> dict:
        """Return the verified claims, or raise AuthError(401|403, reason)."""
        policy = self.policy
        if not policy.enabled:
            return {}
        auth = headers.get("authorization")
        if not auth:
            raise AuthError(401, "missing bearer token")
        scheme, _, token = auth.partition(" ")
        if scheme.lower() != "bearer" or not token.strip():
            raise AuthError(401, "malformed authorization header")
        token = token.strip()
        try:
            header = jwt.get_unverified_header(token)
        except jwt.DecodeError:
            raise AuthError(401, "malformed token") from None
        alg = header.get("alg")
        if alg not in policy.accepted_algorithms:
            raise AuthError(401, f"algorithm {alg!r} not accepted")
        keys = self._candidate_keys(header)
        if not keys:
            raise AuthError(401, "no verification key for token")

        options = {"require": ["exp"], "verify_aud": policy.required_audience is not None}
        if policy.accepted_issuers:
            options["require"].append("iss")
        claims = None
        last: Exception | None = None
        for key in keys:
            try:
                claims = jwt.decode(
                    token,
                    key,
                    algorithms=[alg],
                    audience=policy.required_audience,
                    issuer=list(policy.accepted_issuers) or None,
                    leeway=policy.clock_skew,
                    options=options,
                )
                break
            except (jwt.InvalidSignatureError, jwt.InvalidKeyError) as exc:
                last = exc
                continue
            except jwt.ExpiredSignatureError:
                raise AuthError(401, "token expired") from None
            except jwt.ImmatureSignatureError:
                raise AuthError(401, "token not yet valid") from None
            except jwt.InvalidIssuerError:
                raise AuthError(401, "issuer not accepted") from None
            except jwt.InvalidAudienceError:
                raise AuthError(401, "audience mismatch") from None
            except jwt.InvalidTokenError as exc:
                raise AuthError(401, f"invalid token: {exc}") from None
        if claims is None:
            raise AuthError(401, "bad signature" if last else "token rejected")

        if policy.required_claim is not None:
            name, wanted = policy.required_claim
            have = claims.get(name)
            ok = have == wanted or (isinstance(have, (list, tuple)) and wanted in have)
            if not ok:
                raise AuthError(403, f"required claim {name}={wanted} missing")
        return claims
