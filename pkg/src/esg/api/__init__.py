from esg.api.app import DEFAULT_MAX_BODY, ApiError, TaskApi, create_app
from esg.api.auth import AuthError, Authenticator, AuthPolicy, JwksKeySet

__all__ = [
    "DEFAULT_MAX_BODY", "ApiError", "TaskApi", "create_app", "AuthError", "Authenticator",
    "AuthPolicy", "JwksKeySet",
]
