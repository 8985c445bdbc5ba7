"""Queue-based screening service: submissions, single-consumer processing,
append-only persistence, and the HTTP API."""

from .core import QueueEmpty, ScreeningService, ServiceConfig
from .errors import (
    AuthenticationError,
    AuthorizationError,
    NotFoundError,
    StateError,
    ValidationError,
)
from .registry import ModelRegistry
from .store import Submission, SubmissionStore

__all__ = [
    "AuthenticationError",
    "AuthorizationError",
    "ModelRegistry",
    "NotFoundError",
    "QueueEmpty",
    "ScreeningService",
    "ServiceConfig",
    "StateError",
    "Submission",
    "SubmissionStore",
    "ValidationError",
]
