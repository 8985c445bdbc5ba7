"""Service-level error taxonomy, mapped onto HTTP codes by the API layer."""


class ServiceError(Exception):
    code = "service_error"


class AuthenticationError(ServiceError):
    code = "auth_error"


class AuthorizationError(ServiceError):
    code = "authorization_error"


class ValidationError(ServiceError):
    code = "validation_error"


class NotFoundError(ServiceError):
    code = "not_found"


class StateError(ServiceError):
    code = "state_error"
