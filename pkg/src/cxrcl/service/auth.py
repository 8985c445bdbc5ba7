"""Bearer-token authentication over a static user bootstrap file.

Users, roles, and doctor-patient pairings come from an admin-provisioned
JSON file; sessions are in-memory tokens with an expiry.
"""

from __future__ import annotations

import hashlib
import json
import secrets
import time
from dataclasses import dataclass
from pathlib import Path

from .errors import AuthenticationError, AuthorizationError

ROLES = ("patient", "doctor", "researcher")


def credential_digest(user_id: str, password: str) -> str:
    return hashlib.sha256(f"{user_id}:{password}".encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class User:
    id: str
    role: str
    digest: str
    patients: tuple[str, ...] = ()


@dataclass
class Session:
    token: str
    user_id: str
    expires_at: float


class Authenticator:
    def __init__(self, users: dict[str, User], ttl_seconds: float = 3600.0, clock=time.time):
        self.users = users
        self.ttl = ttl_seconds
        self.clock = clock
        self._sessions: dict[str, Session] = {}
        for user in users.values():
            for pid in user.patients:
                if pid not in users:
                    raise ValueError(f"pairing references unknown user {pid!r}")

    @classmethod
    def from_file(cls, path: str | Path, ttl_seconds: float = 3600.0, clock=time.time):
        doc = json.loads(Path(path).read_text())
        users: dict[str, User] = {}
        for rec in doc.get("users", []):
            role = rec["role"]
            if role not in ROLES:
                raise ValueError(f"unknown role {role!r} for user {rec['id']!r}")
            users[rec["id"]] = User(
                id=rec["id"],
                role=role,
                digest=credential_digest(rec["id"], rec["password"]),
                patients=tuple(rec.get("patients", [])),
            )
        return cls(users, ttl_seconds=ttl_seconds, clock=clock)

    def login(self, user_id: str, password: str) -> Session:
        user = self.users.get(user_id)
        if user is None or user.digest != credential_digest(user_id, password):
            raise AuthenticationError("unknown user or wrong password")
        session = Session(
            token=secrets.token_hex(16),
            user_id=user_id,
            expires_at=self.clock() + self.ttl,
        )
        self._sessions[session.token] = session
        return session

    def resolve(self, token: str | None) -> User:
        if not token:
            raise AuthenticationError("missing bearer token")
        session = self._sessions.get(token)
        if session is None:
            raise AuthenticationError("unknown token")
        if self.clock() >= session.expires_at:
            del self._sessions[session.token]
            raise AuthenticationError("token expired")
        return self.users[session.user_id]

    @staticmethod
    def require_role(user: User, *roles: str) -> None:
        if user.role not in roles:
            raise AuthorizationError(
                f"role {user.role!r} may not perform this action"
            )
