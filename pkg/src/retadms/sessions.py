"""Bearer-token sessions: opaque 256-bit tokens with a sliding-free TTL."""

from __future__ import annotations

import secrets
import threading
import time
from dataclasses import dataclass
from typing import Callable, Optional

from .permissions import Principal


@dataclass
class Session:
    token: str
    principal: Principal
    expires_at: float


class SessionManager:
    """Concurrent token table; expired tokens authenticate nothing."""

    def __init__(self, ttl_seconds: float = 86400.0, now: Callable[[], float] = time.time):
        self.ttl_seconds = ttl_seconds
        self._now = now
        self._lock = threading.Lock()
        self._sessions = {}

    def create(self, principal: Principal) -> Session:
        token = secrets.token_urlsafe(32)
        session = Session(token, principal, self._now() + self.ttl_seconds)
        with self._lock:
            self._sessions[token] = session
        return session

    def resolve(self, token: str) -> Optional[Principal]:
        with self._lock:
            session = self._sessions.get(token)
            if session is None:
                return None
            if session.expires_at <= self._now():
                del self._sessions[token]
                return None
            return session.principal

    def revoke(self, token: str) -> None:
        with self._lock:
            self._sessions.pop(token, None)

    def purge(self) -> int:
        now = self._now()
        with self._lock:
            dead = [t for t, s in self._sessions.items() if s.expires_at <= now]
            for t in dead:
                del self._sessions[t]
            return len(dead)
