"""Token-bucket rate limiting keyed by caller and route class."""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass


@dataclass(frozen=True)
class RouteLimit:
    per_minute: float
    burst: int

    def __post_init__(self):
        if self.per_minute <= 0 or self.burst < 1:
            raise ValueError("rate limit needs per_minute > 0 and burst >= 1")


@dataclass(frozen=True)
class Decision:
    allowed: bool
    retry_after: float = 0.0


DEFAULT_LIMITS = {
    "default": RouteLimit(per_minute=120, burst=60),
    "auth": RouteLimit(per_minute=30, burst=10),
    # One-time-code confirmation is the strictest class.
    "otp": RouteLimit(per_minute=5, burst=5),
}


class RateLimiter:
    """Independent buckets per (route class, caller key)."""

    def __init__(self, limits: dict[str, RouteLimit] | None = None,
                 clock=time.monotonic):
        self.limits = dict(DEFAULT_LIMITS if limits is None else limits)
        self._clock = clock
        self._buckets: dict[tuple[str, str], tuple[float, float]] = {}
        self._lock = threading.Lock()

    def check(self, key: str, route_class: str = "default") -> Decision:
        limit = self.limits.get(route_class) or self.limits["default"]
        rate = limit.per_minute / 60.0
        now = self._clock()
        with self._lock:
            tokens, updated = self._buckets.get((route_class, key),
                                                (float(limit.burst), now))
            tokens = min(float(limit.burst), tokens + (now - updated) * rate)
            if tokens >= 1.0:
                self._buckets[(route_class, key)] = (tokens - 1.0, now)
                return Decision(True)
            self._buckets[(route_class, key)] = (tokens, now)
            return Decision(False, retry_after=(1.0 - tokens) / rate)

    def prune(self, idle_seconds: float = 3600.0) -> None:
        """Drop buckets idle long enough to be full again."""
        now = self._clock()
        with self._lock:
            stale = [k for k, (_, updated) in self._buckets.items()
                     if now - updated > idle_seconds]
            for k in stale:
                del self._buckets[k]
