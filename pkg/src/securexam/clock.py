"""Server-side time authority.

All deadline arithmetic uses the server clock; client timestamps are never
trusted.  ManualClock backs the simulated-time test harnesses.
"""

from __future__ import annotations

import threading
from datetime import datetime, timedelta, timezone
from typing import Protocol


def utc(year: int, month: int, day: int, hour: int = 0, minute: int = 0,
        second: int = 0) -> datetime:
    return datetime(year, month, day, hour, minute, second, tzinfo=timezone.utc)


class Clock(Protocol):
    def now(self) -> datetime: ...


class SystemClock:
    def now(self) -> datetime:
        return datetime.now(timezone.utc)


class ManualClock:
    """Logical clock the test harness moves forward explicitly."""

    def __init__(self, start: datetime | None = None):
        self._now = start or utc(2026, 1, 5, 8, 0, 0)
        self._lock = threading.Lock()

    def now(self) -> datetime:
        with self._lock:
            return self._now

    def advance(self, *, seconds: float = 0, minutes: float = 0,
                hours: float = 0, days: float = 0) -> datetime:
        with self._lock:
            self._now += timedelta(seconds=seconds, minutes=minutes,
                                   hours=hours, days=days)
            return self._now

    def set(self, value: datetime) -> None:
        with self._lock:
            if value < self._now:
                raise ValueError("manual clock never moves backwards")
            self._now = value
