"""Wall and monotonic time sources.

Durations are measured on the monotonic clock so that NTP adjustments or
manual clock changes cannot corrupt them; wall-clock instants are recorded
alongside for display and for cross-process recovery. ManualClock lets tests
and scripted demos replay timed workflows without sleeping.
"""

import time
import uuid
from datetime import datetime, timedelta, timezone


def utc_now() -> datetime:
    return datetime.now(timezone.utc)


class SystemClock:
    """Real time. One epoch id per instance; monotonic readings are only
    comparable within the same epoch."""

    def __init__(self):
        self.epoch = uuid.uuid4().hex

    def now(self) -> datetime:
        return utc_now()

    def monotonic(self) -> float:
        return time.monotonic()


class ManualClock:
    """Deterministic clock advanced explicitly by the caller."""

    def __init__(self, start: datetime | None = None):
        self.epoch = uuid.uuid4().hex
        self._now = start or datetime(2020, 1, 1, tzinfo=timezone.utc)
        self._mono = 0.0

    def now(self) -> datetime:
        return self._now

    def monotonic(self) -> float:
        return self._mono

    def advance(self, seconds: float) -> None:
        if seconds < 0:
            raise ValueError("clock cannot move backwards")
        self._now = self._now + timedelta(seconds=seconds)
        self._mono += seconds
