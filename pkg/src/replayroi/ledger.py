"""Append-only event log and the measurement tables folded from it.

Storage is one newline-delimited JSON file, one event per line:

    {"schema": 1, "seq": 3, "at": "2020-01-06T09:30:00+00:00",
     "kind": "TestRun", "payload": {...}}

* ``schema``  - format version of the record.
* ``seq``     - contiguous from 1; assigned by the ledger on append.
* ``at``      - ISO-8601 UTC instant; non-decreasing across the file.
* ``kind``    - one of EVENT_KINDS below.
* ``payload`` - kind-specific fields (see the fold_events source for the
                fields each kind carries).

Appends are flushed and fsynced before the sequence number is returned, so
a crash can lose at most a torn final line; recovery drops that line and
truncates the file, leaving a valid prefix. Everything downstream (session
state, measurement tables, reports) is a deterministic fold over the event
list, so re-reading a ledger file reproduces all derived state exactly.
"""

import io
import json
import os
import statistics
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path

from .errors import ReplayRoiError, UsageError
from .records import (
    MAINTENANCE_CATEGORIES,
    ActivityCategory,
    ActivityRecord,
    BugRecord,
    TestRunRecord,
)

SCHEMA_VERSION = 1

EVENT_KINDS = frozenset({
    "ProjectConfigured",
    "BaselineRecorded",
    "SessionStarted",
    "VersionCheckedOut",
    "BuildVerified",
    "TestRun",
    "FailureClassified",
    "ActivityStarted",
    "ActivityStopped",
    "BugRecorded",
    "TestScriptUpdated",
    "VersionCompleted",
    "SessionCompleted",
})


class LedgerError(ReplayRoiError):
    pass


class LedgerCorruptError(LedgerError):
    """The file has a bad record somewhere other than the final line."""


class OutOfOrderEventError(LedgerError, UsageError):
    """An appended event's instant precedes the last recorded instant."""


@dataclass(frozen=True)
class Event:
    seq: int
    at: datetime
    kind: str
    payload: dict

    def to_json(self) -> str:
        return json.dumps(
            {
                "schema": SCHEMA_VERSION,
                "seq": self.seq,
                "at": self.at.isoformat(),
                "kind": self.kind,
                "payload": self.payload,
            },
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, line: str) -> "Event":
        raw = json.loads(line)
        if raw.get("schema") != SCHEMA_VERSION:
            raise LedgerError(f"unsupported ledger schema: {raw.get('schema')!r}")
        kind = raw["kind"]
        if kind not in EVENT_KINDS:
            raise LedgerError(f"unknown event kind: {kind!r}")
        return cls(
            seq=int(raw["seq"]),
            at=datetime.fromisoformat(raw["at"]),
            kind=kind,
            payload=raw["payload"],
        )


class EventLedger:
    """Single-writer append-only event log.

    With a path the log is durable; with path=None it lives in memory only
    (used by tests and throwaway sessions). Readers take immutable snapshots
    via events(); the writer is the session that owns this object.
    """

    def __init__(self, path: str | Path | None = None):
        self.path = Path(path) if path is not None else None
        self._events: list[Event] = []
        self._fh: io.TextIOWrapper | None = None
        if self.path is not None:
            self._recover_existing()
            try:
                self._fh = open(self.path, "a", encoding="utf-8")
            except OSError as exc:
                raise LedgerError(f"cannot open ledger for append: {exc}") from exc

    def _recover_existing(self) -> None:
        if not self.path.exists():
            return
        data = self.path.read_bytes()
        good: list[Event] = []
        offset = 0
        line_no = 0
        # Each append writes "record\n" as one buffer, so a crash leaves at
        # most a prefix of that buffer: a trailing segment without its
        # newline is a torn write and gets dropped. A newline-terminated
        # line that fails to parse is real corruption.
        while offset < len(data):
            nl = data.find(b"\n", offset)
            if nl == -1:
                break
            line_no += 1
            raw = data[offset:nl]
            try:
                event = Event.from_json(raw.decode("utf-8"))
            except (ValueError, KeyError, LedgerError) as exc:
                raise LedgerCorruptError(
                    f"{self.path}: bad record at line {line_no}: {exc}"
                ) from exc
            good.append(event)
            offset = nl + 1
        for n, event in enumerate(good, start=1):
            if event.seq != n:
                raise LedgerCorruptError(
                    f"{self.path}: sequence gap at {event.seq} (expected {n})"
                )
        for prev, cur in zip(good, good[1:]):
            if cur.at < prev.at:
                raise LedgerCorruptError(
                    f"{self.path}: instants go backwards at seq {cur.seq}"
                )
        if offset != len(data):
            with open(self.path, "ab") as fh:
                fh.truncate(offset)
        self._events = good

    @property
    def last_seq(self) -> int:
        return len(self._events)

    @property
    def last_instant(self) -> datetime | None:
        return self._events[-1].at if self._events else None

    def append(self, kind: str, payload: dict, at: datetime) -> int:
        if kind not in EVENT_KINDS:
            raise LedgerError(f"unknown event kind: {kind!r}")
        if at.tzinfo is None:
            raise LedgerError("event instants must be timezone-aware")
        last = self.last_instant
        if last is not None and at < last:
            raise OutOfOrderEventError(
                f"event instant {at.isoformat()} precedes ledger head {last.isoformat()}"
            )
        event = Event(seq=self.last_seq + 1, at=at, kind=kind, payload=payload)
        line = event.to_json()  # raises TypeError on unserializable payloads
        if self._fh is not None:
            try:
                self._fh.write(line + "\n")
                self._fh.flush()
                os.fsync(self._fh.fileno())
            except OSError as exc:
                raise LedgerError(f"ledger write failed: {exc}") from exc
        self._events.append(event)
        return event.seq

    def events(self) -> tuple[Event, ...]:
        """Immutable snapshot of the full event list."""
        return tuple(self._events)

    def close(self) -> None:
        if self._fh is not None:
            self._fh.close()
            self._fh = None

    def __enter__(self) -> "EventLedger":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def load_events(path: str | Path) -> tuple[Event, ...]:
    """Read a ledger file without opening it for writing."""
    ledger = EventLedger.__new__(EventLedger)
    ledger.path = Path(path)
    ledger._events = []
    ledger._fh = None
    if not ledger.path.exists():
        raise LedgerError(f"no ledger file at {path}")
    ledger._recover_existing()
    return ledger.events()


# ---------------------------------------------------------------------------
# Folding events into measurement tables


@dataclass
class MeasurementTables:
    """Everything the statistics derive from, folded from an event prefix.

    Keys: protocols and frameworks by id, versions by 1-based index.
    Durations in whole seconds.
    """

    baseline_manual: dict = field(default_factory=dict)  # protocol -> seconds
    implementation: dict = field(default_factory=dict)  # (protocol, fw) -> seconds
    # (framework, version) -> {category: [seconds, occurrences]}
    maintenance: dict = field(default_factory=dict)
    maintenance_records: list = field(default_factory=list)  # ActivityRecord
    runs: list = field(default_factory=list)  # TestRunRecord
    bugs: list = field(default_factory=list)  # BugRecord
    num_versions: int | None = None
    open_activity: dict | None = None  # ActivityStarted payload awaiting a stop

    def apply(self, event: Event) -> None:
        p = event.payload
        if event.kind == "BaselineRecorded":
            category = ActivityCategory(p["category"])
            if category is ActivityCategory.MANUAL_BASELINE:
                self.baseline_manual[p["protocol"]] = int(p["duration_s"])
            elif category is ActivityCategory.IMPLEMENTATION:
                key = (p["protocol"], p["framework"])
                self.implementation[key] = int(p["duration_s"])
            else:
                raise LedgerError(f"bad baseline category: {category}")
        elif event.kind == "SessionStarted":
            self.num_versions = int(p["num_versions"])
        elif event.kind == "ActivityStarted":
            self.open_activity = dict(p, seq=event.seq)
        elif event.kind == "ActivityStopped":
            self.open_activity = None
            if p.get("discarded"):
                return
            record = ActivityRecord(
                version=int(p["version"]),
                protocol=p["protocol"],
                framework=p.get("framework"),
                category=ActivityCategory(p["category"]),
                started_at=datetime.fromisoformat(p["started_at"]),
                stopped_at=datetime.fromisoformat(p["stopped_at"]),
                duration_s=int(p["duration_s"]),
                note=p.get("note", ""),
                manual_override=bool(p.get("manual_override", False)),
            )
            if record.category in MAINTENANCE_CATEGORIES:
                self.maintenance_records.append(record)
                per_version = self.maintenance.setdefault(
                    (record.framework, record.version), {}
                )
                tally = per_version.setdefault(record.category, [0, 0])
                tally[0] += record.duration_s
                tally[1] += 1
        elif event.kind == "TestRun":
            self.runs.append(
                TestRunRecord(
                    version=int(p["version"]),
                    protocol=p["protocol"],
                    framework=p["framework"],
                    outcome=p["outcome"],
                    attempt=int(p["attempt"]),
                    duration_s=p.get("duration_s"),
                    note=p.get("note", ""),
                )
            )
        elif event.kind == "BugRecorded":
            self.bugs.append(
                BugRecord(
                    version=int(p["version"]),
                    description=p["description"],
                    resolution=p["resolution"],
                    activity_seq=int(p["activity_seq"]),
                )
            )
        # Remaining kinds carry session-state information only.

    def frameworks(self) -> list[str]:
        seen = {fw for (_, fw) in self.implementation}
        seen.update(fw for (fw, _) in self.maintenance)
        return sorted(seen)

    def protocols(self) -> list[str]:
        seen = set(self.baseline_manual)
        seen.update(protocol for (protocol, _) in self.implementation)
        return sorted(seen)

    def max_version_seen(self) -> int:
        versions = [v for (_, v) in self.maintenance]
        versions += [r.version for r in self.runs]
        return max(versions, default=0)


def fold_events(events, into: MeasurementTables | None = None) -> MeasurementTables:
    """Fold an event prefix into measurement tables.

    Pure and deterministic: folding the full log equals folding a snapshot
    and then the tail into the same tables. An ActivityStarted with no
    matching stop at end-of-log is surfaced via ``open_activity`` and its
    time excluded from all totals.
    """
    tables = into if into is not None else MeasurementTables()
    for event in events:
        tables.apply(event)
    return tables


# ---------------------------------------------------------------------------
# Summary statistics


@dataclass(frozen=True)
class DurationStats:
    """Total / count / mean +- sample standard deviation, in minutes."""

    total_seconds: int
    occurrences: int
    mean_minutes: float
    sd_minutes: float
    degenerate: bool  # fewer than two samples; sd reported as 0

    @property
    def total_minutes(self) -> float:
        return self.total_seconds / 60.0

    @classmethod
    def of_seconds(cls, durations: list[int]) -> "DurationStats":
        n = len(durations)
        total = sum(durations)
        if n == 0:
            return cls(0, 0, 0.0, 0.0, True)
        minutes = [d / 60.0 for d in durations]
        mean = total / 60.0 / n
        sd = statistics.stdev(minutes) if n > 1 else 0.0
        return cls(total, n, mean, sd, n < 2)


@dataclass(frozen=True)
class FrameworkMaintenanceStats:
    framework: str
    by_category: dict  # ActivityCategory -> DurationStats
    total_seconds: int
    versions_with_maintenance: int
    num_versions: int
    per_version_mean_minutes: float
    per_version_sd_minutes: float

    @property
    def total_minutes(self) -> float:
        return self.total_seconds / 60.0


@dataclass(frozen=True)
class SummaryStats:
    manual: DurationStats
    manual_by_protocol: dict  # protocol -> seconds
    implementation: dict  # framework -> DurationStats
    implementation_by_protocol: dict  # framework -> {protocol: seconds}
    maintenance: dict  # framework -> FrameworkMaintenanceStats


def maintenance_series(
    tables: MeasurementTables,
    framework: str,
    num_versions: int | None = None,
    categories: frozenset | None = None,
) -> list[tuple[int, float]]:
    """Per-version maintenance minutes for one framework, indices 1..m.

    Zero-maintenance versions appear with 0.0; this is the series behind the
    per-version chart and histogram and the increments of the cumulative
    automation-cost curve. categories restricts which activity categories
    count (default: all maintenance categories).
    """
    m = num_versions or tables.num_versions or tables.max_version_seen()
    totals = {i: 0 for i in range(1, m + 1)}
    for (fw, version), by_category in tables.maintenance.items():
        if fw != framework:
            continue
        if version not in totals:
            raise LedgerError(
                f"maintenance recorded at version {version} outside 1..{m}"
            )
        totals[version] += sum(
            seconds
            for category, (seconds, _) in by_category.items()
            if categories is None or category in categories
        )
    return [(i, totals[i] / 60.0) for i in range(1, m + 1)]


def summary_stats(
    tables: MeasurementTables, num_versions: int | None = None
) -> SummaryStats:
    """Summary tables: manual baseline, implementation, per-category and
    per-version maintenance. Per-version means divide by the number of
    replay steps, counting zero-maintenance versions in the denominator."""
    manual_secs = list(tables.baseline_manual.values())
    manual = DurationStats.of_seconds(manual_secs)

    impl: dict[str, DurationStats] = {}
    impl_by_protocol: dict[str, dict[str, int]] = {}
    for (protocol, fw), seconds in sorted(tables.implementation.items()):
        impl_by_protocol.setdefault(fw, {})[protocol] = seconds
    for fw, per_protocol in impl_by_protocol.items():
        impl[fw] = DurationStats.of_seconds(list(per_protocol.values()))

    m = num_versions or tables.num_versions or tables.max_version_seen()
    maintenance: dict[str, FrameworkMaintenanceStats] = {}
    frameworks = {fw for (fw, _) in tables.maintenance}
    frameworks.update(impl_by_protocol)
    for fw in sorted(frameworks):
        by_category: dict[ActivityCategory, DurationStats] = {}
        for category in ActivityCategory:
            durations = [
                r.duration_s
                for r in tables.maintenance_records
                if r.framework == fw and r.category is category
            ]
            if durations:
                by_category[category] = DurationStats.of_seconds(durations)
        series = maintenance_series(tables, fw, m) if m else []
        total_seconds = sum(s.total_seconds for s in by_category.values())
        with_maint = sum(1 for _, minutes in series if minutes > 0)
        per_version = [minutes for _, minutes in series]
        mean = sum(per_version) / m if m else 0.0
        sd = statistics.stdev(per_version) if len(per_version) > 1 else 0.0
        maintenance[fw] = FrameworkMaintenanceStats(
            framework=fw,
            by_category=by_category,
            total_seconds=total_seconds,
            versions_with_maintenance=with_maint,
            num_versions=m,
            per_version_mean_minutes=mean,
            per_version_sd_minutes=sd,
        )

    return SummaryStats(
        manual=manual,
        manual_by_protocol=dict(sorted(tables.baseline_manual.items())),
        implementation=impl,
        implementation_by_protocol=impl_by_protocol,
        maintenance=maintenance,
    )
