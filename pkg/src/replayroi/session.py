"""Replay session state machine and the live session that drives it.

The session is event-sourced: every operation validates against current
state, appends exactly one event (occasionally two, see stop_activity) to
the ledger, and folds that event into the in-memory state with the same
code a cold reload uses. State is therefore always reproducible from the
ledger file alone, which is what makes kill-and-resume safe: reopening a
session folds the surviving events and continues, including an activity
timer that was running when the process died.

Workflow per replay step, mirroring how a human works through a version:

    checkout -> verify build -> run tests -> classify each failure
    -> timed maintenance activities -> re-run until green or waived
    -> complete version

Baseline work (manual timings, test implementation) happens before the
session starts and is keyed to version 0.

Timer durations come from the monotonic clock when start and stop happen in
the same process (same clock epoch); across a restart the wall-clock delta
is used instead, since monotonic readings from different boots do not
compare. Durations are floored to whole seconds.
"""

from dataclasses import dataclass, field as dc_field
from datetime import datetime
from pathlib import Path

from .clock import SystemClock
from .errors import BlockedError, ReplayRoiError, UsageError
from .history import VersionSequence
from .ledger import Event, EventLedger, MeasurementTables, load_events
from .records import (
    MAINTENANCE_CATEGORIES,
    ActivityCategory,
    FailureKind,
)

BASELINE_CATEGORIES = frozenset({
    ActivityCategory.IMPLEMENTATION,
    ActivityCategory.MANUAL_BASELINE,
})


class SessionError(ReplayRoiError):
    pass


class InvalidTransitionError(SessionError, UsageError):
    pass


class ActivityTimerError(SessionError, UsageError):
    pass


class BaselineIncompleteError(SessionError, BlockedError):
    pass


@dataclass
class ProjectConfig:
    """The subject and instruments of a study, from the ProjectConfigured
    event payload."""

    name: str
    repo: str
    branch: str
    build_command: str
    protocols: list = dc_field(default_factory=list)  # of dicts
    frameworks: list = dc_field(default_factory=list)
    tests: list = dc_field(default_factory=list)
    options: dict = dc_field(default_factory=dict)

    @classmethod
    def from_payload(cls, p: dict) -> "ProjectConfig":
        return cls(
            name=p["name"],
            repo=p["repo"],
            branch=p["branch"],
            build_command=p["build_command"],
            protocols=list(p.get("protocols", [])),
            frameworks=list(p.get("frameworks", [])),
            tests=list(p.get("tests", [])),
            options=dict(p.get("options", {})),
        )

    def to_payload(self) -> dict:
        return {
            "name": self.name,
            "repo": self.repo,
            "branch": self.branch,
            "build_command": self.build_command,
            "protocols": self.protocols,
            "frameworks": self.frameworks,
            "tests": self.tests,
            "options": self.options,
        }

    def selected_protocol_ids(self) -> list[str]:
        return [p["id"] for p in self.protocols if p.get("selected", True)]

    def framework_ids(self) -> list[str]:
        return [f["id"] for f in self.frameworks]

    def tests_for(self, framework: str) -> list[dict]:
        selected = set(self.selected_protocol_ids())
        return [
            t for t in self.tests
            if t["framework"] == framework and t["protocol"] in selected
        ]


@dataclass
class SessionState:
    """Pure fold of the event list; never touches the filesystem."""

    config: ProjectConfig | None = None
    versions: VersionSequence | None = None
    started: bool = False
    completed: bool = False
    current_version: int = 0  # last checked-out replay step, 0 before any
    completed_versions: set = dc_field(default_factory=set)
    build_ok: bool | None = None  # for current_version; None before verify
    attempts: dict = dc_field(default_factory=dict)  # (v, proto, fw) -> n
    classifications: list = dc_field(default_factory=list)  # payload dicts
    script_updates: list = dc_field(default_factory=list)
    tables: MeasurementTables = dc_field(default_factory=MeasurementTables)
    last_seq: int = 0
    last_instant: datetime | None = None

    def apply(self, event: Event) -> None:
        p = event.payload
        kind = event.kind
        if kind == "ProjectConfigured":
            self.config = ProjectConfig.from_payload(p)
        elif kind == "SessionStarted":
            self.versions = VersionSequence.from_payload(p)
            self.started = True
        elif kind == "VersionCheckedOut":
            self.current_version = int(p["version"])
            self.build_ok = None
        elif kind == "BuildVerified":
            self.build_ok = bool(p["ok"])
        elif kind == "TestRun":
            key = (int(p["version"]), p["protocol"], p["framework"])
            self.attempts[key] = max(self.attempts.get(key, 0), int(p["attempt"]))
        elif kind == "FailureClassified":
            self.classifications.append(dict(p))
        elif kind == "TestScriptUpdated":
            self.script_updates.append(dict(p))
        elif kind == "VersionCompleted":
            self.completed_versions.add(int(p["version"]))
        elif kind == "SessionCompleted":
            self.completed = True
        self.tables.apply(event)
        self.last_seq = event.seq
        self.last_instant = event.at

    @classmethod
    def replay(cls, events) -> "SessionState":
        state = cls()
        for event in events:
            state.apply(event)
        return state

    # -- queries ----------------------------------------------------------

    @property
    def num_versions(self) -> int:
        return len(self.versions) if self.versions is not None else 0

    @property
    def next_version(self) -> int | None:
        """The next replay step to check out, None when all are done."""
        if not self.started:
            return None
        for i in range(1, self.num_versions + 1):
            if i not in self.completed_versions:
                return i
        return None

    @property
    def open_activity(self) -> dict | None:
        return self.tables.open_activity

    def runs_at(self, version: int) -> list:
        return [r for r in self.tables.runs if r.version == version]

    def latest_outcome(self, version: int, protocol: str, framework: str):
        """(outcome, attempt) of the newest run of one test, or None."""
        best = None
        for r in self.tables.runs:
            if (r.version, r.protocol, r.framework) == (version, protocol, framework):
                if best is None or r.attempt > best.attempt:
                    best = r
        return (best.outcome, best.attempt) if best else None

    def classified_keys(self) -> set:
        return {
            (c["version"], c["protocol"], c["framework"], c["attempt"])
            for c in self.classifications
        }

    def unclassified_failures(self, version: int) -> list:
        """Failed runs at this version whose newest attempt lacks a
        classification. Superseded attempts do not need one."""
        latest: dict[tuple, object] = {}
        for r in self.tables.runs:
            if r.version != version:
                continue
            key = (r.protocol, r.framework)
            if key not in latest or r.attempt > latest[key].attempt:
                latest[key] = r
        done = self.classified_keys()
        return [
            r for r in latest.values()
            if r.outcome == "fail"
            and (version, r.protocol, r.framework, r.attempt) not in done
        ]

    def baseline_missing(self) -> list[str]:
        """Human-readable list of baseline entries still unrecorded."""
        if self.config is None:
            return ["project is not configured"]
        missing = []
        for protocol in self.config.selected_protocol_ids():
            if protocol not in self.tables.baseline_manual:
                missing.append(f"manual baseline for {protocol}")
        for fw in self.config.framework_ids():
            for test in self.config.tests_for(fw):
                if (test["protocol"], fw) not in self.tables.implementation:
                    missing.append(f"implementation of {test['protocol']} on {fw}")
        return missing

    def progress(self) -> dict:
        return {
            "configured": self.config is not None,
            "started": self.started,
            "completed": self.completed,
            "num_versions": self.num_versions,
            "versions_completed": len(self.completed_versions),
            "current_version": self.current_version,
            "next_version": self.next_version,
            "build_ok": self.build_ok,
            "open_activity": self.open_activity,
            "last_seq": self.last_seq,
        }


def _floor_nonneg_seconds(value: float) -> int:
    return max(0, int(value))


class ReplaySession:
    """Live, single-writer session over one ledger file.

    Every public method is one atomic operation: validate, append, fold.
    All methods raise UsageError subclasses on invalid operations and leave
    the ledger untouched in that case.
    """

    def __init__(self, ledger: EventLedger, clock=None):
        self.ledger = ledger
        self.clock = clock or SystemClock()
        self.state = SessionState.replay(ledger.events())

    @classmethod
    def open(cls, path: str | Path, clock=None) -> "ReplaySession":
        return cls(EventLedger(path), clock=clock)

    def close(self) -> None:
        self.ledger.close()

    def __enter__(self) -> "ReplaySession":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def _emit(self, kind: str, payload: dict) -> int:
        at = self.clock.now()
        seq = self.ledger.append(kind, payload, at)
        self.state.apply(Event(seq=seq, at=at, kind=kind, payload=payload))
        return seq

    def _require_config(self) -> ProjectConfig:
        if self.state.config is None:
            raise InvalidTransitionError("configure the project first")
        return self.state.config

    def _require_running(self) -> None:
        if not self.state.started:
            raise InvalidTransitionError("session has not started")
        if self.state.completed:
            raise InvalidTransitionError("session is already completed")

    def _require_version_open(self) -> int:
        self._require_running()
        v = self.state.current_version
        if v == 0 or v in self.state.completed_versions:
            raise InvalidTransitionError("no version is checked out")
        return v

    # -- configuration and baseline ---------------------------------------

    def configure(self, config: ProjectConfig) -> int:
        if self.state.started:
            raise InvalidTransitionError("cannot reconfigure after session start")
        ids = [p["id"] for p in config.protocols]
        if len(ids) != len(set(ids)):
            raise UsageError("duplicate protocol ids")
        fw_ids = [f["id"] for f in config.frameworks]
        if len(fw_ids) != len(set(fw_ids)):
            raise UsageError("duplicate framework ids")
        for t in config.tests:
            if t["protocol"] not in ids:
                raise UsageError(f"test references unknown protocol {t['protocol']!r}")
            if t["framework"] not in fw_ids:
                raise UsageError(f"test references unknown framework {t['framework']!r}")
        return self._emit("ProjectConfigured", config.to_payload())

    def record_baseline(
        self,
        category: ActivityCategory,
        protocol: str,
        duration_s: int,
        framework: str | None = None,
        source: str = "manual",
    ) -> int:
        """Directly enter a baseline duration (re-recording overwrites)."""
        config = self._require_config()
        if self.state.started:
            raise InvalidTransitionError("baseline is closed once the session starts")
        category = ActivityCategory(category)
        if category not in BASELINE_CATEGORIES:
            raise UsageError(f"{category.value} is not a baseline category")
        if protocol not in {p["id"] for p in config.protocols}:
            raise UsageError(f"unknown protocol {protocol!r}")
        if category is ActivityCategory.IMPLEMENTATION:
            if framework is None:
                raise UsageError("implementation baseline needs a framework")
            if framework not in set(config.framework_ids()):
                raise UsageError(f"unknown framework {framework!r}")
        elif framework is not None:
            raise UsageError("manual baseline is framework-independent")
        if duration_s < 0:
            raise UsageError("duration must be nonnegative")
        payload = {
            "category": category.value,
            "protocol": protocol,
            "duration_s": int(duration_s),
            "source": source,
        }
        if framework is not None:
            payload["framework"] = framework
        return self._emit("BaselineRecorded", payload)

    # -- session lifecycle ------------------------------------------------

    def start(self, versions: VersionSequence, force: bool = False) -> int:
        self._require_config()
        if self.state.started:
            raise InvalidTransitionError("session already started")
        if len(versions) == 0:
            raise UsageError("cannot start a session with zero versions")
        missing = self.state.baseline_missing()
        if missing and not force:
            preview = "; ".join(missing[:5])
            if len(missing) > 5:
                preview += f"; and {len(missing) - 5} more"
            raise BaselineIncompleteError(
                f"baseline incomplete ({preview}); record it or start with force"
            )
        payload = versions.to_payload()
        payload["num_versions"] = len(versions)
        return self._emit("SessionStarted", payload)

    def checkout(self, version: int) -> int:
        self._require_running()
        expected = self.state.next_version
        if expected is None:
            raise InvalidTransitionError("all versions are completed")
        if version != expected:
            raise InvalidTransitionError(
                f"next version to replay is {expected}, not {version}"
            )
        entry = self.state.versions.entry(version)
        return self._emit("VersionCheckedOut", {
            "version": version,
            "commit": entry.commit.id,
            "commit_timestamp": entry.commit.timestamp.isoformat(),
        })

    def verify_build(self, ok: bool, returncode: int = 0, log_excerpt: str = "") -> int:
        version = self._require_version_open()
        return self._emit("BuildVerified", {
            "version": version,
            "ok": bool(ok),
            "returncode": int(returncode),
            "log_excerpt": log_excerpt[-4000:],
        })

    def record_test_run(
        self,
        protocol: str,
        framework: str,
        outcome: str,
        duration_s: float | None = None,
        note: str = "",
    ) -> int:
        version = self._require_version_open()
        if self.state.build_ok is not True:
            raise InvalidTransitionError("verify the build before running tests")
        if outcome not in ("pass", "fail"):
            raise UsageError(f"outcome must be pass or fail, got {outcome!r}")
        config = self._require_config()
        if framework not in set(config.framework_ids()):
            raise UsageError(f"unknown framework {framework!r}")
        if protocol not in {p["id"] for p in config.protocols}:
            raise UsageError(f"unknown protocol {protocol!r}")
        key = (version, protocol, framework)
        attempt = self.state.attempts.get(key, 0) + 1
        payload = {
            "version": version,
            "protocol": protocol,
            "framework": framework,
            "outcome": outcome,
            "attempt": attempt,
            "note": note,
        }
        if duration_s is not None:
            payload["duration_s"] = duration_s
        return self._emit("TestRun", payload)

    def classify_failure(
        self,
        protocol: str,
        framework: str,
        kind: FailureKind,
        attempt: int | None = None,
        note: str = "",
    ) -> int:
        """Attach a cause to the newest run of one test.

        bug, broken_test and crash classify a failing run. false_negative
        classifies a run that passed when the tester knows it should have
        failed, which is why a passing outcome is required there.
        """
        version = self._require_version_open()
        kind = FailureKind(kind)
        latest = self.state.latest_outcome(version, protocol, framework)
        if latest is None:
            raise InvalidTransitionError(
                f"no recorded run of {protocol} on {framework} at version {version}"
            )
        outcome, newest_attempt = latest
        attempt = newest_attempt if attempt is None else attempt
        if attempt != newest_attempt:
            raise UsageError(
                f"can only classify the newest attempt ({newest_attempt})"
            )
        if kind is FailureKind.FALSE_NEGATIVE:
            if outcome != "pass":
                raise UsageError(
                    "a false negative is a passing run that should have failed; "
                    f"the newest run of {protocol} on {framework} failed"
                )
        elif outcome != "fail":
            raise UsageError(
                f"newest run of {protocol} on {framework} passed; nothing to classify"
            )
        key = (version, protocol, framework, attempt)
        if key in self.state.classified_keys():
            raise UsageError("this run is already classified")
        return self._emit("FailureClassified", {
            "version": version,
            "protocol": protocol,
            "framework": framework,
            "attempt": attempt,
            "kind": kind.value,
            "note": note,
        })

    # -- timed activities -------------------------------------------------

    def start_activity(
        self,
        category: ActivityCategory,
        protocol: str,
        framework: str | None = None,
        note: str = "",
    ) -> int:
        category = ActivityCategory(category)
        config = self._require_config()
        if self.state.open_activity is not None:
            open_cat = self.state.open_activity.get("category")
            raise ActivityTimerError(
                f"an activity is already running ({open_cat}); stop it first"
            )
        if category in MAINTENANCE_CATEGORIES:
            version = self._require_version_open()
        else:
            if self.state.started:
                raise InvalidTransitionError(
                    "baseline activities belong before the session starts"
                )
            version = 0
        if protocol not in {p["id"] for p in config.protocols}:
            raise UsageError(f"unknown protocol {protocol!r}")
        needs_fw = category is not ActivityCategory.MANUAL_BASELINE
        if needs_fw and framework is None:
            raise UsageError(f"{category.value} needs a framework")
        if not needs_fw and framework is not None:
            raise UsageError("manual baseline is framework-independent")
        if framework is not None and framework not in set(config.framework_ids()):
            raise UsageError(f"unknown framework {framework!r}")
        payload = {
            "version": version,
            "category": category.value,
            "protocol": protocol,
            "framework": framework,
            "note": note,
            "wall": self.clock.now().isoformat(),
            "monotonic": self.clock.monotonic(),
            "clock_epoch": self.clock.epoch,
        }
        return self._emit("ActivityStarted", payload)

    def stop_activity(self, note: str = "") -> int:
        """Stop the running timer and record its duration.

        Version-0 (baseline) activities additionally write the resulting
        duration into the baseline tables via a BaselineRecorded event.
        """
        open_act = self.state.open_activity
        if open_act is None:
            raise ActivityTimerError("no activity is running")
        stopped_wall = self.clock.now()
        started_wall = datetime.fromisoformat(open_act["wall"])
        if open_act.get("clock_epoch") == self.clock.epoch:
            elapsed = self.clock.monotonic() - float(open_act["monotonic"])
        else:
            # Restarted process: monotonic readings do not compare across
            # boots, so fall back to wall-clock difference.
            elapsed = (stopped_wall - started_wall).total_seconds()
        duration_s = _floor_nonneg_seconds(elapsed)
        category = ActivityCategory(open_act["category"])
        payload = {
            "version": int(open_act["version"]),
            "category": category.value,
            "protocol": open_act["protocol"],
            "framework": open_act.get("framework"),
            "started_at": started_wall.isoformat(),
            "stopped_at": stopped_wall.isoformat(),
            "duration_s": duration_s,
            "note": note or open_act.get("note", ""),
            "manual_override": False,
        }
        seq = self._emit("ActivityStopped", payload)
        if category in BASELINE_CATEGORIES:
            self.record_baseline(
                category=category,
                protocol=open_act["protocol"],
                duration_s=duration_s,
                framework=open_act.get("framework"),
                source="timer",
            )
        return seq

    def discard_activity(self) -> int:
        """Abandon the running timer without counting its time anywhere."""
        open_act = self.state.open_activity
        if open_act is None:
            raise ActivityTimerError("no activity is running")
        stopped_wall = self.clock.now()
        payload = {
            "version": int(open_act["version"]),
            "category": open_act["category"],
            "protocol": open_act["protocol"],
            "framework": open_act.get("framework"),
            "started_at": open_act["wall"],
            "stopped_at": stopped_wall.isoformat(),
            "duration_s": 0,
            "note": "discarded",
            "manual_override": True,
            "discarded": True,
        }
        return self._emit("ActivityStopped", payload)

    def record_activity(
        self,
        category: ActivityCategory,
        protocol: str,
        duration_s: int,
        framework: str | None = None,
        note: str = "",
    ) -> int:
        """Enter a finished activity with a hand-measured duration.

        Emits the same start/stop pair a timer would, flagged as a manual
        override, so every stop in the ledger still follows a start.
        """
        category = ActivityCategory(category)
        if duration_s < 0:
            raise UsageError("duration must be nonnegative")
        self.start_activity(category, protocol, framework=framework, note=note)
        open_act = self.state.open_activity
        now = self.clock.now()
        payload = {
            "version": int(open_act["version"]),
            "category": category.value,
            "protocol": protocol,
            "framework": framework,
            "started_at": open_act["wall"],
            "stopped_at": now.isoformat(),
            "duration_s": int(duration_s),
            "note": note,
            "manual_override": True,
        }
        seq = self._emit("ActivityStopped", payload)
        if category in BASELINE_CATEGORIES:
            self.record_baseline(
                category=category,
                protocol=protocol,
                duration_s=int(duration_s),
                framework=framework,
                source="manual",
            )
        return seq

    # -- bugs, scripts, completion ----------------------------------------

    def record_bug(
        self, description: str, resolution: str, activity_seq: int | None = None
    ) -> int:
        version = self._require_version_open()
        if not description:
            raise UsageError("bug description must be nonempty")
        if resolution not in ("fix", "workaround"):
            raise UsageError("resolution must be fix or workaround")
        if activity_seq is None:
            activity_seq = self.state.last_seq
        if not 1 <= activity_seq <= self.state.last_seq:
            raise UsageError(f"activity_seq {activity_seq} is not a recorded event")
        return self._emit("BugRecorded", {
            "version": version,
            "description": description,
            "resolution": resolution,
            "activity_seq": int(activity_seq),
        })

    def record_script_update(
        self, protocol: str, framework: str, description: str = ""
    ) -> int:
        version = self._require_version_open()
        config = self._require_config()
        if (protocol, framework) not in {
            (t["protocol"], t["framework"]) for t in config.tests
        }:
            raise UsageError(f"no automated test for {protocol} on {framework}")
        return self._emit("TestScriptUpdated", {
            "version": version,
            "protocol": protocol,
            "framework": framework,
            "description": description,
        })

    def complete_version(self, force: bool = False) -> int:
        version = self._require_version_open()
        if self.state.open_activity is not None:
            raise InvalidTransitionError("stop the running activity first")
        pending = self.state.unclassified_failures(version)
        if pending and not force:
            names = ", ".join(f"{r.protocol}/{r.framework}" for r in pending)
            raise InvalidTransitionError(
                f"unclassified failing runs at version {version}: {names}"
            )
        return self._emit("VersionCompleted", {"version": version})

    def complete_session(self, note: str = "", force: bool = False) -> int:
        self._require_running()
        if self.state.open_activity is not None:
            raise InvalidTransitionError("stop the running activity first")
        remaining = self.state.next_version
        if remaining is not None and not force:
            raise InvalidTransitionError(
                f"version {remaining} of {self.state.num_versions} is not completed"
            )
        return self._emit("SessionCompleted", {
            "versions_completed": len(self.state.completed_versions),
            "note": note,
        })


def load_session_state(path: str | Path) -> SessionState:
    """Fold a ledger file into session state without taking the writer."""
    return SessionState.replay(load_events(path))


DEFAULT_TEST_TIMEOUT_S = 600.0


class ReplayDriver:
    """Binds a live session to an actual working copy: checks out the next
    version, runs the build check, and executes configured test commands,
    recording every outcome as session events.

    The driver never decides why a test failed; classification stays with
    the human operator.
    """

    def __init__(self, session: ReplaySession, repo_path: str | Path | None = None):
        config = session.state.config
        if config is None:
            raise InvalidTransitionError("configure the project before driving it")
        from .history import GitRepository  # local import to keep layering flat

        self.session = session
        self.workspace = GitRepository(repo_path or config.repo)

    @property
    def config(self) -> ProjectConfig:
        return self.session.state.config

    def advance(self, force: bool = False) -> dict:
        """Check out the next version and verify its build."""
        from .history import checkout_version, verify_build

        state = self.session.state
        if not state.started:
            raise InvalidTransitionError("session has not started")
        version = state.next_version
        if version is None:
            raise InvalidTransitionError("all versions are completed")
        ws = checkout_version(
            state.versions, version, self.workspace,
            force=force, now=self.session.clock.now(),
        )
        self.session.checkout(version)
        timeout = float(self.config.options.get("build_timeout_s", 30 * 60))
        result = verify_build(ws, self.config.build_command, timeout_s=timeout)
        self.session.verify_build(
            ok=result.ok, returncode=result.returncode, log_excerpt=result.log_excerpt
        )
        return {
            "version": version,
            "commit": ws.commit_id,
            "build_ok": result.ok,
            "returncode": result.returncode,
        }

    def run_test(self, protocol: str, framework: str) -> dict:
        """Execute one automated test in the workspace and record the run."""
        import shlex
        import subprocess
        import time

        refs = [
            t for t in self.config.tests
            if t["protocol"] == protocol and t["framework"] == framework
        ]
        if not refs:
            raise UsageError(f"no automated test for {protocol} on {framework}")
        command = refs[0]["run_command"]
        argv = shlex.split(command)
        timeout = float(self.config.options.get("test_timeout_s", DEFAULT_TEST_TIMEOUT_S))
        started = time.monotonic()
        try:
            proc = subprocess.run(
                argv, cwd=self.workspace.path, capture_output=True,
                text=True, timeout=timeout,
            )
            returncode = proc.returncode
            note = "" if returncode == 0 else f"exit {returncode}"
            if returncode < 0:
                note = f"terminated by signal {-returncode}"
        except FileNotFoundError:
            returncode = 127
            note = f"command not found: {argv[0] if argv else command!r}"
        except subprocess.TimeoutExpired:
            returncode = 124
            note = f"timed out after {timeout:.0f}s"
        duration = time.monotonic() - started
        outcome = "pass" if returncode == 0 else "fail"
        self.session.record_test_run(
            protocol=protocol,
            framework=framework,
            outcome=outcome,
            duration_s=round(duration, 3),
            note=note,
        )
        return {
            "protocol": protocol,
            "framework": framework,
            "outcome": outcome,
            "returncode": returncode,
            "duration_s": round(duration, 3),
            "note": note,
        }

    def run_all(self, framework: str | None = None) -> list[dict]:
        """Execute every selected automated test, one framework or all."""
        frameworks = (
            [framework] if framework is not None else self.config.framework_ids()
        )
        results = []
        for fw in frameworks:
            for ref in self.config.tests_for(fw):
                results.append(self.run_test(ref["protocol"], fw))
        return results
