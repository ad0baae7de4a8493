"""Shared fixtures: reference duration tables, ledger builders, and
scripted git repositories with controllable commit dates."""

import json
import os
import subprocess
from datetime import datetime, timedelta, timezone
from pathlib import Path

import pytest

from replayroi import (
    ActivityCategory,
    CommitRef,
    EventLedger,
    ManualClock,
    ProjectConfig,
    ReplaySession,
    VersionEntry,
    VersionSequence,
)

# Per-protocol one-time implementation durations, whole seconds. The six
# values per framework reproduce the published per-framework totals and
# mean +- sample sd within a hundredth of a minute.
IMPLEMENTATION_SECONDS = {
    "selenium": [41748, 3201, 25162, 23900, 30763, 12320],
    "eyeautomate": [20778, 1189, 7661, 17769, 11034, 13231],
}

# Maintenance totals per category (seconds) and their occurrence counts.
MAINTENANCE_SECONDS = {
    "selenium": {
        ActivityCategory.ANALYSIS_BROKEN_TEST: (5475, 19),
        ActivityCategory.REPAIR_BROKEN_TEST: (14831, 19),
        ActivityCategory.HANDLE_BUG: (2181, 24),
        ActivityCategory.HANDLE_FALSE_NEGATIVE: (3399, 2),
        ActivityCategory.HANDLE_CRASH: (2166, 4),
    },
    "eyeautomate": {
        ActivityCategory.ANALYSIS_BROKEN_TEST: (4041, 22),
        ActivityCategory.REPAIR_BROKEN_TEST: (34243, 22),
        ActivityCategory.HANDLE_BUG: (1827, 30),
        ActivityCategory.HANDLE_FALSE_NEGATIVE: (614, 2),
        ActivityCategory.HANDLE_CRASH: (243, 2),
    },
}

MANUAL_BASELINE_SECONDS = 750  # 12.5 min per protocol, 75 total over six

PROTOCOLS = [f"p{i}" for i in range(1, 7)]
FRAMEWORKS = ["selenium", "eyeautomate"]
NUM_REPLAY_VERSIONS = 65


def split_evenly(total: int, parts: int) -> list[int]:
    """Integer pieces of `total`, lengths differing by at most one."""
    base, extra = divmod(total, parts)
    return [base + (1 if i < extra else 0) for i in range(parts)]


def weekly_versions(m: int, start=None) -> VersionSequence:
    t0 = start or datetime(2020, 1, 6, 9, 0, tzinfo=timezone.utc)
    entries = tuple(
        VersionEntry(
            index=i,
            commit=CommitRef(id=f"{i:03d}" + "a" * 37, timestamp=t0 + timedelta(weeks=i - 1)),
            label=f"v{i}",
        )
        for i in range(1, m + 1)
    )
    return VersionSequence(entries=entries, strategy="fixture")


def study_config(repo: str = ".") -> ProjectConfig:
    return ProjectConfig(
        name="study",
        repo=repo,
        branch="main",
        build_command="true",
        protocols=[{"id": p, "title": p.upper(), "selected": True} for p in PROTOCOLS],
        frameworks=[{"id": fw, "name": fw} for fw in FRAMEWORKS],
        tests=[
            {"protocol": p, "framework": fw, "run_command": "true", "script_path": ""}
            for fw in FRAMEWORKS
            for p in PROTOCOLS
        ],
    )


def build_reference_session(ledger_path=None, with_maintenance=True) -> ReplaySession:
    """A complete replayed study whose folded tables reproduce the
    reference implementation and maintenance figures."""
    clock = ManualClock()
    session = ReplaySession(EventLedger(ledger_path), clock=clock)
    session.configure(study_config())
    for p in PROTOCOLS:
        session.record_baseline(ActivityCategory.MANUAL_BASELINE, p, MANUAL_BASELINE_SECONDS)
    for fw in FRAMEWORKS:
        for p, seconds in zip(PROTOCOLS, IMPLEMENTATION_SECONDS[fw]):
            session.record_baseline(ActivityCategory.IMPLEMENTATION, p, seconds, framework=fw)
    versions = weekly_versions(NUM_REPLAY_VERSIONS)
    session.start(versions)

    # Pre-compute which activities land at which version: occurrences cycle
    # through versions so every category spreads over the replay.
    per_version: dict[int, list] = {v: [] for v in range(1, NUM_REPLAY_VERSIONS + 1)}
    if with_maintenance:
        for fw in FRAMEWORKS:
            slot = 0
            for category, (total, occurrences) in MAINTENANCE_SECONDS[fw].items():
                for piece in split_evenly(total, occurrences):
                    version = (slot % NUM_REPLAY_VERSIONS) + 1
                    protocol = PROTOCOLS[slot % len(PROTOCOLS)]
                    per_version[version].append((category, protocol, fw, piece))
                    slot += 1

    for v in range(1, NUM_REPLAY_VERSIONS + 1):
        session.checkout(v)
        session.verify_build(True)
        for category, protocol, fw, seconds in per_version[v]:
            session.record_activity(category, protocol, seconds, framework=fw)
        session.complete_version()
        clock.advance(60)
    session.complete_session()
    return session


@pytest.fixture
def reference_session():
    return build_reference_session()


@pytest.fixture
def reference_tables(reference_session):
    return reference_session.state.tables


# ---------------------------------------------------------------------------
# Scripted git repositories


def git(repo: Path, *args: str, env_extra=None) -> str:
    env = dict(os.environ)
    env.update(env_extra or {})
    result = subprocess.run(
        ["git", "-C", str(repo), *args], capture_output=True, text=True, env=env
    )
    if result.returncode != 0:
        raise RuntimeError(f"git {' '.join(args)}: {result.stderr}")
    return result.stdout


def init_repo(path: Path, branch: str = "main") -> Path:
    path.mkdir(parents=True, exist_ok=True)
    git(path, "init", "-q", "-b", branch)
    git(path, "config", "user.email", "fixture@example.invalid")
    git(path, "config", "user.name", "Fixture")
    git(path, "config", "commit.gpgsign", "false")
    return path


def commit_at(repo: Path, when: datetime, files: dict, message: str = "change") -> str:
    """Write files, commit with both dates pinned, return the commit id."""
    for rel, content in files.items():
        target = repo / rel
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_text(content, encoding="utf-8")
    git(repo, "add", "-A")
    stamp = when.isoformat()
    git(
        repo, "commit", "-q", "-m", message, "--allow-empty",
        env_extra={"GIT_AUTHOR_DATE": stamp, "GIT_COMMITTER_DATE": stamp},
    )
    return git(repo, "rev-parse", "HEAD").strip()


@pytest.fixture
def weekly_repo(tmp_path):
    """Ten weekly commits; each bumps a counter file."""
    repo = init_repo(tmp_path / "subject")
    t0 = datetime(2021, 3, 1, 12, 0, tzinfo=timezone.utc)
    ids = []
    for week in range(10):
        ids.append(commit_at(
            repo,
            t0 + timedelta(weeks=week),
            {"counter.txt": f"week {week}\n" * (week + 1)},
            f"week {week}",
        ))
    return repo, ids, t0
