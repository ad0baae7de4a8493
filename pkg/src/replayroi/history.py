"""Commit history loading, version selection, checkout, and build checks.

History access goes through a small version-control adapter; the one
shipped backend drives a local git working copy through the git CLI.
Selection turns the full commit list into the chronological sub-sequence of
versions to replay, either one per time interval, after enough accumulated
churn, or from an explicit commit list. Sentinel windows densify sampling
around dates of interest.

Churn is counted as lines added plus lines deleted against the previous
commit on a first-parent walk, so merge commits do not double-count their
branches. Interval buckets anchor at the range start instant, never at
calendar week boundaries, so selection is deterministic across locales.
"""

import shlex
import subprocess
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from pathlib import Path

from .errors import ReplayRoiError, UsageError

DEFAULT_BUILD_TIMEOUT_S = 30 * 60


class HistoryError(ReplayRoiError):
    pass


class RepositoryUnreadableError(HistoryError, UsageError):
    pass


class BranchMissingError(HistoryError, UsageError):
    pass


class EmptyRangeError(HistoryError, UsageError):
    """The time range excludes every commit (distinct from an empty repo)."""


class SelectionError(HistoryError, UsageError):
    pass


class DirtyWorkspaceError(HistoryError, UsageError):
    pass


class CheckoutError(HistoryError):
    pass


class BuildCommandNotFoundError(HistoryError, UsageError):
    pass


class BuildTimeoutError(HistoryError):
    pass


@dataclass(frozen=True)
class CommitRef:
    id: str
    timestamp: datetime
    churn: int | None = None  # added + deleted lines vs first parent

    def __post_init__(self):
        if not self.id:
            raise UsageError("commit id must be nonempty")
        if self.timestamp.tzinfo is None:
            raise UsageError("commit timestamps must be timezone-aware")
        if self.churn is not None and self.churn < 0:
            raise UsageError("churn cannot be negative")

    @property
    def short_id(self) -> str:
        return self.id[:8]


@dataclass(frozen=True)
class VersionEntry:
    index: int  # 1-based position in the replay sequence
    commit: CommitRef
    label: str

    def __post_init__(self):
        if self.index < 1:
            raise UsageError("version indices start at 1")

    @property
    def calendar_time(self) -> datetime:
        return self.commit.timestamp


@dataclass(frozen=True)
class SentinelWindow:
    """Densified sampling of [start, end] at a finer period."""

    start: datetime
    end: datetime
    period: timedelta

    def __post_init__(self):
        if self.end < self.start:
            raise UsageError("sentinel window ends before it starts")
        if self.period <= timedelta(0):
            raise UsageError("sentinel period must be positive")


@dataclass(frozen=True)
class SelectionStrategy:
    kind: str  # "interval" | "churn" | "explicit"
    period: timedelta | None = None
    threshold_lines: int | None = None
    commit_ids: tuple[str, ...] = ()
    sentinels: tuple[SentinelWindow, ...] = ()
    anchor: datetime | None = None  # interval bucket origin; default first commit

    def __post_init__(self):
        if self.kind == "interval":
            if self.period is None or self.period <= timedelta(0):
                raise UsageError("interval strategy needs a positive period")
        elif self.kind == "churn":
            if not self.threshold_lines or self.threshold_lines <= 0:
                raise UsageError("churn strategy needs a positive line threshold")
        elif self.kind == "explicit":
            if not self.commit_ids:
                raise UsageError("explicit strategy needs at least one commit id")
        else:
            raise UsageError(f"unknown selection strategy: {self.kind!r}")

    @classmethod
    def interval(cls, period, sentinels=(), anchor=None) -> "SelectionStrategy":
        return cls("interval", period=period, sentinels=tuple(sentinels), anchor=anchor)

    @classmethod
    def churn(cls, threshold_lines, sentinels=()) -> "SelectionStrategy":
        return cls("churn", threshold_lines=threshold_lines, sentinels=tuple(sentinels))

    @classmethod
    def explicit(cls, commit_ids) -> "SelectionStrategy":
        return cls("explicit", commit_ids=tuple(commit_ids))

    def describe(self) -> str:
        if self.kind == "interval":
            base = f"interval:{int(self.period.total_seconds())}s"
        elif self.kind == "churn":
            base = f"churn:{self.threshold_lines}"
        else:
            base = f"explicit:{len(self.commit_ids)}"
        if self.sentinels:
            base += f"+{len(self.sentinels)}sentinel"
        return base


@dataclass(frozen=True)
class VersionSequence:
    entries: tuple[VersionEntry, ...]
    strategy: str  # SelectionStrategy.describe() of whatever produced it

    def __post_init__(self):
        for i, entry in enumerate(self.entries, start=1):
            if entry.index != i:
                raise UsageError(f"version indices must run 1..m, got {entry.index} at {i}")
        times = [e.calendar_time for e in self.entries]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise UsageError("version calendar times must strictly increase")

    def __len__(self) -> int:
        return len(self.entries)

    def entry(self, index: int) -> VersionEntry:
        if not 1 <= index <= len(self.entries):
            raise UsageError(f"version index {index} outside 1..{len(self.entries)}")
        return self.entries[index - 1]

    def to_payload(self) -> dict:
        return {
            "strategy": self.strategy,
            "entries": [
                {
                    "index": e.index,
                    "commit": e.commit.id,
                    "timestamp": e.commit.timestamp.isoformat(),
                    "churn": e.commit.churn,
                    "label": e.label,
                }
                for e in self.entries
            ],
        }

    @classmethod
    def from_payload(cls, payload: dict) -> "VersionSequence":
        entries = tuple(
            VersionEntry(
                index=raw["index"],
                commit=CommitRef(
                    id=raw["commit"],
                    timestamp=datetime.fromisoformat(raw["timestamp"]),
                    churn=raw.get("churn"),
                ),
                label=raw.get("label", ""),
            )
            for raw in payload["entries"]
        )
        return cls(entries=entries, strategy=payload.get("strategy", "imported"))


@dataclass(frozen=True)
class WorkspaceState:
    index: int
    commit_id: str
    checked_out_at: datetime
    path: Path


@dataclass(frozen=True)
class BuildResult:
    ok: bool
    returncode: int
    log_excerpt: str


# ---------------------------------------------------------------------------
# Git backend

class GitRepository:
    """Local git working copy driven through the git CLI."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        if not self.path.is_dir():
            raise RepositoryUnreadableError(f"not a directory: {self.path}")
        probe = self._git("rev-parse", "--git-dir", check=False)
        if probe.returncode != 0:
            raise RepositoryUnreadableError(
                f"{self.path} is not a git working copy: {probe.stderr.strip()}"
            )

    def _git(self, *args: str, check: bool = True) -> subprocess.CompletedProcess:
        result = subprocess.run(
            ["git", "-C", str(self.path), *args],
            capture_output=True,
            text=True,
        )
        if check and result.returncode != 0:
            raise HistoryError(
                f"git {' '.join(args)} failed: {result.stderr.strip()}"
            )
        return result

    def branch_exists(self, branch: str) -> bool:
        probe = self._git("rev-parse", "--verify", "--quiet", branch, check=False)
        return probe.returncode == 0

    def load_history(self, branch: str) -> list[CommitRef]:
        """All commits on the branch's first-parent walk, oldest first,
        with churn populated."""
        if not self.branch_exists(branch):
            raise BranchMissingError(f"no branch or rev {branch!r} in {self.path}")
        result = self._git(
            "log", "--first-parent", "--reverse", "--numstat",
            "--format=%x01%H %ct", branch,
        )
        commits: list[CommitRef] = []
        current: tuple[str, datetime] | None = None
        churn = 0
        for line in result.stdout.splitlines():
            if line.startswith("\x01"):
                if current is not None:
                    commits.append(CommitRef(current[0], current[1], churn))
                commit_id, unix_ts = line[1:].split()
                current = (commit_id, datetime.fromtimestamp(int(unix_ts), tz=timezone.utc))
                churn = 0
            elif line.strip():
                added, deleted, _path = line.split("\t", 2)
                # numstat prints "-" for binary files; count those as 0
                churn += (0 if added == "-" else int(added))
                churn += (0 if deleted == "-" else int(deleted))
        if current is not None:
            commits.append(CommitRef(current[0], current[1], churn))
        return commits

    def is_dirty(self) -> bool:
        status = self._git("status", "--porcelain")
        return bool(status.stdout.strip())

    def checkout(self, commit_id: str, force: bool = False) -> None:
        args = ["checkout", "--detach"]
        if force:
            args.append("--force")
        args.append(commit_id)
        result = self._git(*args, check=False)
        if result.returncode != 0:
            raise CheckoutError(
                f"checkout of {commit_id[:12]} failed: {result.stderr.strip()}"
            )

    def current_commit(self) -> str:
        return self._git("rev-parse", "HEAD").stdout.strip()


def _open_repository(repo) -> GitRepository:
    if isinstance(repo, GitRepository):
        return repo
    locator = str(repo)
    if "://" in locator or locator.startswith("git@"):
        raise RepositoryUnreadableError(
            f"remote locators are not supported; clone {locator} and point at the clone"
        )
    return GitRepository(locator)


# ---------------------------------------------------------------------------
# Operations

def load_commit_history(
    repo,
    branch: str,
    since: datetime | None = None,
    until: datetime | None = None,
) -> list[CommitRef]:
    """Commits on the branch within [since, until], oldest first.

    Raises EmptyRangeError when the branch has commits but the range
    excludes all of them.
    """
    backend = _open_repository(repo)
    commits = backend.load_history(branch)
    seen: set[str] = set()
    selected: list[CommitRef] = []
    for commit in commits:
        if since is not None and commit.timestamp < since:
            continue
        if until is not None and commit.timestamp > until:
            continue
        if commit.id in seen:
            continue
        seen.add(commit.id)
        selected.append(commit)
    selected.sort(key=lambda c: (c.timestamp, c.id))
    if commits and not selected:
        raise EmptyRangeError(
            f"no commits on {branch} between {since} and {until}"
        )
    if not commits:
        raise BranchMissingError(f"branch {branch!r} has no commits")
    return selected


def _interval_pick(
    history: list[CommitRef], period: timedelta, anchor: datetime
) -> list[CommitRef]:
    """Last commit at or before each boundary anchor + k*period. Periods
    with no new commit are skipped rather than repeating a version."""
    last_ts = history[-1].timestamp
    picked: list[CommitRef] = []
    k = 0
    boundary = anchor
    cursor = -1  # index of last commit at or before the current boundary
    while True:
        while cursor + 1 < len(history) and history[cursor + 1].timestamp <= boundary:
            cursor += 1
        if cursor >= 0:
            candidate = history[cursor]
            if not picked or candidate.id != picked[-1].id:
                picked.append(candidate)
        if boundary >= last_ts:
            break
        k += 1
        boundary = anchor + k * period
    return picked


def _churn_pick(history: list[CommitRef], threshold: int) -> list[CommitRef]:
    picked: list[CommitRef] = []
    accumulated = 0
    for commit in history:
        if commit.churn is None:
            raise SelectionError(
                f"commit {commit.short_id} has no churn; load history with churn"
            )
        accumulated += commit.churn
        if accumulated >= threshold:
            picked.append(commit)
            accumulated = 0
    return picked


def select_versions(
    history: list[CommitRef], strategy: SelectionStrategy
) -> VersionSequence:
    """Pick the replay sub-sequence from a sorted commit history.

    The result is always a subsequence of the input: sentinel-window picks
    are merged with the base picks by timestamp and deduplicated, then
    renumbered 1..m.
    """
    if not history:
        raise SelectionError("history is empty")
    timestamps = [c.timestamp for c in history]
    if any(b < a for a, b in zip(timestamps, timestamps[1:])):
        raise SelectionError("history must be sorted by timestamp")

    if strategy.kind == "interval":
        anchor = strategy.anchor or history[0].timestamp
        picked = _interval_pick(history, strategy.period, anchor)
    elif strategy.kind == "churn":
        picked = _churn_pick(history, strategy.threshold_lines)
    else:
        known = {c.id: c for c in history}
        missing = [cid for cid in strategy.commit_ids if cid not in known]
        if missing:
            raise SelectionError(f"commit ids not in history: {', '.join(missing)}")
        wanted = set(strategy.commit_ids)
        picked = [c for c in history if c.id in wanted]

    lo, hi = history[0].timestamp, history[-1].timestamp
    chosen = {c.id: c for c in picked}
    for window in strategy.sentinels:
        if window.start < lo or window.end > hi:
            raise SelectionError(
                f"sentinel window {window.start}..{window.end} outside history range"
            )
        sub = [c for c in history if window.start <= c.timestamp <= window.end]
        if not sub:
            continue
        for commit in _interval_pick(sub, window.period, window.start):
            chosen[commit.id] = commit

    ordered = sorted(chosen.values(), key=lambda c: (c.timestamp, c.id))
    if not ordered:
        raise SelectionError(f"strategy {strategy.describe()} selected no versions")
    entries = tuple(
        VersionEntry(
            index=i,
            commit=commit,
            label=f"v{i} {commit.short_id} {commit.timestamp.date().isoformat()}",
        )
        for i, commit in enumerate(ordered, start=1)
    )
    return VersionSequence(entries=entries, strategy=strategy.describe())


def checkout_version(
    seq: VersionSequence,
    index: int,
    workspace,
    force: bool = False,
    now: datetime | None = None,
) -> WorkspaceState:
    """Put the workspace at exactly the tree of version ``index``."""
    entry = seq.entry(index)
    backend = _open_repository(workspace)
    if not force and backend.is_dirty():
        raise DirtyWorkspaceError(
            f"workspace {backend.path} has local changes; commit elsewhere or use force"
        )
    backend.checkout(entry.commit.id, force=force)
    return WorkspaceState(
        index=index,
        commit_id=entry.commit.id,
        checked_out_at=now or datetime.now(timezone.utc),
        path=backend.path,
    )


def verify_build(
    workspace: WorkspaceState | str | Path,
    build_command: str,
    timeout_s: float = DEFAULT_BUILD_TIMEOUT_S,
    excerpt_chars: int = 4000,
) -> BuildResult:
    """Run the user-configured build command in the workspace.

    ok iff the command exits 0. The command is split shell-style and run
    directly (no shell); wrap complex builds in a script.
    """
    cwd = workspace.path if isinstance(workspace, WorkspaceState) else Path(workspace)
    argv = shlex.split(build_command)
    if not argv:
        raise BuildCommandNotFoundError("empty build command")
    try:
        result = subprocess.run(
            argv, cwd=cwd, capture_output=True, text=True, timeout=timeout_s
        )
    except FileNotFoundError as exc:
        raise BuildCommandNotFoundError(f"build command not found: {argv[0]}") from exc
    except subprocess.TimeoutExpired as exc:
        raise BuildTimeoutError(
            f"build command exceeded {timeout_s:.0f}s: {build_command}"
        ) from exc
    output = (result.stdout + result.stderr)[-excerpt_chars:]
    return BuildResult(ok=result.returncode == 0, returncode=result.returncode,
                       log_excerpt=output)
