"""Version selection semantics and the git working-copy adapter."""

import math
from datetime import datetime, timedelta, timezone

import numpy as np
import pytest

from replayroi import (
    CommitRef,
    GitRepository,
    SelectionStrategy,
    SentinelWindow,
    checkout_version,
    load_commit_history,
    select_versions,
    verify_build,
)
from replayroi.history import (
    BranchMissingError,
    BuildCommandNotFoundError,
    DirtyWorkspaceError,
    EmptyRangeError,
    RepositoryUnreadableError,
    SelectionError,
)

from conftest import commit_at, git, init_repo

T0 = datetime(2020, 1, 6, tzinfo=timezone.utc)
WEEK = timedelta(weeks=1)
DAY = timedelta(days=1)


def commits_at(*offsets, churn=10):
    return [
        CommitRef(id=f"{i:04d}" + "f" * 36, timestamp=T0 + off, churn=churn)
        for i, off in enumerate(offsets)
    ]


class TestIntervalSelection:
    def test_one_commit_per_week_selects_all(self):
        history = commits_at(*[i * WEEK for i in range(52)])
        seq = select_versions(history, SelectionStrategy.interval(WEEK))
        assert len(seq) == 52
        assert [e.commit.id for e in seq.entries] == [c.id for c in history]

    def test_last_commit_before_each_boundary_wins(self):
        # two commits inside the first week: only the later one is taken
        history = commits_at(timedelta(0), timedelta(days=2), timedelta(days=9))
        seq = select_versions(history, SelectionStrategy.interval(WEEK))
        assert [e.commit.id for e in seq.entries] == [
            history[0].id, history[1].id, history[2].id,
        ]

    def test_empty_periods_are_skipped_not_repeated(self):
        history = commits_at(timedelta(0), 5 * WEEK)
        seq = select_versions(history, SelectionStrategy.interval(WEEK))
        assert len(seq) == 2

    def test_indices_run_from_one_and_times_increase(self):
        history = commits_at(*[i * WEEK for i in range(7)])
        seq = select_versions(history, SelectionStrategy.interval(WEEK))
        assert [e.index for e in seq.entries] == list(range(1, 8))
        times = [e.calendar_time for e in seq.entries]
        assert all(b > a for a, b in zip(times, times[1:]))

    def test_distinct_buckets_property(self):
        # any two selected versions fall in different interval buckets
        rng = np.random.default_rng(7)
        for _ in range(50):
            n = int(rng.integers(2, 60))
            offsets = np.sort(rng.uniform(0, 200, size=n))
            offsets = np.unique(offsets)
            history = [
                CommitRef(id=f"{i:04d}" + "e" * 36,
                          timestamp=T0 + timedelta(days=float(d)), churn=1)
                for i, d in enumerate(offsets)
            ]
            period_days = float(rng.uniform(0.5, 30))
            period = timedelta(days=period_days)
            seq = select_versions(history, SelectionStrategy.interval(period))
            anchor = history[0].timestamp

            def bucket(ts):
                delta = (ts - anchor) / period
                return math.ceil(delta)  # (k-1, k] buckets anchored at start

            buckets = [bucket(e.calendar_time) for e in seq.entries]
            assert len(buckets) == len(set(buckets))


class TestChurnSelection:
    def test_threshold_trace(self):
        churns = [40, 80, 30, 90, 120]
        history = [
            CommitRef(id=f"{i:04d}" + "d" * 36, timestamp=T0 + i * DAY, churn=c)
            for i, c in enumerate(churns)
        ]
        seq = select_versions(history, SelectionStrategy.churn(100))
        assert [e.commit.id for e in seq.entries] == [
            history[1].id, history[3].id, history[4].id,
        ]

    def test_accumulator_includes_the_selected_commit(self):
        history = [
            CommitRef(id="a" * 40, timestamp=T0, churn=99),
            CommitRef(id="b" * 40, timestamp=T0 + DAY, churn=1),
        ]
        seq = select_versions(history, SelectionStrategy.churn(100))
        assert [e.commit.id for e in seq.entries] == ["b" * 40]

    def test_never_reaching_threshold_is_an_error(self):
        history = commits_at(timedelta(0), DAY, churn=1)
        with pytest.raises(SelectionError):
            select_versions(history, SelectionStrategy.churn(1000))

    def test_missing_churn_rejected(self):
        history = [CommitRef(id="a" * 40, timestamp=T0, churn=None)]
        with pytest.raises(SelectionError):
            select_versions(history, SelectionStrategy.churn(10))


class TestExplicitSelection:
    def test_ids_selected_in_history_order(self):
        history = commits_at(timedelta(0), DAY, 2 * DAY)
        wanted = [history[2].id, history[0].id]  # order given does not matter
        seq = select_versions(history, SelectionStrategy.explicit(wanted))
        assert [e.commit.id for e in seq.entries] == [history[0].id, history[2].id]

    def test_unknown_id_is_an_error(self):
        history = commits_at(timedelta(0))
        with pytest.raises(SelectionError):
            select_versions(history, SelectionStrategy.explicit(["nope" * 10]))


class TestSentinelWindows:
    def test_paper_shaped_sequence_counts_sixty_six(self):
        # daily commits in the first and last week, weekly in between:
        # weekly base sampling plus two daily sentinel windows gives 66
        offsets = [i * DAY for i in range(0, 7)]
        offsets += [timedelta(days=d) for d in range(13, 371, 7)]
        offsets += [timedelta(days=377 + i) for i in range(0, 7)]
        history = commits_at(*offsets)
        strategy = SelectionStrategy.interval(
            WEEK,
            sentinels=(
                SentinelWindow(start=T0, end=T0 + 6 * DAY, period=DAY),
                SentinelWindow(
                    start=T0 + timedelta(days=377),
                    end=T0 + timedelta(days=383),
                    period=DAY,
                ),
            ),
        )
        seq = select_versions(history, strategy)
        assert len(seq) == 66

    def test_sentinel_picks_merge_and_dedupe(self):
        history = commits_at(*[i * DAY for i in range(14)])
        strategy = SelectionStrategy.interval(
            WEEK, sentinels=(SentinelWindow(T0, T0 + 6 * DAY, DAY),)
        )
        seq = select_versions(history, strategy)
        ids = [e.commit.id for e in seq.entries]
        assert len(ids) == len(set(ids))
        assert [e.index for e in seq.entries] == list(range(1, len(ids) + 1))

    def test_window_outside_history_rejected(self):
        history = commits_at(timedelta(0), WEEK)
        strategy = SelectionStrategy.interval(
            WEEK, sentinels=(SentinelWindow(T0 - DAY, T0, DAY),)
        )
        with pytest.raises(SelectionError):
            select_versions(history, strategy)


class TestGitBackend:
    def test_history_is_first_parent_with_churn(self, tmp_path):
        repo = init_repo(tmp_path / "r")
        commit_at(repo, T0, {"a.txt": "one\ntwo\n"})
        commit_at(repo, T0 + DAY, {"a.txt": "one\ntwo\nthree\n"})
        history = load_commit_history(repo, "main")
        assert len(history) == 2
        assert history[0].churn == 2  # two lines added from nothing
        assert history[1].churn == 1
        assert history[0].timestamp < history[1].timestamp

    def test_range_filters_and_empty_range_is_distinct(self, tmp_path):
        repo = init_repo(tmp_path / "r")
        commit_at(repo, T0, {"a.txt": "x\n"})
        commit_at(repo, T0 + 2 * DAY, {"a.txt": "y\n"})
        history = load_commit_history(repo, "main", since=T0 + DAY)
        assert len(history) == 1
        with pytest.raises(EmptyRangeError):
            load_commit_history(repo, "main", since=T0 + 10 * DAY)

    def test_missing_branch(self, tmp_path):
        repo = init_repo(tmp_path / "r")
        commit_at(repo, T0, {"a.txt": "x\n"})
        with pytest.raises(BranchMissingError):
            load_commit_history(repo, "no-such-branch")

    def test_not_a_repository(self, tmp_path):
        plain = tmp_path / "plain"
        plain.mkdir()
        with pytest.raises(RepositoryUnreadableError):
            GitRepository(plain)

    def test_remote_locators_refused(self):
        with pytest.raises(RepositoryUnreadableError):
            load_commit_history("https://example.invalid/repo.git", "main")

    def test_checkout_lands_on_selected_commit(self, tmp_path):
        repo = init_repo(tmp_path / "r")
        commit_at(repo, T0, {"a.txt": "v1\n"})
        commit_at(repo, T0 + DAY, {"a.txt": "v2\n"})
        history = load_commit_history(repo, "main")
        seq = select_versions(history, SelectionStrategy.interval(DAY))
        ws = checkout_version(seq, 1, repo)
        assert (repo / "a.txt").read_text() == "v1\n"
        assert GitRepository(repo).current_commit() == ws.commit_id

    def test_dirty_workspace_blocks_without_force(self, tmp_path):
        repo = init_repo(tmp_path / "r")
        commit_at(repo, T0, {"a.txt": "v1\n"})
        commit_at(repo, T0 + DAY, {"a.txt": "v2\n"})
        history = load_commit_history(repo, "main")
        seq = select_versions(history, SelectionStrategy.interval(DAY))
        (repo / "a.txt").write_text("local edit\n")
        with pytest.raises(DirtyWorkspaceError):
            checkout_version(seq, 1, repo)
        ws = checkout_version(seq, 1, repo, force=True)
        assert ws.index == 1
        assert (repo / "a.txt").read_text() == "v1\n"

    def test_binary_numstat_counts_as_zero(self, tmp_path):
        repo = init_repo(tmp_path / "r")
        (repo / "blob.bin").write_bytes(bytes(range(256)) * 4)
        git(repo, "add", "-A")
        git(repo, "commit", "-q", "-m", "binary",
            env_extra={"GIT_AUTHOR_DATE": T0.isoformat(),
                       "GIT_COMMITTER_DATE": T0.isoformat()})
        history = load_commit_history(repo, "main")
        assert history[0].churn == 0


class TestBuildVerification:
    def test_exit_zero_is_ok(self, tmp_path):
        result = verify_build(tmp_path, "true")
        assert result.ok and result.returncode == 0

    def test_nonzero_exit_reported_with_log(self, tmp_path):
        result = verify_build(tmp_path, "python3 -c \"import sys; print('boom'); sys.exit(3)\"")
        assert not result.ok
        assert result.returncode == 3
        assert "boom" in result.log_excerpt

    def test_unknown_command(self, tmp_path):
        with pytest.raises(BuildCommandNotFoundError):
            verify_build(tmp_path, "definitely-not-a-command-xyz")
