"""State-machine guards, timers and crash recovery for the replay session."""

import pytest

from replayroi import (
    ActivityCategory,
    FailureKind,
    ManualClock,
    ReplaySession,
)
from replayroi.errors import UsageError
from replayroi.session import (
    ActivityTimerError,
    BaselineIncompleteError,
    InvalidTransitionError,
)

from conftest import PROTOCOLS, study_config, weekly_versions


def fresh(tmp_path, clock=None):
    clock = clock or ManualClock()
    return ReplaySession.open(tmp_path / "ledger.ndjson", clock=clock), clock


def configured(tmp_path, m=3, clock=None):
    session, clock = fresh(tmp_path, clock)
    session.configure(study_config())
    for p in PROTOCOLS:
        session.record_baseline(ActivityCategory.MANUAL_BASELINE, p, 120)
        for fw in ("selenium", "eyeautomate"):
            session.record_baseline(
                ActivityCategory.IMPLEMENTATION, p, 3600, framework=fw
            )
    return session, weekly_versions(m), clock


def running(tmp_path, m=3, clock=None):
    session, versions, clock = configured(tmp_path, m, clock)
    session.start(versions)
    return session, versions, clock


def at_version(tmp_path, m=3, build_ok=True):
    session, versions, clock = running(tmp_path, m)
    session.checkout(1)
    session.verify_build(build_ok)
    return session, versions, clock


class TestLifecycleGuards:
    def test_cannot_start_before_configure(self, tmp_path):
        session, _ = fresh(tmp_path)
        with pytest.raises(InvalidTransitionError):
            session.start(weekly_versions(3))

    def test_start_without_baseline_is_blocked_with_detail(self, tmp_path):
        session, _ = fresh(tmp_path)
        session.configure(study_config())
        with pytest.raises(BaselineIncompleteError) as err:
            session.start(weekly_versions(3))
        assert "p1" in str(err.value)
        session.start(weekly_versions(3), force=True)  # explicit escape hatch
        assert session.state.started

    def test_cannot_reconfigure_after_start(self, tmp_path):
        session, versions, _ = configured(tmp_path)
        session.start(versions)
        with pytest.raises(InvalidTransitionError):
            session.configure(study_config())

    def test_versions_must_be_checked_out_in_order(self, tmp_path):
        session, _, _ = running(tmp_path)
        with pytest.raises(InvalidTransitionError):
            session.checkout(2)
        session.checkout(1)

    def test_run_requires_verified_build(self, tmp_path):
        session, _, _ = running(tmp_path)
        session.checkout(1)
        with pytest.raises(InvalidTransitionError):
            session.record_test_run("p1", "selenium", "fail")
        session.verify_build(False)
        with pytest.raises(InvalidTransitionError):
            session.record_test_run("p1", "selenium", "fail")
        session.verify_build(True)
        session.record_test_run("p1", "selenium", "fail")

    def test_complete_version_blocks_on_unclassified_failure(self, tmp_path):
        session, _, _ = at_version(tmp_path)
        session.record_test_run("p1", "selenium", "fail")
        with pytest.raises(InvalidTransitionError) as err:
            session.complete_version()
        assert "p1/selenium" in str(err.value)
        session.classify_failure("p1", "selenium", FailureKind.BROKEN_TEST)
        session.complete_version()

    def test_reclassification_not_needed_after_repair_rerun(self, tmp_path):
        # fail -> classify -> repair -> rerun pass: version can complete
        session, _, _ = at_version(tmp_path)
        session.record_test_run("p3", "selenium", "fail")
        session.classify_failure("p3", "selenium", FailureKind.BROKEN_TEST)
        session.record_test_run("p3", "selenium", "pass")
        session.complete_version()

    def test_complete_session_requires_all_versions(self, tmp_path):
        session, _, _ = at_version(tmp_path, m=2)
        session.complete_version()
        with pytest.raises(InvalidTransitionError):
            session.complete_session()
        session.complete_session(force=True)
        assert session.state.completed

    def test_nothing_after_completion(self, tmp_path):
        session, _, _ = at_version(tmp_path, m=1)
        session.complete_version()
        session.complete_session()
        with pytest.raises(InvalidTransitionError):
            session.checkout(1)


class TestClassification:
    def test_false_negative_requires_passing_run(self, tmp_path):
        session, _, _ = at_version(tmp_path)
        session.record_test_run("p2", "eyeautomate", "fail")
        with pytest.raises(UsageError):
            session.classify_failure("p2", "eyeautomate", FailureKind.FALSE_NEGATIVE)
        session.record_test_run("p2", "eyeautomate", "pass")
        session.classify_failure("p2", "eyeautomate", FailureKind.FALSE_NEGATIVE)

    def test_other_kinds_require_failing_run(self, tmp_path):
        session, _, _ = at_version(tmp_path)
        session.record_test_run("p2", "selenium", "pass")
        with pytest.raises(UsageError):
            session.classify_failure("p2", "selenium", FailureKind.BUG)

    def test_only_newest_attempt_classifiable(self, tmp_path):
        session, _, _ = at_version(tmp_path)
        session.record_test_run("p1", "selenium", "fail")
        session.record_test_run("p1", "selenium", "fail")
        with pytest.raises(UsageError):
            session.classify_failure("p1", "selenium", FailureKind.CRASH, attempt=1)
        session.classify_failure("p1", "selenium", FailureKind.CRASH, attempt=2)

    def test_double_classification_rejected(self, tmp_path):
        session, _, _ = at_version(tmp_path)
        session.record_test_run("p1", "selenium", "fail")
        session.classify_failure("p1", "selenium", FailureKind.BUG)
        with pytest.raises(UsageError):
            session.classify_failure("p1", "selenium", FailureKind.BROKEN_TEST)

    def test_attempts_autoincrement(self, tmp_path):
        session, _, _ = at_version(tmp_path)
        session.record_test_run("p1", "selenium", "fail")
        session.record_test_run("p1", "selenium", "fail")
        runs = session.state.runs_at(1)
        assert [r.attempt for r in runs] == [1, 2]


class TestTimers:
    def test_timer_measures_manual_clock(self, tmp_path):
        session, _, _ = at_version(tmp_path)
        session.start_activity(
            ActivityCategory.REPAIR_BROKEN_TEST, "p1", framework="selenium"
        )
        session.clock.advance(90)
        session.stop_activity()
        cell = session.state.tables.maintenance[("selenium", 1)]
        assert cell["repair_broken_test"] == [90, 1]

    def test_only_one_open_timer(self, tmp_path):
        session, _, _ = at_version(tmp_path)
        session.start_activity(ActivityCategory.ANALYSIS_BROKEN_TEST, "p1",
                               framework="selenium")
        with pytest.raises(ActivityTimerError):
            session.start_activity(ActivityCategory.HANDLE_BUG, "p2",
                                   framework="selenium")
        session.stop_activity()

    def test_stop_without_start(self, tmp_path):
        session, _, _ = at_version(tmp_path)
        with pytest.raises(ActivityTimerError):
            session.stop_activity()

    def test_discard_counts_nothing(self, tmp_path):
        session, _, _ = at_version(tmp_path)
        session.start_activity(ActivityCategory.HANDLE_CRASH, "p1",
                               framework="selenium")
        session.clock.advance(500)
        session.discard_activity()
        assert ("selenium", 1) not in session.state.tables.maintenance
        assert session.state.open_activity is None

    def test_maintenance_timer_needs_open_version(self, tmp_path):
        session, versions, _ = running(tmp_path)
        with pytest.raises(InvalidTransitionError):
            session.start_activity(ActivityCategory.HANDLE_BUG, "p1",
                                   framework="selenium")

    def test_manual_baseline_rejects_framework(self, tmp_path):
        session, _ = fresh(tmp_path)
        session.configure(study_config())
        with pytest.raises(UsageError):
            session.start_activity(ActivityCategory.MANUAL_BASELINE, "p1",
                                   framework="selenium")

    def test_baseline_timer_writes_baseline_table(self, tmp_path):
        session, _ = fresh(tmp_path)
        session.configure(study_config())
        session.start_activity(ActivityCategory.MANUAL_BASELINE, "p4")
        session.clock.advance(750)
        session.stop_activity()
        assert session.state.tables.baseline_manual["p4"] == 750

    def test_baseline_timer_blocked_after_start(self, tmp_path):
        session, _, _ = running(tmp_path)
        with pytest.raises(InvalidTransitionError):
            session.start_activity(ActivityCategory.MANUAL_BASELINE, "p1")

    def test_manual_entry_equivalent_to_timer(self, tmp_path):
        session, _, _ = at_version(tmp_path)
        session.record_activity(
            ActivityCategory.HANDLE_FALSE_NEGATIVE, "p5", 240,
            framework="eyeautomate",
        )
        cell = session.state.tables.maintenance[("eyeautomate", 1)]
        assert cell["handle_false_negative"] == [240, 1]
        assert session.state.open_activity is None

    def test_negative_manual_duration_leaves_no_open_timer(self, tmp_path):
        session, _, _ = at_version(tmp_path)
        with pytest.raises(UsageError):
            session.record_activity(
                ActivityCategory.HANDLE_BUG, "p1", -5, framework="selenium"
            )
        assert session.state.open_activity is None

    def test_version_cannot_complete_with_open_timer(self, tmp_path):
        session, _, _ = at_version(tmp_path)
        session.start_activity(ActivityCategory.ANALYSIS_BROKEN_TEST, "p1",
                               framework="selenium")
        with pytest.raises(InvalidTransitionError):
            session.complete_version()
        session.stop_activity()
        session.complete_version()


class TestCrashRecovery:
    def test_open_timer_survives_process_restart(self, tmp_path):
        path = tmp_path / "ledger.ndjson"
        clock_a = ManualClock()
        session = ReplaySession.open(path, clock=clock_a)
        session.configure(study_config())
        for p in PROTOCOLS:
            session.record_baseline(ActivityCategory.MANUAL_BASELINE, p, 120)
            for fw in ("selenium", "eyeautomate"):
                session.record_baseline(ActivityCategory.IMPLEMENTATION,
                                        p, 3600, framework=fw)
        session.start(weekly_versions(2))
        session.checkout(1)
        session.verify_build(True)
        session.start_activity(ActivityCategory.REPAIR_BROKEN_TEST, "p2",
                               framework="selenium")
        session.close()  # process dies with the timer running

        # a new process has a new monotonic epoch but a later wall clock
        clock_b = ManualClock(start=clock_a.now())
        clock_b.advance(300)
        resumed = ReplaySession.open(path, clock=clock_b)
        assert resumed.state.open_activity is not None
        resumed.stop_activity()
        cell = resumed.state.tables.maintenance[("selenium", 1)]
        assert cell["repair_broken_test"] == [300, 1]
        resumed.close()

    def test_same_process_uses_monotonic_clock(self, tmp_path):
        session, _, _ = at_version(tmp_path)
        clock = session.clock
        session.start_activity(ActivityCategory.HANDLE_BUG, "p1",
                               framework="selenium")
        clock.advance(42)
        session.stop_activity()
        cell = session.state.tables.maintenance[("selenium", 1)]
        assert cell["handle_bug"] == [42, 1]


class TestBugsAndScripts:
    def test_bug_links_to_activity(self, tmp_path):
        session, _, _ = at_version(tmp_path)
        seq = session.record_activity(ActivityCategory.HANDLE_BUG, "p1", 60,
                                      framework="selenium")
        session.record_bug("save dialog loses filename", "fix", activity_seq=seq)
        assert len(session.state.tables.bugs) == 1
        assert session.state.tables.bugs[0].version == 1

    def test_bug_rejects_bad_resolution(self, tmp_path):
        session, _, _ = at_version(tmp_path)
        with pytest.raises(UsageError):
            session.record_bug("x", "ignored")

    def test_script_update_requires_known_test(self, tmp_path):
        session, _, _ = at_version(tmp_path)
        session.record_script_update("p1", "selenium", "new locator")
        with pytest.raises(UsageError):
            session.record_script_update("p1", "nosuch")

    def test_progress_snapshot(self, tmp_path):
        session, _, _ = at_version(tmp_path, m=3)
        session.complete_version()
        progress = session.state.progress()
        assert progress["versions_completed"] == 1
        assert progress["num_versions"] == 3
        assert progress["next_version"] == 2
