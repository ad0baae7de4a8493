"""Replay a scripted history end to end through the library API.

A six-version repository carries its own test verdicts: each commit has
a status file per test protocol that a tiny runner script turns into an
exit code. The session below checks out each version, runs the suite,
classifies what broke, times the repair work, and finally renders the
measurement tables that all later analysis feeds on.

The same flow is available interactively via the replayroi command line;
this script is the library-level version of it.
"""

import os
import subprocess
import tempfile
from datetime import datetime, timedelta, timezone
from pathlib import Path

from replayroi import (
    ActivityCategory,
    EventLedger,
    FailureKind,
    ProjectConfig,
    ReplayDriver,
    ReplaySession,
    SelectionStrategy,
    load_commit_history,
    render_tables,
    select_versions,
)

RUNNER = """\
import pathlib, sys
text = (pathlib.Path("status") / (sys.argv[1] + ".txt")).read_text().strip()
sys.exit(0 if text == "pass" else 1)
"""

# what the scripted history has in store for the tester
BREAKS = {3: "search", 5: "search"}


def build_repo(repo: Path) -> None:
    def git(*args, when=None):
        env = dict(os.environ)
        if when is not None:
            env["GIT_AUTHOR_DATE"] = env["GIT_COMMITTER_DATE"] = when.isoformat()
        result = subprocess.run(
            ["git", "-C", str(repo), *args], capture_output=True, text=True, env=env
        )
        if result.returncode != 0:
            raise RuntimeError(result.stderr)

    git("init", "-q", "-b", "main")
    git("config", "user.email", "demo@example.invalid")
    git("config", "user.name", "Demo")
    t0 = datetime(2021, 9, 6, 9, 0, tzinfo=timezone.utc)
    (repo / "status").mkdir()
    for version in range(1, 7):
        (repo / "runner.py").write_text(RUNNER)
        (repo / "app.txt").write_text(f"revision {version}\n")
        for protocol in ("login", "search"):
            verdict = "fail" if BREAKS.get(version) == protocol else "pass"
            (repo / "status" / f"{protocol}.txt").write_text(verdict + "\n")
        git("add", "-A")
        git("commit", "-q", "-m", f"rev {version}", when=t0 + timedelta(weeks=version))


with tempfile.TemporaryDirectory() as scratch:
    scratch = Path(scratch)
    repo = scratch / "subject"
    repo.mkdir()
    build_repo(repo)

    config = ProjectConfig(
        name="walkthrough",
        repo=str(repo),
        branch="main",
        build_command="true",
        protocols=[
            {"id": "login", "title": "Login", "selected": True},
            {"id": "search", "title": "Search", "selected": True},
        ],
        frameworks=[{"id": "fw", "name": "demo framework"}],
        tests=[
            {"protocol": p, "framework": "fw",
             "run_command": f"python3 runner.py {p}", "script_path": "runner.py"}
            for p in ("login", "search")
        ],
    )

    session = ReplaySession(EventLedger(scratch / "ledger.ndjson"))
    session.configure(config)

    # Baselines come first: manual execution per protocol, then the cost
    # of implementing each automated test once.
    for protocol in ("login", "search"):
        session.record_baseline(ActivityCategory.MANUAL_BASELINE, protocol, 480)
        session.record_baseline(
            ActivityCategory.IMPLEMENTATION, protocol, 5400, framework="fw"
        )

    versions = select_versions(
        load_commit_history(repo, "main"),
        SelectionStrategy.interval(timedelta(days=7)),
    )
    session.start(versions)
    driver = ReplayDriver(session, repo_path=repo)

    for step in range(1, len(versions) + 1):
        advanced = driver.advance()
        results = driver.run_all()
        failed = [r for r in results if r["outcome"] == "fail"]
        line = ", ".join(f"{r['protocol']}:{r['outcome']}" for r in results)
        print(f"v{step} ({advanced['commit'][:8]})  {line}")

        for result in failed:
            # The tester looks at the failure, decides the test itself
            # broke, and repairs the script. Timed work is entered with
            # measured durations here; the interactive flow uses the
            # start/stop timer instead.
            session.classify_failure(
                result["protocol"], "fw", FailureKind.BROKEN_TEST
            )
            session.record_activity(
                ActivityCategory.ANALYSIS_BROKEN_TEST,
                result["protocol"], 300, framework="fw",
            )
            session.record_activity(
                ActivityCategory.REPAIR_BROKEN_TEST,
                result["protocol"], 900, framework="fw",
            )
            session.record_script_update(result["protocol"], "fw")
        session.complete_version()
    session.complete_session()

    print(f"\nledger holds {session.state.last_seq} events, "
          f"{session.state.progress()['versions_completed']} versions completed\n")
    print(render_tables(session.state.tables, len(versions)))
    session.close()
