"""Walk through the three version-selection strategies on a scripted repo.

Builds a throwaway git history (eight months of commits with one hectic
release week), then shows how interval, churn and explicit selection
carve replay versions out of it, and how a sentinel window densifies
the sampling around the release.
"""

import os
import subprocess
import tempfile
from datetime import datetime, timedelta, timezone
from pathlib import Path

from replayroi import (
    SelectionStrategy,
    SentinelWindow,
    load_commit_history,
    select_versions,
)


def git(repo: Path, *args, when: datetime | None = None) -> str:
    env = dict(os.environ)
    if when is not None:
        stamp = when.isoformat()
        env["GIT_AUTHOR_DATE"] = stamp
        env["GIT_COMMITTER_DATE"] = stamp
    out = subprocess.run(
        ["git", "-C", str(repo), *args], capture_output=True, text=True, env=env
    )
    if out.returncode != 0:
        raise RuntimeError(out.stderr)
    return out.stdout


def build_history(repo: Path) -> None:
    git(repo, "init", "-q", "-b", "main")
    git(repo, "config", "user.email", "demo@example.invalid")
    git(repo, "config", "user.name", "Demo")
    t0 = datetime(2020, 1, 6, 9, 0, tzinfo=timezone.utc)

    # Thirty-four ordinary weeks, one commit each, fluctuating churn.
    for week in range(34):
        lines = 10 + (week * 7) % 31
        body = "".join(f"state {week} line {i}\n" for i in range(lines))
        (repo / "app.py").write_text(body)
        git(repo, "add", "-A")
        git(repo, "commit", "-q", "-m", f"week {week}", when=t0 + timedelta(weeks=week))

    # Release week: daily commits with heavy churn, starting week 20.
    release = t0 + timedelta(weeks=20, days=1)
    for day in range(5):
        (repo / "app.py").write_text("release churn\n" * (200 + day))
        git(repo, "add", "-A")
        git(repo, "commit", "-q", "-m", f"release day {day}",
            when=release + timedelta(days=day))


def show(title: str, seq) -> None:
    print(f"\n{title}: {len(seq)} versions")
    for entry in seq.entries[:6]:
        print(f"  v{entry.index:<3} {entry.commit.id[:10]} {entry.commit.timestamp:%Y-%m-%d}")
    if len(seq) > 6:
        print(f"  ... and {len(seq) - 6} more")


with tempfile.TemporaryDirectory() as scratch:
    repo = Path(scratch) / "subject"
    repo.mkdir()
    build_history(repo)
    history = load_commit_history(repo, "main")
    print(f"history: {len(history)} commits on main")

    weekly = select_versions(history, SelectionStrategy.interval(timedelta(days=7)))
    show("interval, one per week", weekly)

    churn = select_versions(history, SelectionStrategy.churn(threshold_lines=250))
    show("churn, every 250 changed lines", churn)

    first_ids = [c.id for c in history[:3]]
    explicit = select_versions(history, SelectionStrategy.explicit(first_ids))
    show("explicit, hand-picked commits", explicit)

    # A sentinel window re-samples the release week daily and merges the
    # result into the weekly grid, so the hectic period is not averaged away.
    release_start = history[0].timestamp + timedelta(weeks=20)
    dense = select_versions(
        history,
        SelectionStrategy.interval(
            timedelta(days=7),
            sentinels=[SentinelWindow(
                start=release_start,
                end=release_start + timedelta(days=7),
                period=timedelta(days=1),
            )],
        ),
    )
    show("interval with a daily sentinel window over the release", dense)
    extra = len(dense) - len(weekly)
    print(f"\nthe sentinel window added {extra} versions inside the release week")
