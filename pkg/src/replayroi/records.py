"""Domain records shared by the session state machine, the event ledger,
and the estimator.

Durations are stored as whole seconds and reported as minutes with two
decimals. Version index 0 is reserved for pre-replay work (manual baseline
runs and test implementation); maintenance always belongs to a version >= 1.
"""

from dataclasses import dataclass
from datetime import datetime
from enum import Enum

from .errors import UsageError


class ActivityCategory(str, Enum):
    ANALYSIS_BROKEN_TEST = "analysis_broken_test"
    REPAIR_BROKEN_TEST = "repair_broken_test"
    HANDLE_BUG = "handle_bug"
    HANDLE_FALSE_NEGATIVE = "handle_false_negative"
    HANDLE_CRASH = "handle_crash"
    IMPLEMENTATION = "implementation"
    MANUAL_BASELINE = "manual_baseline"


#: Categories that count as per-version maintenance cost.
MAINTENANCE_CATEGORIES = frozenset({
    ActivityCategory.ANALYSIS_BROKEN_TEST,
    ActivityCategory.REPAIR_BROKEN_TEST,
    ActivityCategory.HANDLE_BUG,
    ActivityCategory.HANDLE_FALSE_NEGATIVE,
    ActivityCategory.HANDLE_CRASH,
})

#: Stable row order for maintenance reports.
MAINTENANCE_CATEGORY_ORDER = (
    ActivityCategory.ANALYSIS_BROKEN_TEST,
    ActivityCategory.REPAIR_BROKEN_TEST,
    ActivityCategory.HANDLE_BUG,
    ActivityCategory.HANDLE_FALSE_NEGATIVE,
    ActivityCategory.HANDLE_CRASH,
)

CATEGORY_TITLES = {
    ActivityCategory.ANALYSIS_BROKEN_TEST: "Analysis broken tests",
    ActivityCategory.REPAIR_BROKEN_TEST: "Repairing broken tests",
    ActivityCategory.HANDLE_BUG: "Handling found bugs",
    ActivityCategory.HANDLE_FALSE_NEGATIVE: "Handling false negatives",
    ActivityCategory.HANDLE_CRASH: "Handling crashes",
    ActivityCategory.IMPLEMENTATION: "Implementation",
    ActivityCategory.MANUAL_BASELINE: "Manual baseline",
}


class FailureKind(str, Enum):
    BUG = "bug"
    BROKEN_TEST = "broken_test"
    FALSE_NEGATIVE = "false_negative"
    CRASH = "crash"


@dataclass(frozen=True)
class TestProtocol:
    """A documented manual test case; the unit that gets automated."""

    id: str
    title: str = ""
    description: str = ""
    selected: bool = True

    def __post_init__(self):
        if not self.id:
            raise UsageError("protocol id must be nonempty")


@dataclass(frozen=True)
class FrameworkId:
    id: str
    name: str = ""

    def __post_init__(self):
        if not self.id:
            raise UsageError("framework id must be nonempty")

    @property
    def display(self) -> str:
        return self.name or self.id


@dataclass(frozen=True)
class AutomatedTestRef:
    """One automated implementation of a protocol for one framework."""

    protocol: str
    framework: str
    run_command: str
    script_path: str = ""

    @property
    def key(self) -> tuple[str, str]:
        return (self.protocol, self.framework)


@dataclass(frozen=True)
class ActivityRecord:
    """One timed, categorized unit of human work."""

    version: int
    protocol: str
    category: ActivityCategory
    started_at: datetime
    stopped_at: datetime
    duration_s: int
    framework: str | None = None
    note: str = ""
    manual_override: bool = False

    def __post_init__(self):
        if self.duration_s < 0:
            raise UsageError("duration must be nonnegative")
        if self.stopped_at < self.started_at:
            raise UsageError("activity stopped before it started")
        if self.category in MAINTENANCE_CATEGORIES and self.version < 1:
            raise UsageError(
                f"{self.category.value} is maintenance and needs a version >= 1"
            )
        if self.category is ActivityCategory.MANUAL_BASELINE and self.framework:
            raise UsageError("manual baseline is framework-independent")

    @property
    def minutes(self) -> float:
        return self.duration_s / 60.0


@dataclass(frozen=True)
class TestRunRecord:
    """Outcome of one attempt of one automated test at one version."""

    version: int
    protocol: str
    framework: str
    outcome: str  # "pass" | "fail"
    attempt: int
    duration_s: float | None = None
    note: str = ""

    def __post_init__(self):
        if self.outcome not in ("pass", "fail"):
            raise UsageError(f"outcome must be pass or fail, got {self.outcome!r}")
        if self.attempt < 1:
            raise UsageError("attempt numbers start at 1")


@dataclass(frozen=True)
class BugRecord:
    """A SUT defect found during replay, fixed or worked around locally."""

    version: int
    description: str
    resolution: str  # "fix" | "workaround"
    activity_seq: int  # ledger sequence of the linked handle_bug activity

    def __post_init__(self):
        if self.resolution not in ("fix", "workaround"):
            raise UsageError("resolution must be fix or workaround")


def seconds_to_minutes(seconds: float) -> float:
    return seconds / 60.0


def format_minutes(seconds: float) -> str:
    """Render a duration in minutes with two decimals, as in the reports."""
    return f"{seconds / 60.0:.2f}"
