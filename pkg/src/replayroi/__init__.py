"""replayroi: measure GUI test automation costs by replaying repository
history, and estimate when automation pays off against manual testing.

The package has three layers. The measurement layer (ledger, session,
history) replays a repository version by version while a human classifies
test failures and runs categorized activity timers; every observation lands
in an append-only event ledger from which all state is folded. The
statistics layer (estimator, mcmc) turns the folded tables into cumulative
cost curves, fits linear, logarithmic and Bayesian count-growth models,
and locates the manual-vs-automated break-even with posterior uncertainty.
The presentation layer (report, server, cli) renders tables and series,
serves them to the web console, and exposes the whole workflow as a
command-line tool.
"""

from .clock import ManualClock, SystemClock, utc_now
from .errors import BlockedError, ReplayRoiError, UsageError
from .estimator import (
    CumulativeCurve,
    LogModelFit,
    MgtSchedule,
    PredictiveBands,
    RoiEstimate,
    agt_curve,
    break_even,
    break_even_scan_oracle,
    curve_from_increments,
    fit_bayes,
    fit_linear_model,
    fit_log_model,
    maintenance_counts,
    mgt_curve,
    posterior_predictive,
)
from .history import (
    CommitRef,
    GitRepository,
    SelectionStrategy,
    SentinelWindow,
    VersionEntry,
    VersionSequence,
    checkout_version,
    load_commit_history,
    select_versions,
    verify_build,
)
from .ledger import (
    Event,
    EventLedger,
    MeasurementTables,
    fold_events,
    load_events,
    maintenance_series,
    summary_stats,
)
from .mcmc import (
    McmcConfig,
    PosteriorSamples,
    PriorConfig,
    effective_sample_size,
    fit_nb_regression,
    nb_log_likelihood,
    nb_sample,
    split_rhat,
)
from .records import (
    MAINTENANCE_CATEGORIES,
    ActivityCategory,
    ActivityRecord,
    AutomatedTestRef,
    BugRecord,
    FailureKind,
    FrameworkId,
    TestProtocol,
    TestRunRecord,
)
from .report import (
    EstimateOptions,
    build_bundle,
    export_tables,
    histogram,
    render_tables,
    run_estimate,
    series_payload,
)
from .server import (
    PortInUseError,
    ReplayService,
    ServerError,
    make_server,
)
from .session import (
    ProjectConfig,
    ReplayDriver,
    ReplaySession,
    SessionState,
    load_session_state,
)

__version__ = "1.0.0"

__all__ = [
    "ActivityCategory",
    "ActivityRecord",
    "AutomatedTestRef",
    "BlockedError",
    "BugRecord",
    "CommitRef",
    "CumulativeCurve",
    "EstimateOptions",
    "Event",
    "EventLedger",
    "FailureKind",
    "FrameworkId",
    "GitRepository",
    "LogModelFit",
    "MAINTENANCE_CATEGORIES",
    "ManualClock",
    "McmcConfig",
    "MeasurementTables",
    "MgtSchedule",
    "PortInUseError",
    "PosteriorSamples",
    "PredictiveBands",
    "PriorConfig",
    "ProjectConfig",
    "ReplayDriver",
    "ReplayRoiError",
    "ReplayService",
    "ReplaySession",
    "RoiEstimate",
    "SelectionStrategy",
    "SentinelWindow",
    "ServerError",
    "SessionState",
    "SystemClock",
    "TestProtocol",
    "TestRunRecord",
    "UsageError",
    "VersionEntry",
    "VersionSequence",
    "agt_curve",
    "break_even",
    "break_even_scan_oracle",
    "build_bundle",
    "checkout_version",
    "curve_from_increments",
    "effective_sample_size",
    "export_tables",
    "fit_bayes",
    "fit_linear_model",
    "fit_log_model",
    "fit_nb_regression",
    "fold_events",
    "histogram",
    "load_commit_history",
    "load_events",
    "load_session_state",
    "maintenance_counts",
    "maintenance_series",
    "make_server",
    "mgt_curve",
    "nb_log_likelihood",
    "nb_sample",
    "posterior_predictive",
    "render_tables",
    "run_estimate",
    "select_versions",
    "series_payload",
    "split_rhat",
    "summary_stats",
    "utc_now",
    "verify_build",
]
