"""From measured costs to a break-even estimate, three ways.

Rebuilds the reference study in memory: two automation frameworks over
six test protocols, 65 replayed versions, maintenance recorded per
category. Then answers the question the whole harness exists for: after
how many more releases does automated testing cost less than paying a
tester to run the suite by hand every week?

The three models climb in sophistication. The raw curve needs no
assumptions, the log fit smooths it, and the count model puts a
posterior band around the answer instead of a single number.
"""

import numpy as np

from replayroi import (
    ActivityCategory,
    EventLedger,
    ManualClock,
    MgtSchedule,
    ProjectConfig,
    ReplaySession,
    agt_curve,
    break_even,
    fit_bayes,
    fit_log_model,
    mgt_curve,
    posterior_predictive,
    summary_stats,
)

PROTOCOLS = [f"p{i}" for i in range(1, 7)]
FRAMEWORKS = ["selenium", "eyeautomate"]
NUM_VERSIONS = 65
MANUAL_SECONDS = 750  # one manual pass of one protocol

# seconds per protocol, in protocol order
IMPLEMENTATION = {
    "selenium": [41748, 3201, 25162, 23900, 30763, 12320],
    "eyeautomate": [20778, 1189, 7661, 17769, 11034, 13231],
}

# per category: total seconds spread over that many occurrences
MAINTENANCE = {
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


def rebuild_study() -> ReplaySession:
    from datetime import datetime, timedelta, timezone

    from replayroi import CommitRef, VersionEntry, VersionSequence

    session = ReplaySession(EventLedger(None), clock=ManualClock())
    session.configure(ProjectConfig(
        name="reference study",
        repo=".",
        branch="main",
        build_command="true",
        protocols=[{"id": p, "title": p.upper(), "selected": True} for p in PROTOCOLS],
        frameworks=[{"id": fw, "name": fw} for fw in FRAMEWORKS],
        tests=[{"protocol": p, "framework": fw, "run_command": "true", "script_path": ""}
               for fw in FRAMEWORKS for p in PROTOCOLS],
    ))
    for p in PROTOCOLS:
        session.record_baseline(ActivityCategory.MANUAL_BASELINE, p, MANUAL_SECONDS)
    for fw in FRAMEWORKS:
        for p, seconds in zip(PROTOCOLS, IMPLEMENTATION[fw]):
            session.record_baseline(
                ActivityCategory.IMPLEMENTATION, p, seconds, framework=fw
            )

    t0 = datetime(2020, 1, 6, 9, 0, tzinfo=timezone.utc)
    session.start(VersionSequence(
        entries=tuple(
            VersionEntry(
                index=i,
                commit=CommitRef(id=f"{i:03d}" + "f" * 37,
                                 timestamp=t0 + timedelta(weeks=i - 1)),
                label=f"v{i}",
            )
            for i in range(1, NUM_VERSIONS + 1)
        ),
        strategy="fixture",
    ))

    # Spread each category's occurrences across the replay, cycling
    # through versions and protocols so no step is special.
    per_version: dict[int, list] = {v: [] for v in range(1, NUM_VERSIONS + 1)}
    for fw in FRAMEWORKS:
        slot = 0
        for category, (total, occurrences) in MAINTENANCE[fw].items():
            base, extra = divmod(total, occurrences)
            for i in range(occurrences):
                piece = base + (1 if i < extra else 0)
                version = (slot % NUM_VERSIONS) + 1
                per_version[version].append(
                    (category, PROTOCOLS[slot % len(PROTOCOLS)], fw, piece)
                )
                slot += 1
    for v in range(1, NUM_VERSIONS + 1):
        session.checkout(v)
        session.verify_build(True)
        for category, protocol, fw, seconds in per_version[v]:
            session.record_activity(category, protocol, seconds, framework=fw)
        session.complete_version()
    session.complete_session()
    return session


session = rebuild_study()
tables = session.state.tables
stats = summary_stats(tables, NUM_VERSIONS)
print("implementation cost and per-version maintenance, in minutes:")
for fw in FRAMEWORKS:
    print(f"  {fw:<12} implement {stats.implementation[fw].total_minutes:8.2f}   "
          f"maintain {stats.maintenance[fw].per_version_mean_minutes:5.2f}/version")

# Manual testing happens weekly; one full pass of the suite costs the
# baseline total. The question is when each framework's cumulative cost
# dips under that line.
manual_cost = stats.manual.total_minutes
schedule = MgtSchedule("weekly", manual_cost)
print(f"\nmanual baseline: {manual_cost:.1f} min per weekly session")

for fw in FRAMEWORKS:
    agt = agt_curve(tables, fw, num_versions=NUM_VERSIONS)
    mgt = mgt_curve(schedule, num_steps=NUM_VERSIONS)
    roi = break_even(agt, mgt)
    fit = fit_log_model(agt)
    print(f"\n{fw}:")
    print(f"  raw curve:   break-even at step {roi.break_even_step} "
          f"({roi.break_even_minutes:.0f} min cumulative)")
    print(f"  log fit:     a={fit.a:.1f} b={fit.b:.1f} rmse={fit.rmse:.2f}")

    # The count model sees integer cumulative costs and returns a
    # posterior; the predictive band turns that into an uncertainty
    # interval on the break-even step itself.
    posterior = fit_bayes(agt)
    bands = posterior_predictive(
        posterior,
        steps=range(1, NUM_VERSIONS + 1),
        horizon=24,
        implementation_minutes=agt.value_at(0),
    )
    mgt_h = mgt_curve(schedule, num_steps=NUM_VERSIONS, horizon=24)
    banded = break_even(bands, mgt_h)
    lo, hi = banded.interval
    hi_text = "beyond horizon" if np.isinf(hi) else f"{hi:.0f}"
    print(f"  count model: break-even at step {banded.break_even_step}, "
          f"95% interval [{lo:.0f}, {hi_text}], "
          f"{banded.beyond_horizon_fraction:.0%} of draws never cross")
    print(f"  diagnostics: converged={posterior.converged} "
          f"accept={posterior.accept_rate:.2f}")

session.close()
