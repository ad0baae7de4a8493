"""Cost curves, model fits, and return-on-investment break-even.

Everything here is a pure function of measurement tables (or raw arrays)
plus configuration and a seed. The automation curve starts at the summed
one-time implementation cost and accumulates per-version maintenance; the
manual curve accrues a fixed session cost either once per replay step or
once per calendar period. Break-even is the earliest step where the manual
curve meets or exceeds the automation curve, ties resolving to that step.

The Bayesian growth model treats the cumulative maintenance series, in
whole minutes, as negative-binomial counts with log-linear mean over the
step index (or its log, by configuration). Uncertainty bands come from the
posterior predictive; break-even intervals from solving per posterior
draw. A horizon with no crossing yields a beyond-horizon marker, which is
a value, not an error.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ReplayRoiError, UsageError
from .ledger import MeasurementTables, maintenance_series
from .mcmc import (
    McmcConfig,
    PosteriorSamples,
    PriorConfig,
    fit_nb_regression,
)
from .records import MAINTENANCE_CATEGORIES, ActivityCategory

# Poisson sampling rejects rates beyond ~9e18; cap far below with a flag.
LAMBDA_CAP = 1e12


class EstimatorError(ReplayRoiError):
    pass


class MissingImplementationError(EstimatorError, UsageError):
    pass


@dataclass(frozen=True)
class CumulativeCurve:
    """Non-decreasing cumulative minutes over steps 0..m."""

    steps: tuple  # ints, 0..m
    minutes: tuple  # floats, parallel
    origin: str = "curve"
    calendar_times: tuple | None = None  # datetimes parallel to steps

    def __post_init__(self):
        if len(self.steps) != len(self.minutes):
            raise UsageError("steps and minutes must be parallel")
        if not self.steps:
            raise UsageError("a curve needs at least one point")
        if list(self.steps) != list(range(self.steps[0], self.steps[0] + len(self.steps))):
            raise UsageError("steps must be consecutive integers")
        if self.steps[0] != 0:
            raise UsageError("curves start at step 0")
        if any(b < a - 1e-9 for a, b in zip(self.minutes, self.minutes[1:])):
            raise UsageError(f"{self.origin} curve must be non-decreasing")
        if self.calendar_times is not None and len(self.calendar_times) != len(self.steps):
            raise UsageError("calendar_times must be parallel to steps")

    def __len__(self) -> int:
        return len(self.steps)

    @property
    def last_step(self) -> int:
        return self.steps[-1]

    def value_at(self, step: int) -> float:
        if not 0 <= step <= self.last_step:
            raise UsageError(f"step {step} outside 0..{self.last_step}")
        return self.minutes[step]

    def increments(self) -> list[float]:
        return [b - a for a, b in zip(self.minutes, self.minutes[1:])]


@dataclass(frozen=True)
class MgtSchedule:
    frequency: str  # "weekly" | "monthly" | "per-version"
    session_cost: float  # minutes per manual session

    PERIOD_DAYS = {"weekly": 7.0, "monthly": 30.0}

    def __post_init__(self):
        if self.session_cost <= 0:
            raise UsageError("session cost must be positive")
        if self.frequency not in ("weekly", "monthly", "per-version"):
            raise UsageError(f"unknown schedule frequency {self.frequency!r}")

    @property
    def period_days(self) -> float | None:
        return self.PERIOD_DAYS.get(self.frequency)


@dataclass(frozen=True)
class LogModelFit:
    a: float
    b: float
    rmse: float
    kind: str = "log"  # "log": y = a + b*ln(x+1); "linear": y = a + b*x

    def predict(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.kind == "log":
            return self.a + self.b * np.log(x + 1.0)
        return self.a + self.b * x


@dataclass(frozen=True)
class PredictiveBands:
    """Posterior predictive quantiles of cumulative minutes per step.

    Steps run 1..m+H; observed_steps = m. Medians are monotone by
    post-processing (cumulative cost cannot decrease); raw_draws keeps the
    unadjusted trajectories, one row per posterior draw.
    """

    steps: tuple
    lower: tuple
    median: tuple
    upper: tuple
    observed_steps: int
    horizon: int
    implementation_minutes: float
    saturated: bool
    raw_draws: np.ndarray = field(repr=False, default=None)
    raw_median: tuple = ()

    def __post_init__(self):
        for lo, mid, hi in zip(self.lower, self.median, self.upper):
            if not (lo <= mid + 1e-9 and mid <= hi + 1e-9):
                raise UsageError("bands must satisfy lower <= median <= upper")

    def total_curve(self, which: str = "median") -> list[float]:
        """Implementation cost plus the selected band, per step."""
        series = getattr(self, which)
        return [self.implementation_minutes + v for v in series]

    def width_at(self, step: int) -> float:
        idx = self.steps.index(step)
        return self.upper[idx] - self.lower[idx]


@dataclass(frozen=True)
class RoiEstimate:
    """Break-even of manual vs automated cumulative cost."""

    break_even_step: int | None  # None = beyond horizon
    break_even_minutes: float | None
    horizon: int
    model: str
    interval: tuple | None = None  # (lo, hi) steps over posterior draws
    beyond_horizon_fraction: float | None = None
    diagnostics_ok: bool | None = None

    @property
    def beyond_horizon(self) -> bool:
        return self.break_even_step is None


# ---------------------------------------------------------------------------
# Curves


def agt_curve(
    tables: MeasurementTables,
    framework: str,
    num_versions: int | None = None,
    include_bug_time: bool = True,
) -> CumulativeCurve:
    """Cumulative automation cost: implementation at step 0, then
    maintenance per replayed version. include_bug_time=False drops the
    bug-handling category from the increments (bugs cost manual testing
    too, so charging them to automation is arguable; both views offered).
    """
    protocols = tables.protocols()
    missing = [p for p in protocols if (p, framework) not in tables.implementation]
    if missing or not protocols:
        raise MissingImplementationError(
            f"no implementation time for {framework}: "
            + (", ".join(missing) if missing else "no protocols recorded")
        )
    impl_minutes = sum(
        seconds
        for (p, fw), seconds in tables.implementation.items()
        if fw == framework
    ) / 60.0
    categories = set(MAINTENANCE_CATEGORIES)
    if not include_bug_time:
        categories.discard(ActivityCategory.HANDLE_BUG)
    series = maintenance_series(
        tables, framework, num_versions, categories=frozenset(categories)
    )
    minutes = [impl_minutes]
    for _, step_minutes in series:
        minutes.append(minutes[-1] + step_minutes)
    return CumulativeCurve(
        steps=tuple(range(len(minutes))),
        minutes=tuple(minutes),
        origin=f"agt:{framework}",
    )


def curve_from_increments(
    implementation_minutes: float, increments, origin: str = "agt"
) -> CumulativeCurve:
    """Build an automation curve directly from per-step maintenance
    minutes (fixture and simulation helper)."""
    minutes = [float(implementation_minutes)]
    for inc in increments:
        if inc < 0:
            raise UsageError("maintenance increments cannot be negative")
        minutes.append(minutes[-1] + float(inc))
    return CumulativeCurve(tuple(range(len(minutes))), tuple(minutes), origin)


def mgt_curve(
    schedule: MgtSchedule,
    versions=None,
    num_steps: int | None = None,
    accrual: str = "per-step",
    horizon: int = 0,
) -> CumulativeCurve:
    """Cumulative manual cost over the same steps as the replay.

    per-step: one session per replay step, cost*k at step k. calendar: one
    session per elapsed schedule period starting at the first version's
    instant; needs version calendar times. horizon appends extrapolated
    steps past the last version (calendar times continue at the mean
    spacing of the observed sequence).
    """
    if accrual not in ("per-step", "calendar"):
        raise UsageError(f"accrual must be per-step or calendar, got {accrual!r}")
    times = None
    if versions is not None and hasattr(versions, "entries"):
        times = [e.calendar_time for e in versions.entries]
        m = len(times)
    elif versions is not None:
        times = list(versions)
        m = len(times)
    elif num_steps is not None:
        m = int(num_steps)
    else:
        raise UsageError("mgt_curve needs versions or num_steps")
    if m < 1:
        raise UsageError("need at least one step")

    if accrual == "per-step" or schedule.frequency == "per-version":
        minutes = [schedule.session_cost * k for k in range(0, m + horizon + 1)]
        return CumulativeCurve(
            tuple(range(m + horizon + 1)), tuple(minutes), origin="mgt:per-step"
        )

    if times is None:
        raise UsageError("calendar accrual needs version calendar times")
    if schedule.period_days is None:
        raise UsageError("calendar accrual needs a weekly or monthly schedule")
    if horizon > 0:
        if len(times) > 1:
            spacing = (times[-1] - times[0]) / (len(times) - 1)
        else:
            spacing = None
        if spacing is None or spacing.total_seconds() <= 0:
            raise UsageError("cannot extrapolate calendar times for the horizon")
        times = times + [times[-1] + spacing * j for j in range(1, horizon + 1)]
    period_s = schedule.period_days * 86400.0
    t0 = times[0]
    minutes = [0.0]
    for t in times:
        elapsed = (t - t0).total_seconds()
        sessions = math.floor(elapsed / period_s) + 1  # first session at t0
        minutes.append(schedule.session_cost * sessions)
    # Curves are non-decreasing by construction since times ascend.
    return CumulativeCurve(
        tuple(range(len(minutes))),
        tuple(minutes),
        origin=f"mgt:{schedule.frequency}",
    )


# ---------------------------------------------------------------------------
# Deterministic fits


def _least_squares(design: np.ndarray, y: np.ndarray) -> tuple[float, float, float]:
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    resid = y - design @ coef
    rmse = float(np.sqrt(np.mean(resid**2)))
    return float(coef[0]), float(coef[1]), rmse


def fit_log_model(curve: CumulativeCurve) -> LogModelFit:
    """Least squares for minutes = a + b*ln(step+1)."""
    x = np.asarray(curve.steps, dtype=float)
    y = np.asarray(curve.minutes, dtype=float)
    if len(np.unique(x)) < 2:
        raise UsageError("log fit needs at least two distinct steps")
    design = np.column_stack([np.ones_like(x), np.log(x + 1.0)])
    a, b, rmse = _least_squares(design, y)
    return LogModelFit(a=a, b=b, rmse=rmse, kind="log")


def fit_linear_model(curve: CumulativeCurve) -> LogModelFit:
    """Least squares for minutes = a + b*step, for comparison."""
    x = np.asarray(curve.steps, dtype=float)
    y = np.asarray(curve.minutes, dtype=float)
    if len(np.unique(x)) < 2:
        raise UsageError("linear fit needs at least two distinct steps")
    design = np.column_stack([np.ones_like(x), x])
    a, b, rmse = _least_squares(design, y)
    return LogModelFit(a=a, b=b, rmse=rmse, kind="linear")


# ---------------------------------------------------------------------------
# Bayesian growth model


def _predictor_values(steps: np.ndarray, predictor: str) -> np.ndarray:
    if predictor == "step":
        return steps.astype(float)
    if predictor == "log-step":
        return np.log(steps.astype(float) + 1.0)
    raise UsageError(f"predictor must be step or log-step, got {predictor!r}")


def maintenance_counts(curve: CumulativeCurve) -> tuple[np.ndarray, np.ndarray]:
    """(steps 1..m, cumulative maintenance minutes rounded to counts).

    Step 0 (the implementation point) is excluded; the growth model is
    about maintenance accumulating over versions.
    """
    steps = np.asarray(curve.steps[1:], dtype=int)
    maint = np.asarray(curve.minutes[1:], dtype=float) - curve.minutes[0]
    counts = np.rint(maint).astype(int)
    return steps, counts


def fit_bayes(
    data,
    predictor: str = "step",
    priors: PriorConfig | None = None,
    mcmc: McmcConfig | None = None,
) -> PosteriorSamples:
    """Posterior for the count growth model.

    data: a CumulativeCurve (cumulative maintenance minutes become counts)
    or a (steps, counts) pair of equal-length arrays.
    """
    if isinstance(data, CumulativeCurve):
        steps, counts = maintenance_counts(data)
    else:
        steps, counts = data
        steps = np.asarray(steps)
        counts = np.asarray(counts)
    x = _predictor_values(np.asarray(steps, dtype=float), predictor)
    return fit_nb_regression(x, counts, priors=priors, mcmc=mcmc)


def posterior_predictive(
    samples: PosteriorSamples,
    steps,
    horizon: int,
    implementation_minutes: float = 0.0,
    predictor: str = "step",
    seed: int | None = None,
) -> PredictiveBands:
    """Predictive quantiles of cumulative maintenance at each observed and
    future step, one simulated trajectory per posterior draw."""
    steps = np.asarray(steps, dtype=int)
    if horizon < 0:
        raise UsageError("horizon cannot be negative")
    if steps.size == 0:
        raise UsageError("need at least one observed step")
    last = int(steps[-1])
    all_steps = np.concatenate([steps, np.arange(last + 1, last + horizon + 1)])
    x = _predictor_values(all_steps.astype(float), predictor)

    rng = np.random.Generator(np.random.PCG64(samples.seed if seed is None else seed))
    alpha = samples.draws[:, 0:1]
    beta = samples.draws[:, 1:2]
    phi = samples.draws[:, 2:3]
    lam = np.exp(np.minimum(alpha + beta * x[None, :], np.log(LAMBDA_CAP)))
    saturated = bool(np.any(alpha + beta * x[None, :] > np.log(LAMBDA_CAP)))
    mixed = rng.gamma(shape=np.broadcast_to(phi, lam.shape), scale=lam / phi)
    draws = rng.poisson(mixed).astype(float)

    lower = np.percentile(draws, 2.5, axis=0)
    median = np.percentile(draws, 50.0, axis=0)
    upper = np.percentile(draws, 97.5, axis=0)
    monotone_median = np.maximum.accumulate(median)
    return PredictiveBands(
        steps=tuple(int(s) for s in all_steps),
        lower=tuple(float(v) for v in lower),
        median=tuple(float(v) for v in monotone_median),
        upper=tuple(float(v) for v in np.maximum(upper, monotone_median)),
        observed_steps=len(steps),
        horizon=horizon,
        implementation_minutes=float(implementation_minutes),
        saturated=saturated,
        raw_draws=draws,
        raw_median=tuple(float(v) for v in median),
    )


# ---------------------------------------------------------------------------
# Break-even


def _scan_break_even(agt_values, mgt_values) -> int | None:
    """Smallest step k with manual(k) >= automated(k); None if never."""
    for k, (a, m) in enumerate(zip(agt_values, mgt_values)):
        if m >= a:
            return k
    return None


def break_even(agt, mgt: CumulativeCurve) -> RoiEstimate:
    """Earliest step where cumulative manual cost reaches automation cost.

    agt may be a CumulativeCurve (point answer) or PredictiveBands (point
    answer from the monotone median plus an interval over posterior
    draws). The manual curve must cover every automated step.
    """
    if isinstance(agt, CumulativeCurve):
        if mgt.last_step < agt.last_step:
            raise UsageError(
                f"manual curve ends at step {mgt.last_step}, "
                f"before automated step {agt.last_step}"
            )
        mgt_values = [mgt.value_at(k) for k in agt.steps]
        k = _scan_break_even(agt.minutes, mgt_values)
        return RoiEstimate(
            break_even_step=k,
            break_even_minutes=None if k is None else agt.minutes[k],
            horizon=agt.last_step,
            model="curve",
        )

    bands: PredictiveBands = agt
    impl = bands.implementation_minutes
    last = bands.steps[-1]
    if mgt.last_step < last:
        raise UsageError(
            f"manual curve ends at step {mgt.last_step}, before band step {last}"
        )
    # Point estimate: implementation + monotone median, with step 0 = impl.
    steps = (0,) + bands.steps
    agt_median = (impl,) + tuple(impl + v for v in bands.median)
    mgt_values = [mgt.value_at(k) for k in steps]
    k_point = _scan_break_even(agt_median, mgt_values)

    # Per-draw distribution over the same steps.
    draws = bands.raw_draws
    n_draws = draws.shape[0]
    agt_draws = np.concatenate(
        [np.full((n_draws, 1), 0.0), draws], axis=1
    ) + impl
    mgt_arr = np.asarray(mgt_values, dtype=float)
    hit = mgt_arr[None, :] >= agt_draws
    any_hit = hit.any(axis=1)
    first = np.where(any_hit, hit.argmax(axis=1), -1)
    per_draw = np.where(any_hit, np.asarray(steps)[first], np.inf)
    beyond = float(np.mean(~any_hit))
    finite = per_draw[np.isfinite(per_draw)]
    if finite.size:
        # order statistics: steps are discrete and the tail may be infinite,
        # which linear interpolation would turn into nan
        lo = float(np.percentile(per_draw, 2.5, method="inverted_cdf"))
        hi = float(np.percentile(per_draw, 97.5, method="inverted_cdf"))
        interval = (lo, hi)
    else:
        interval = (math.inf, math.inf)
    step_value = None if k_point is None else steps[k_point]
    return RoiEstimate(
        break_even_step=step_value,
        break_even_minutes=None if k_point is None else float(agt_median[k_point]),
        horizon=last,
        model="bayes",
        interval=interval,
        beyond_horizon_fraction=beyond,
    )


def break_even_scan_oracle(agt: CumulativeCurve, mgt: CumulativeCurve) -> int | None:
    """Reference implementation: plain left-to-right scan over the curve
    points. Exists so the solver can be property-checked against it."""
    result = None
    for k in agt.steps:
        if mgt.value_at(k) >= agt.value_at(k):
            result = k
            break
    return result
