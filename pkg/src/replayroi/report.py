"""Report rendering and the machine-readable result bundle.

Three consumers share this module: the CLI's report/export commands, the
web service, and the narrative demo scripts. All of them see the same
numbers because everything is computed from one folded snapshot of the
ledger; the bundle carries provenance (ledger sequence, config hash, seed)
so any figure can be traced back to the exact events behind it.
"""

import csv
import hashlib
import io
import json
from dataclasses import dataclass

from .errors import UsageError
from .estimator import (
    CumulativeCurve,
    MgtSchedule,
    agt_curve,
    break_even,
    fit_bayes,
    fit_linear_model,
    fit_log_model,
    mgt_curve,
    posterior_predictive,
)
from .ledger import (
    MeasurementTables,
    maintenance_series,
    summary_stats,
)
from .mcmc import McmcConfig, PriorConfig
from .records import (
    CATEGORY_TITLES,
    MAINTENANCE_CATEGORY_ORDER,
    format_minutes,
)

BUNDLE_SCHEMA = 1
DEFAULT_BIN_MINUTES = 5.0


def _fmt(value, decimals: int = 2) -> str:
    return f"{value:.{decimals}f}"


def format_table(rows: list[list[str]], indent: str = "  ") -> str:
    """Right-align every column; first row is the header."""
    if not rows:
        return ""
    widths = [max(len(str(r[i])) for r in rows) for i in range(len(rows[0]))]
    lines = []
    for r, row in enumerate(rows):
        cells = [str(c).rjust(w) for c, w in zip(row, widths)]
        lines.append(indent + "  ".join(cells).rstrip())
        if r == 0:
            lines.append(indent + "  ".join("-" * w for w in widths))
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# Summary tables


def execution_summary(tables: MeasurementTables) -> dict:
    """Execution-time comparison: manual baseline vs timed automated runs.

    Per protocol the automated figure is the mean duration over every
    recorded run that carried a duration; the manual figure is the
    baseline timing.
    """
    protocols = tables.protocols()
    rows: dict[str, dict] = {}
    manual = {
        p: tables.baseline_manual[p] / 60.0
        for p in protocols
        if p in tables.baseline_manual
    }
    if manual:
        total = sum(manual.values())
        rows["manual"] = {
            "per_protocol": manual,
            "total_minutes": total,
            "mean_minutes": total / len(manual),
        }
    for fw in tables.frameworks():
        per_protocol: dict[str, float] = {}
        for p in protocols:
            durations = [
                r.duration_s for r in tables.runs
                if r.framework == fw and r.protocol == p and r.duration_s is not None
            ]
            if durations:
                per_protocol[p] = sum(durations) / len(durations) / 60.0
        if per_protocol:
            total = sum(per_protocol.values())
            rows[fw] = {
                "per_protocol": per_protocol,
                "total_minutes": total,
                "mean_minutes": total / len(per_protocol),
            }
    return rows


def render_implementation_table(tables: MeasurementTables) -> str:
    """One-time implementation effort per framework, with the manual
    baseline row: per-protocol minutes, total, mean +- sample sd."""
    stats = summary_stats(tables)
    protocols = tables.protocols()
    header = ["", *protocols, "Total", "mean ± sd"]
    rows = [header]
    if stats.manual.occurrences:
        cells = ["manual (baseline)"]
        for p in protocols:
            sec = stats.manual_by_protocol.get(p)
            cells.append("" if sec is None else format_minutes(sec))
        cells.append(_fmt(stats.manual.total_minutes))
        cells.append(f"{_fmt(stats.manual.mean_minutes)} ± {_fmt(stats.manual.sd_minutes)}")
        rows.append(cells)
    for fw, d in stats.implementation.items():
        cells = [fw]
        per_protocol = stats.implementation_by_protocol.get(fw, {})
        for p in protocols:
            sec = per_protocol.get(p)
            cells.append("" if sec is None else format_minutes(sec))
        cells.append(_fmt(d.total_minutes))
        cells.append(f"{_fmt(d.mean_minutes)} ± {_fmt(d.sd_minutes)}")
        rows.append(cells)
    if len(rows) == 1:
        rows.append(["(no implementation records)"] + [""] * (len(header) - 1))
    return "Implementation times (minutes)\n" + format_table(rows)


def render_maintenance_table(tables: MeasurementTables, num_versions=None) -> str:
    """Maintenance effort per category and framework: totals,
    occurrences, mean +- sample sd per occurrence, plus the per-version
    bottom line."""
    stats = summary_stats(tables, num_versions)
    blocks = []
    for fw, fw_stats in stats.maintenance.items():
        rows = [["category", "total min", "occurrences", "mean ± sd"]]
        for category in MAINTENANCE_CATEGORY_ORDER:
            d = fw_stats.by_category.get(category)
            if d is None:
                rows.append([CATEGORY_TITLES[category], "0.00", "0", ""])
                continue
            rows.append([
                CATEGORY_TITLES[category],
                _fmt(d.total_minutes),
                str(d.occurrences),
                f"{_fmt(d.mean_minutes)} ± {_fmt(d.sd_minutes)}",
            ])
        rows.append([
            "All categories",
            _fmt(fw_stats.total_minutes),
            str(sum(d.occurrences for d in fw_stats.by_category.values())),
            "",
        ])
        per_version = (
            f"versions with maintenance {fw_stats.versions_with_maintenance}"
            f"/{fw_stats.num_versions}, per version "
            f"{_fmt(fw_stats.per_version_mean_minutes)} ± "
            f"{_fmt(fw_stats.per_version_sd_minutes)} min"
        )
        blocks.append(f"{fw}\n" + format_table(rows) + "\n  " + per_version)
    if not blocks:
        blocks.append("  (no maintenance records)")
    return "Maintenance statistics\n" + "\n\n".join(blocks)


def render_execution_table(tables: MeasurementTables) -> str:
    summary = execution_summary(tables)
    protocols = tables.protocols()
    rows = [["", *protocols, "Total", "mean"]]
    for name, entry in summary.items():
        cells = [name]
        for p in protocols:
            v = entry["per_protocol"].get(p)
            cells.append("" if v is None else _fmt(v))
        cells.append(_fmt(entry["total_minutes"]))
        cells.append(_fmt(entry["mean_minutes"]))
        rows.append(cells)
    if len(rows) == 1:
        rows.append(["(no timed runs)"] + [""] * (len(protocols) + 2))
    return "Execution times per run (minutes)\n" + format_table(rows)


def render_tables(tables: MeasurementTables, num_versions=None) -> str:
    return "\n\n".join([
        render_implementation_table(tables),
        render_maintenance_table(tables, num_versions),
        render_execution_table(tables),
    ])


# ---------------------------------------------------------------------------
# Series


def histogram(values, bin_width: float = DEFAULT_BIN_MINUTES) -> list[tuple]:
    """Fixed-width binning of per-version minutes: [(lo, hi, count), ...]
    for nonempty bins, ascending."""
    if bin_width <= 0:
        raise UsageError("bin width must be positive")
    counts: dict[int, int] = {}
    for v in values:
        if v < 0:
            raise UsageError("negative minutes cannot be binned")
        idx = int(v // bin_width)
        counts[idx] = counts.get(idx, 0) + 1
    return [
        (idx * bin_width, (idx + 1) * bin_width, counts[idx])
        for idx in sorted(counts)
    ]


def series_payload(
    tables: MeasurementTables,
    num_versions=None,
    bin_width: float = DEFAULT_BIN_MINUTES,
) -> dict:
    """Plot-ready series per framework: per-version maintenance minutes,
    the fixed-width histogram, and the cumulative automation curve."""
    out = {}
    for fw in tables.frameworks():
        series = maintenance_series(tables, fw, num_versions)
        minutes = [m for _, m in series]
        entry = {
            "per_version": [[i, round(m, 4)] for i, m in series],
            "histogram": [
                {"lo": lo, "hi": hi, "count": n}
                for lo, hi, n in histogram(minutes, bin_width)
            ],
            "bin_width": bin_width,
        }
        try:
            curve = agt_curve(tables, fw, num_versions)
            entry["agt_curve"] = curve_payload(curve)
        except UsageError:
            entry["agt_curve"] = None
        out[fw] = entry
    return out


def curve_payload(curve: CumulativeCurve) -> dict:
    payload = {
        "origin": curve.origin,
        "steps": list(curve.steps),
        "minutes": [round(v, 4) for v in curve.minutes],
    }
    if curve.calendar_times is not None:
        payload["calendar"] = [t.isoformat() for t in curve.calendar_times]
    return payload


# ---------------------------------------------------------------------------
# Estimates


@dataclass(frozen=True)
class EstimateOptions:
    framework: str
    schedule: str = "weekly"
    session_cost: float = 75.0
    accrual: str = "per-step"
    model: str = "bayes"
    predictor: str = "step"
    horizon: int = 24
    seed: int = 0
    include_bug_time: bool = True
    chains: int = 4
    warmup: int = 1000
    draws: int = 1000
    dispersion_prior: str = "gamma-log"

    def mcmc(self) -> McmcConfig:
        return McmcConfig(
            chains=self.chains, warmup=self.warmup, draws=self.draws, seed=self.seed
        )

    def priors(self) -> PriorConfig:
        return PriorConfig(dispersion=self.dispersion_prior)


def run_estimate(
    tables: MeasurementTables,
    options: EstimateOptions,
    versions=None,
    num_versions=None,
) -> dict:
    """Fit the chosen model and locate break-even for one framework.

    Returns a structured payload: both cumulative curves, the fit (or the
    posterior summary and predictive bands), and the break-even estimate.
    Convergence failures are reported in the payload, never swallowed.
    """
    if options.model not in ("linear", "log", "bayes"):
        raise UsageError(f"model must be linear, log or bayes, got {options.model!r}")
    agt = agt_curve(
        tables,
        options.framework,
        num_versions=num_versions,
        include_bug_time=options.include_bug_time,
    )
    m = agt.last_step
    schedule = MgtSchedule(frequency=options.schedule, session_cost=options.session_cost)
    horizon = options.horizon if options.model == "bayes" else 0
    mgt = mgt_curve(
        schedule,
        versions=versions,
        num_steps=m,
        accrual=options.accrual,
        horizon=horizon,
    )

    payload = {
        "framework": options.framework,
        "model": options.model,
        "schedule": options.schedule,
        "session_cost": options.session_cost,
        "accrual": options.accrual,
        "include_bug_time": options.include_bug_time,
        "seed": options.seed,
        "agt_curve": curve_payload(agt),
        "mgt_curve": curve_payload(mgt),
    }

    if options.model in ("linear", "log"):
        fit = fit_log_model(agt) if options.model == "log" else fit_linear_model(agt)
        roi = break_even(agt, mgt)
        payload["fit"] = {"a": fit.a, "b": fit.b, "rmse": fit.rmse, "kind": fit.kind}
        payload["roi"] = roi_payload(roi)
        return payload

    samples = fit_bayes(
        agt, predictor=options.predictor, priors=options.priors(), mcmc=options.mcmc()
    )
    steps = list(range(1, m + 1))
    bands = posterior_predictive(
        samples,
        steps,
        horizon=options.horizon,
        implementation_minutes=agt.minutes[0],
        predictor=options.predictor,
    )
    roi = break_even(bands, mgt)
    payload["posterior"] = samples.summary()
    payload["diagnostics_ok"] = samples.converged
    payload["warnings"] = list(samples.warnings)
    payload["bands"] = {
        "steps": list(bands.steps),
        "lower": [round(v, 4) for v in bands.lower],
        "median": [round(v, 4) for v in bands.median],
        "upper": [round(v, 4) for v in bands.upper],
        "observed_steps": bands.observed_steps,
        "horizon": bands.horizon,
        "implementation_minutes": round(bands.implementation_minutes, 4),
        "saturated": bands.saturated,
    }
    payload["roi"] = roi_payload(roi)
    return payload


def roi_payload(roi) -> dict:
    out = {
        "break_even_step": roi.break_even_step,
        "beyond_horizon": roi.beyond_horizon,
        "break_even_minutes": (
            None if roi.break_even_minutes is None else round(roi.break_even_minutes, 4)
        ),
        "horizon": roi.horizon,
        "model": roi.model,
    }
    if roi.interval is not None:
        lo, hi = roi.interval
        out["interval"] = [
            None if lo != lo or lo == float("inf") else lo,
            None if hi != hi or hi == float("inf") else hi,
        ]
        out["beyond_horizon_fraction"] = roi.beyond_horizon_fraction
    return out


# ---------------------------------------------------------------------------
# Bundle and exports


def config_hash(config_payload: dict) -> str:
    canonical = json.dumps(config_payload, sort_keys=True, default=str)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]


def build_bundle(
    tables: MeasurementTables,
    ledger_seq: int,
    config_payload: dict | None = None,
    estimates: list[dict] | None = None,
    num_versions=None,
    bin_width: float = DEFAULT_BIN_MINUTES,
    generated_at: str = "",
) -> dict:
    """The full machine-readable report: tables, series, estimates, and
    the provenance needed to reproduce every number."""
    stats = summary_stats(tables, num_versions)
    tables_payload = {
        "manual": {
            "per_protocol": {
                p: round(s / 60.0, 4) for p, s in stats.manual_by_protocol.items()
            },
            "total_minutes": round(stats.manual.total_minutes, 4),
            "mean_minutes": round(stats.manual.mean_minutes, 4),
            "sd_minutes": round(stats.manual.sd_minutes, 4),
        },
        "implementation": {
            fw: {
                "per_protocol": {
                    p: round(s / 60.0, 4)
                    for p, s in stats.implementation_by_protocol[fw].items()
                },
                "total_minutes": round(d.total_minutes, 4),
                "mean_minutes": round(d.mean_minutes, 4),
                "sd_minutes": round(d.sd_minutes, 4),
            }
            for fw, d in stats.implementation.items()
        },
        "maintenance": {
            fw: {
                "categories": {
                    category.value: {
                        "total_minutes": round(d.total_minutes, 4),
                        "occurrences": d.occurrences,
                        "mean_minutes": round(d.mean_minutes, 4),
                        "sd_minutes": round(d.sd_minutes, 4),
                    }
                    for category, d in fw_stats.by_category.items()
                },
                "total_minutes": round(fw_stats.total_minutes, 4),
                "versions_with_maintenance": fw_stats.versions_with_maintenance,
                "num_versions": fw_stats.num_versions,
                "per_version_mean_minutes": round(fw_stats.per_version_mean_minutes, 4),
                "per_version_sd_minutes": round(fw_stats.per_version_sd_minutes, 4),
            }
            for fw, fw_stats in stats.maintenance.items()
        },
        "execution": {
            name: {
                "per_protocol": {p: round(v, 4) for p, v in e["per_protocol"].items()},
                "total_minutes": round(e["total_minutes"], 4),
                "mean_minutes": round(e["mean_minutes"], 4),
            }
            for name, e in execution_summary(tables).items()
        },
    }
    return {
        "schema": BUNDLE_SCHEMA,
        "provenance": {
            "ledger_seq": ledger_seq,
            "config_hash": config_hash(config_payload or {}),
            "seed": (estimates[0].get("seed") if estimates else None),
            "generated_at": generated_at,
        },
        "tables": tables_payload,
        "series": series_payload(tables, num_versions, bin_width),
        "estimates": estimates or [],
    }


def export_tables(tables: MeasurementTables, format: str = "csv") -> dict | str:
    """Dump the measurement tables: format csv returns {name: csv text},
    structured returns one JSON string."""
    if format == "structured":
        payload = {
            "baseline_manual": [
                {"protocol": p, "duration_s": s}
                for p, s in sorted(tables.baseline_manual.items())
            ],
            "implementation": [
                {"protocol": p, "framework": fw, "duration_s": s}
                for (p, fw), s in sorted(tables.implementation.items())
            ],
            "maintenance": [
                {
                    "version": r.version,
                    "protocol": r.protocol,
                    "framework": r.framework,
                    "category": r.category.value,
                    "duration_s": r.duration_s,
                    "started_at": r.started_at.isoformat(),
                    "stopped_at": r.stopped_at.isoformat(),
                    "note": r.note,
                }
                for r in tables.maintenance_records
            ],
            "runs": [
                {
                    "version": r.version,
                    "protocol": r.protocol,
                    "framework": r.framework,
                    "outcome": r.outcome,
                    "attempt": r.attempt,
                    "duration_s": r.duration_s,
                    "note": r.note,
                }
                for r in tables.runs
            ],
            "bugs": [
                {
                    "version": b.version,
                    "description": b.description,
                    "resolution": b.resolution,
                    "activity_seq": b.activity_seq,
                }
                for b in tables.bugs
            ],
            "num_versions": tables.num_versions,
        }
        return json.dumps(payload, indent=2, sort_keys=True)
    if format != "csv":
        raise UsageError(f"export format must be csv or structured, got {format!r}")

    def sheet(header, rows):
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(header)
        writer.writerows(rows)
        return buf.getvalue()

    return {
        "baseline_manual": sheet(
            ["protocol", "duration_s", "minutes"],
            [
                [p, s, format_minutes(s)]
                for p, s in sorted(tables.baseline_manual.items())
            ],
        ),
        "implementation": sheet(
            ["protocol", "framework", "duration_s", "minutes"],
            [
                [p, fw, s, format_minutes(s)]
                for (p, fw), s in sorted(tables.implementation.items())
            ],
        ),
        "maintenance": sheet(
            [
                "version", "protocol", "framework", "category",
                "duration_s", "minutes", "started_at", "stopped_at", "note",
            ],
            [
                [
                    r.version, r.protocol, r.framework, r.category.value,
                    r.duration_s, format_minutes(r.duration_s),
                    r.started_at.isoformat(), r.stopped_at.isoformat(), r.note,
                ]
                for r in tables.maintenance_records
            ],
        ),
        "runs": sheet(
            ["version", "protocol", "framework", "outcome", "attempt", "duration_s", "note"],
            [
                [r.version, r.protocol, r.framework, r.outcome, r.attempt,
                 "" if r.duration_s is None else r.duration_s, r.note]
                for r in tables.runs
            ],
        ),
        "bugs": sheet(
            ["version", "description", "resolution", "activity_seq"],
            [
                [b.version, b.description, b.resolution, b.activity_seq]
                for b in tables.bugs
            ],
        ),
    }
