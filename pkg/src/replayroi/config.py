"""Study configuration: one human-editable YAML file per project directory.

The file describes the subject repository, the version selection strategy,
the protocols and frameworks under study, and defaults for the manual
schedule and the estimator. Environment variables override only the server
token (REPLAYROI_TOKEN) and the ledger path (REPLAYROI_LEDGER); everything
else lives in the file so a study is reproducible from the directory alone.

Validation errors name the offending field path, e.g.
"selection.period_days: must be positive".
"""

import os
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from pathlib import Path

import yaml

from .errors import UsageError
from .history import SelectionStrategy, SentinelWindow
from .session import ProjectConfig

CONFIG_FILENAME = "replayroi.yaml"
LEDGER_FILENAME = "ledger.ndjson"
VERSIONS_FILENAME = "versions.json"

ENV_TOKEN = "REPLAYROI_TOKEN"
ENV_LEDGER = "REPLAYROI_LEDGER"


class ConfigError(UsageError):
    pass


def _require(mapping: dict, key: str, path: str):
    if key not in mapping or mapping[key] in (None, ""):
        raise ConfigError(f"{path}.{key}: required")
    return mapping[key]


def _as_mapping(value, path: str) -> dict:
    if value is None:
        return {}
    if not isinstance(value, dict):
        raise ConfigError(f"{path}: expected a mapping")
    return value


def _as_list(value, path: str) -> list:
    if value is None:
        return []
    if not isinstance(value, list):
        raise ConfigError(f"{path}: expected a list")
    return value


def _parse_instant(value, path: str) -> datetime:
    try:
        parsed = datetime.fromisoformat(str(value))
    except ValueError as exc:
        raise ConfigError(f"{path}: not an ISO-8601 instant: {value!r}") from exc
    if parsed.tzinfo is None:
        raise ConfigError(f"{path}: instant must carry a timezone offset")
    return parsed


@dataclass
class StudyConfig:
    """Parsed and validated study file plus derived paths."""

    directory: Path
    name: str
    repo: Path
    branch: str
    build_command: str
    since: datetime | None
    until: datetime | None
    selection: SelectionStrategy
    frameworks: list
    protocols: list
    tests: list
    mgt_frequency: str
    mgt_session_cost: float
    mgt_accrual: str
    estimator: dict
    server_host: str
    server_port: int
    server_token: str
    ledger_path: Path
    versions_path: Path
    options: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict)

    def to_project_config(self) -> ProjectConfig:
        return ProjectConfig(
            name=self.name,
            repo=str(self.repo),
            branch=self.branch,
            build_command=self.build_command,
            protocols=self.protocols,
            frameworks=self.frameworks,
            tests=self.tests,
            options=self.options,
        )


def _parse_selection(raw: dict) -> SelectionStrategy:
    raw = _as_mapping(raw, "selection")
    kind = raw.get("strategy", "interval")
    sentinels = []
    for i, s in enumerate(_as_list(raw.get("sentinels"), "selection.sentinels")):
        s = _as_mapping(s, f"selection.sentinels[{i}]")
        period_days = s.get("period_days", 1)
        if not isinstance(period_days, (int, float)) or period_days <= 0:
            raise ConfigError(f"selection.sentinels[{i}].period_days: must be positive")
        sentinels.append(SentinelWindow(
            start=_parse_instant(_require(s, "start", f"selection.sentinels[{i}]"),
                                 f"selection.sentinels[{i}].start"),
            end=_parse_instant(_require(s, "end", f"selection.sentinels[{i}]"),
                               f"selection.sentinels[{i}].end"),
            period=timedelta(days=period_days),
        ))
    if kind == "interval":
        period_days = raw.get("period_days", 7)
        if not isinstance(period_days, (int, float)) or period_days <= 0:
            raise ConfigError("selection.period_days: must be positive")
        anchor = raw.get("anchor")
        return SelectionStrategy.interval(
            timedelta(days=period_days),
            sentinels=sentinels,
            anchor=_parse_instant(anchor, "selection.anchor") if anchor else None,
        )
    if kind == "churn":
        threshold = raw.get("threshold_lines")
        if not isinstance(threshold, int) or threshold <= 0:
            raise ConfigError("selection.threshold_lines: must be a positive integer")
        return SelectionStrategy.churn(threshold, sentinels=sentinels)
    if kind == "explicit":
        commits = _as_list(raw.get("commits"), "selection.commits")
        if not commits:
            raise ConfigError("selection.commits: required for the explicit strategy")
        return SelectionStrategy.explicit([str(c) for c in commits])
    raise ConfigError(f"selection.strategy: unknown strategy {kind!r}")


def load_config(directory: str | Path) -> StudyConfig:
    directory = Path(directory)
    path = directory / CONFIG_FILENAME
    if not path.exists():
        raise ConfigError(f"no {CONFIG_FILENAME} in {directory}; run init first")
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}") from exc
    raw = _as_mapping(raw, "config")

    project = _as_mapping(raw.get("project"), "project")
    name = str(_require(project, "name", "project"))
    repo = Path(str(_require(project, "repo", "project")))
    if not repo.is_absolute():
        repo = (directory / repo).resolve()
    if not repo.exists():
        raise ConfigError(f"project.repo: path does not exist: {repo}")
    branch = str(project.get("branch", "main"))
    build_command = str(project.get("build_command", "true"))

    rng = _as_mapping(raw.get("range"), "range")
    since = _parse_instant(rng["since"], "range.since") if rng.get("since") else None
    until = _parse_instant(rng["until"], "range.until") if rng.get("until") else None

    selection = _parse_selection(raw.get("selection"))

    frameworks = []
    seen_fw = set()
    for i, f in enumerate(_as_list(raw.get("frameworks"), "frameworks")):
        f = _as_mapping(f, f"frameworks[{i}]")
        fid = str(_require(f, "id", f"frameworks[{i}]"))
        if fid in seen_fw:
            raise ConfigError(f"frameworks[{i}].id: duplicate id {fid!r}")
        seen_fw.add(fid)
        frameworks.append({"id": fid, "name": str(f.get("name", ""))})

    protocols = []
    seen_p = set()
    for i, p in enumerate(_as_list(raw.get("protocols"), "protocols")):
        p = _as_mapping(p, f"protocols[{i}]")
        pid = str(_require(p, "id", f"protocols[{i}]"))
        if pid in seen_p:
            raise ConfigError(f"protocols[{i}].id: duplicate id {pid!r}")
        seen_p.add(pid)
        protocols.append({
            "id": pid,
            "title": str(p.get("title", "")),
            "description": str(p.get("description", "")),
            "selected": bool(p.get("selected", True)),
        })

    tests = []
    for i, t in enumerate(_as_list(raw.get("tests"), "tests")):
        t = _as_mapping(t, f"tests[{i}]")
        protocol = str(_require(t, "protocol", f"tests[{i}]"))
        framework = str(_require(t, "framework", f"tests[{i}]"))
        if protocol not in seen_p:
            raise ConfigError(f"tests[{i}].protocol: unknown protocol {protocol!r}")
        if framework not in seen_fw:
            raise ConfigError(f"tests[{i}].framework: unknown framework {framework!r}")
        tests.append({
            "protocol": protocol,
            "framework": framework,
            "run_command": str(_require(t, "run_command", f"tests[{i}]")),
            "script_path": str(t.get("script_path", "")),
        })

    mgt = _as_mapping(raw.get("mgt"), "mgt")
    frequency = str(mgt.get("frequency", "weekly"))
    if frequency not in ("weekly", "monthly", "per-version"):
        raise ConfigError(f"mgt.frequency: must be weekly, monthly or per-version")
    session_cost = mgt.get("session_cost_minutes", 75.0)
    if not isinstance(session_cost, (int, float)) or session_cost <= 0:
        raise ConfigError("mgt.session_cost_minutes: must be positive")
    accrual = str(mgt.get("accrual", "per-step"))
    if accrual not in ("per-step", "calendar"):
        raise ConfigError("mgt.accrual: must be per-step or calendar")

    estimator = _as_mapping(raw.get("estimator"), "estimator")
    est_defaults = {
        "model": str(estimator.get("model", "bayes")),
        "predictor": str(estimator.get("predictor", "step")),
        "horizon": int(estimator.get("horizon", 24)),
        "seed": int(estimator.get("seed", 0)),
        "chains": int(estimator.get("chains", 4)),
        "warmup": int(estimator.get("warmup", 1000)),
        "draws": int(estimator.get("draws", 1000)),
        "include_bug_time": bool(estimator.get("include_bug_time", True)),
        "dispersion_prior": str(estimator.get("dispersion_prior", "gamma-log")),
    }
    if est_defaults["model"] not in ("linear", "log", "bayes"):
        raise ConfigError("estimator.model: must be linear, log or bayes")
    if est_defaults["predictor"] not in ("step", "log-step"):
        raise ConfigError("estimator.predictor: must be step or log-step")
    if est_defaults["horizon"] < 0:
        raise ConfigError("estimator.horizon: cannot be negative")

    server = _as_mapping(raw.get("server"), "server")
    host = str(server.get("host", "127.0.0.1"))
    port = server.get("port", 8177)
    if not isinstance(port, int) or not 0 < port < 65536:
        raise ConfigError("server.port: must be a port number")
    token = os.environ.get(ENV_TOKEN) or str(server.get("token", ""))

    paths = _as_mapping(raw.get("paths"), "paths")
    ledger_env = os.environ.get(ENV_LEDGER)
    ledger_path = Path(ledger_env) if ledger_env else (
        directory / str(paths.get("ledger", LEDGER_FILENAME))
    )
    versions_path = directory / str(paths.get("versions", VERSIONS_FILENAME))

    options = _as_mapping(raw.get("options"), "options")

    return StudyConfig(
        directory=directory,
        name=name,
        repo=repo,
        branch=branch,
        build_command=build_command,
        since=since,
        until=until,
        selection=selection,
        frameworks=frameworks,
        protocols=protocols,
        tests=tests,
        mgt_frequency=frequency,
        mgt_session_cost=float(session_cost),
        mgt_accrual=accrual,
        estimator=est_defaults,
        server_host=host,
        server_port=port,
        server_token=token,
        ledger_path=ledger_path,
        versions_path=versions_path,
        options=dict(options),
        raw=raw,
    )


CONFIG_TEMPLATE = """\
# Study configuration. Paths are relative to this file's directory.
project:
  name: {name}
  repo: {repo}
  branch: {branch}
  build_command: "{build_command}"

# Optional time range over the branch history (ISO-8601 with offset).
range:
  since:
  until:

selection:
  strategy: interval        # interval | churn | explicit
  period_days: 7
  # threshold_lines: 400    # for churn
  # commits: []             # for explicit
  # sentinels:              # densified windows, e.g. around release dates
  #   - {{start: 2020-03-01T00:00:00+00:00, end: 2020-03-08T00:00:00+00:00, period_days: 1}}

frameworks: []
#  - {{id: selenium, name: Selenium}}

protocols: []
#  - {{id: p1, title: Login, selected: true}}

tests: []
#  - {{protocol: p1, framework: selenium, run_command: "python tests/p1.py", script_path: tests/p1.py}}

mgt:
  frequency: weekly         # weekly | monthly | per-version
  session_cost_minutes: 75
  accrual: per-step         # per-step | calendar

estimator:
  model: bayes              # linear | log | bayes
  predictor: step           # step | log-step
  horizon: 24
  seed: 0
  chains: 4
  warmup: 1000
  draws: 1000
  include_bug_time: true
  dispersion_prior: gamma-log   # gamma-log (phi > 1) | exponential (phi > 0)

server:
  host: 127.0.0.1
  port: 8177
  token: ""                 # or set REPLAYROI_TOKEN

paths:
  ledger: ledger.ndjson
  versions: versions.json

options: {{}}
"""


def write_template(
    directory: str | Path,
    name: str,
    repo: str,
    branch: str = "main",
    build_command: str = "true",
) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / CONFIG_FILENAME
    if path.exists():
        raise ConfigError(f"{path} already exists; refusing to overwrite")
    path.write_text(
        CONFIG_TEMPLATE.format(
            name=name, repo=repo, branch=branch, build_command=build_command
        ),
        encoding="utf-8",
    )
    return path
