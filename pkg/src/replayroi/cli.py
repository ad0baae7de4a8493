"""Command-line front door for the replay study workflow.

Three phases map onto command groups: version selection (init, versions),
baseline capture (baseline, activity), and the replay loop with analysis
(replay, activity, estimate, report, export, serve). Every invocation
reconstructs its state by folding the ledger, so the CLI holds no hidden
state and any command sequence is reproducible from the project directory.

Exit codes: 0 success, 1 user error, 2 internal error, 3 blocked session
(e.g. starting replay with an incomplete baseline).
"""

import argparse
import json
import sys
from pathlib import Path

from .config import (
    CONFIG_FILENAME,
    StudyConfig,
    load_config,
    write_template,
)
from .errors import BlockedError, ReplayRoiError, UsageError
from .history import (
    VersionSequence,
    load_commit_history,
    select_versions,
)
from .ledger import EventLedger
from .records import ActivityCategory
from .report import (
    EstimateOptions,
    build_bundle,
    export_tables,
    render_tables,
    run_estimate,
)
from .server import ReplayService, make_server
from .session import ProjectConfig, ReplayDriver, ReplaySession

EXIT_OK = 0
EXIT_USER = 1
EXIT_INTERNAL = 2
EXIT_BLOCKED = 3


def _print(payload, as_json: bool, text: str | None = None) -> None:
    if as_json:
        print(json.dumps(payload, indent=2, sort_keys=True, default=str))
    elif text is not None:
        print(text)
    else:
        print(json.dumps(payload, indent=2, sort_keys=True, default=str))


def _load_study(args) -> StudyConfig:
    return load_config(Path(args.dir))


def _open_session(study: StudyConfig) -> ReplaySession:
    session = ReplaySession(EventLedger(study.ledger_path))
    _sync_config(session, study)
    return session


def _sync_config(session: ReplaySession, study: StudyConfig) -> None:
    """Mirror the YAML study file into the ledger's project config.

    Before the session starts the ledger follows the file; afterwards the
    ledger's recorded config is authoritative and file edits are ignored.
    """
    wanted = study.to_project_config().to_payload()
    state = session.state
    if state.config is None:
        session.configure(ProjectConfig.from_payload(wanted))
    elif not state.started and state.config.to_payload() != wanted:
        session.configure(ProjectConfig.from_payload(wanted))


def _load_versions(study: StudyConfig) -> VersionSequence:
    if not study.versions_path.exists():
        raise UsageError(
            f"no selected versions at {study.versions_path}; run versions select"
        )
    payload = json.loads(study.versions_path.read_text(encoding="utf-8"))
    return VersionSequence.from_payload(payload)


# ---------------------------------------------------------------------------
# Command handlers


def cmd_init(args) -> dict:
    path = write_template(
        directory=args.dir,
        name=args.name or Path(args.repo).name,
        repo=args.repo,
        branch=args.branch,
        build_command=args.build_command,
    )
    return {"config": str(path), "hint": f"edit {CONFIG_FILENAME}, then run versions select"}


def cmd_versions(args) -> dict:
    study = _load_study(args)
    if args.versions_cmd == "list":
        seq = _load_versions(study)
        return {
            "count": len(seq),
            "strategy": seq.strategy,
            "versions": seq.to_payload()["entries"],
        }
    history = load_commit_history(
        study.repo, study.branch, since=study.since, until=study.until
    )
    seq = select_versions(history, study.selection)
    study.versions_path.write_text(
        json.dumps(seq.to_payload(), indent=2), encoding="utf-8"
    )
    return {
        "count": len(seq),
        "strategy": seq.strategy,
        "commits_considered": len(history),
        "saved_to": str(study.versions_path),
        "first": seq.entries[0].label,
        "last": seq.entries[-1].label,
    }


def cmd_baseline(args) -> dict:
    study = _load_study(args)
    with _open_session(study) as session:
        if args.baseline_cmd == "status":
            missing = session.state.baseline_missing()
            return {"complete": not missing, "missing": missing}
        category = (
            ActivityCategory.MANUAL_BASELINE
            if args.category == "manual"
            else ActivityCategory.IMPLEMENTATION
        )
        if args.seconds is None and args.minutes is None:
            raise UsageError("give --seconds or --minutes")
        duration_s = args.seconds if args.seconds is not None else round(args.minutes * 60)
        seq = session.record_baseline(
            category=category,
            protocol=args.protocol,
            duration_s=int(duration_s),
            framework=args.framework,
        )
        return {"recorded": category.value, "protocol": args.protocol,
                "duration_s": int(duration_s), "seq": seq}


def cmd_replay(args) -> dict:
    study = _load_study(args)
    with _open_session(study) as session:
        sub = args.replay_cmd
        if sub == "start":
            versions = _load_versions(study)
            seq = session.start(versions, force=args.force)
            return {"started": True, "num_versions": len(versions), "seq": seq}
        if sub == "status":
            payload = session.state.progress()
            if session.state.current_version:
                pending = session.state.unclassified_failures(
                    session.state.current_version
                )
                payload["unclassified"] = [
                    f"{r.protocol}/{r.framework}" for r in pending
                ]
            return payload
        if sub == "next":
            driver = ReplayDriver(session, repo_path=study.repo)
            return driver.advance(force=args.force)
        if sub == "run":
            driver = ReplayDriver(session, repo_path=study.repo)
            if args.protocol:
                if not args.framework:
                    raise UsageError("--protocol needs --framework")
                return {"results": [driver.run_test(args.protocol, args.framework)]}
            return {"results": driver.run_all(args.framework)}
        if sub == "classify":
            seq = session.classify_failure(
                protocol=args.protocol,
                framework=args.framework,
                kind=args.kind,
                note=args.note,
            )
            return {"classified": args.kind, "seq": seq}
        if sub == "bug":
            seq = session.record_bug(
                description=args.description, resolution=args.resolution
            )
            return {"bug_recorded": True, "seq": seq}
        if sub == "script-updated":
            seq = session.record_script_update(
                protocol=args.protocol,
                framework=args.framework,
                description=args.note,
            )
            return {"script_updated": True, "seq": seq}
        if sub == "complete":
            seq = session.complete_version(force=args.force)
            return {
                "completed_version": session.state.current_version,
                "next_version": session.state.next_version,
                "seq": seq,
            }
        if sub == "finish":
            seq = session.complete_session(note=args.note, force=args.force)
            return {"session_completed": True, "seq": seq}
        raise UsageError(f"unknown replay subcommand {sub!r}")


def cmd_activity(args) -> dict:
    study = _load_study(args)
    with _open_session(study) as session:
        sub = args.activity_cmd
        if sub == "start":
            seq = session.start_activity(
                category=ActivityCategory(args.category),
                protocol=args.protocol,
                framework=args.framework,
                note=args.note,
            )
            return {"timing": args.category, "seq": seq}
        if sub == "stop":
            seq = session.stop_activity(note=args.note)
            return {"stopped": True, "seq": seq}
        if sub == "cancel":
            seq = session.discard_activity()
            return {"discarded": True, "seq": seq}
        if sub == "add":
            if args.seconds is None and args.minutes is None:
                raise UsageError("give --seconds or --minutes")
            duration_s = (
                args.seconds if args.seconds is not None else round(args.minutes * 60)
            )
            seq = session.record_activity(
                category=ActivityCategory(args.category),
                protocol=args.protocol,
                duration_s=int(duration_s),
                framework=args.framework,
                note=args.note,
            )
            return {"recorded": args.category, "duration_s": int(duration_s), "seq": seq}
        if sub == "status":
            open_act = session.state.open_activity
            return {"open_activity": open_act}
        raise UsageError(f"unknown activity subcommand {sub!r}")


def _estimate_options(study: StudyConfig, args) -> EstimateOptions:
    defaults = study.estimator
    return EstimateOptions(
        framework=args.framework,
        schedule=args.mgt or study.mgt_frequency,
        session_cost=args.mgt_cost if args.mgt_cost is not None else study.mgt_session_cost,
        accrual=args.accrual or study.mgt_accrual,
        model=args.model or defaults["model"],
        predictor=args.predictor or defaults["predictor"],
        horizon=args.horizon if args.horizon is not None else defaults["horizon"],
        seed=args.seed if args.seed is not None else defaults["seed"],
        include_bug_time=not args.exclude_bug_time and defaults["include_bug_time"],
        chains=defaults["chains"],
        warmup=defaults["warmup"],
        draws=defaults["draws"],
        dispersion_prior=defaults["dispersion_prior"],
    )


def cmd_estimate(args) -> dict:
    study = _load_study(args)
    with _open_session(study) as session:
        options = _estimate_options(study, args)
        versions = None
        if study.versions_path.exists():
            versions = _load_versions(study)
        result = run_estimate(
            session.state.tables,
            options,
            versions=versions,
            num_versions=session.state.num_versions or None,
        )
        return result


def _estimate_text(result: dict) -> str:
    roi = result["roi"]
    lines = [
        f"framework: {result['framework']}  model: {result['model']}  "
        f"schedule: {result['schedule']} @ {result['session_cost']} min "
        f"({result['accrual']})",
    ]
    if "fit" in result:
        fit = result["fit"]
        lines.append(
            f"fit: {fit['kind']}  a={fit['a']:.3f}  b={fit['b']:.3f}  "
            f"rmse={fit['rmse']:.3f}"
        )
    if "posterior" in result:
        for name, s in result["posterior"].items():
            lines.append(
                f"{name}: {s['mean']:.4f} (95% {s['q2.5']:.4f}..{s['q97.5']:.4f}) "
                f"rhat={s['rhat']:.3f} ess={s['ess']:.0f}"
            )
        if not result.get("diagnostics_ok", True):
            lines.append("WARNING: convergence diagnostics failed: "
                         + "; ".join(result.get("warnings", [])))
    if roi["beyond_horizon"]:
        lines.append(f"break-even: beyond horizon ({roi['horizon']} steps)")
    else:
        lines.append(
            f"break-even: step {roi['break_even_step']} "
            f"at {roi['break_even_minutes']:.2f} min cumulative"
        )
    if roi.get("interval") is not None:
        lo, hi = roi["interval"]
        lo_text = "beyond horizon" if lo is None else f"step {lo:.1f}"
        hi_text = "beyond horizon" if hi is None else f"step {hi:.1f}"
        lines.append(f"break-even 95% interval: {lo_text} .. {hi_text}")
    return "\n".join(lines)


def cmd_report(args) -> dict | str:
    study = _load_study(args)
    with _open_session(study) as session:
        tables = session.state.tables
        m = session.state.num_versions or None
        if args.format == "table":
            return render_tables(tables, m)
        if args.format == "csv":
            sheets = export_tables(tables, "csv")
            return "\n".join(f"== {name} ==\n{text}" for name, text in sheets.items())
        bundle = build_bundle(
            tables,
            ledger_seq=session.state.last_seq,
            config_payload=session.state.config.to_payload() if session.state.config else {},
            num_versions=m,
            bin_width=args.bin_width,
            generated_at=session.clock.now().isoformat(),
        )
        return bundle


def cmd_export(args) -> dict | str:
    study = _load_study(args)
    with _open_session(study) as session:
        tables = session.state.tables
        if args.format == "structured":
            text = export_tables(tables, "structured")
            if args.out:
                Path(args.out).write_text(text, encoding="utf-8")
                return {"written": args.out}
            return text
        sheets = export_tables(tables, "csv")
        if args.out:
            out_dir = Path(args.out)
            out_dir.mkdir(parents=True, exist_ok=True)
            written = []
            for name, text in sheets.items():
                target = out_dir / f"{name}.csv"
                target.write_text(text, encoding="utf-8")
                written.append(str(target))
            return {"written": written}
        return "\n".join(f"== {name} ==\n{text}" for name, text in sheets.items())


def cmd_serve(args) -> dict:
    study = _load_study(args)
    session = _open_session(study)
    driver = None
    try:
        driver = ReplayDriver(session, repo_path=study.repo)
    except ReplayRoiError:
        pass  # serving measurements without a workable checkout is fine
    token = args.token if args.token is not None else study.server_token
    defaults = dict(study.estimator)
    defaults["schedule"] = study.mgt_frequency
    defaults["session_cost"] = study.mgt_session_cost
    defaults["accrual"] = study.mgt_accrual

    def versions_loader():
        try:
            return _load_versions(study)
        except UsageError:
            return None

    service = ReplayService(
        session,
        driver=driver,
        token=token,
        estimate_defaults=defaults,
        versions_loader=versions_loader,
    )
    host = args.host or study.server_host
    port = args.port if args.port is not None else study.server_port
    static_dir = args.assets
    if static_dir is None:
        bundled = Path(__file__).parent / "console_assets"
        static_dir = bundled if bundled.is_dir() else None
    httpd = make_server(service, host=host, port=port, static_dir=static_dir)
    # flush so wrappers piping stdout see the address before the loop blocks
    print(
        f"serving on http://{host}:{port}/ (ledger {study.ledger_path})",
        flush=True,
    )
    try:
        httpd.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        httpd.shutdown()
        session.close()
    return {"stopped": True}


# ---------------------------------------------------------------------------
# Argument parsing


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="replayroi",
        description=(
            "Replay a repository's history to measure GUI test automation "
            "costs and estimate when automation pays off."
        ),
    )
    parser.add_argument("--dir", default=".", help="project directory (default: .)")
    parser.add_argument("--json", action="store_true", help="machine-readable output")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("init", help="write a study config template")
    p.add_argument("--repo", required=True, help="path to the subject repository")
    p.add_argument("--name", help="study name (default: repo directory name)")
    p.add_argument("--branch", default="main")
    p.add_argument("--build-command", default="true")
    p.set_defaults(handler=cmd_init)

    p = sub.add_parser("versions", help="select or list replay versions")
    vsub = p.add_subparsers(dest="versions_cmd", required=True)
    vsub.add_parser("select", help="apply the configured selection strategy")
    vsub.add_parser("list", help="show the persisted selection")
    p.set_defaults(handler=cmd_versions)

    p = sub.add_parser("baseline", help="record pre-replay baseline durations")
    bsub = p.add_subparsers(dest="baseline_cmd", required=True)
    rec = bsub.add_parser("record", help="enter a baseline duration directly")
    rec.add_argument("--category", choices=["manual", "implementation"], required=True)
    rec.add_argument("--protocol", required=True)
    rec.add_argument("--framework")
    rec.add_argument("--seconds", type=int)
    rec.add_argument("--minutes", type=float)
    bsub.add_parser("status", help="show which baseline entries are missing")
    p.set_defaults(handler=cmd_baseline)

    p = sub.add_parser("replay", help="drive the step-wise replay")
    rsub = p.add_subparsers(dest="replay_cmd", required=True)
    start = rsub.add_parser("start", help="open the session over the selected versions")
    start.add_argument("--force", action="store_true",
                       help="start despite an incomplete baseline")
    nxt = rsub.add_parser("next", help="check out the next version and verify its build")
    nxt.add_argument("--force", action="store_true",
                     help="checkout even with local changes")
    run = rsub.add_parser("run", help="execute automated tests at the current version")
    run.add_argument("--framework")
    run.add_argument("--protocol")
    cls = rsub.add_parser("classify", help="classify the newest run of a test")
    cls.add_argument("--protocol", required=True)
    cls.add_argument("--framework", required=True)
    cls.add_argument("--kind", required=True,
                     choices=["bug", "broken_test", "false_negative", "crash"])
    cls.add_argument("--note", default="")
    bug = rsub.add_parser("bug", help="record a defect found at the current version")
    bug.add_argument("--description", required=True)
    bug.add_argument("--resolution", choices=["fix", "workaround"], required=True)
    scr = rsub.add_parser("script-updated", help="note that a test script changed")
    scr.add_argument("--protocol", required=True)
    scr.add_argument("--framework", required=True)
    scr.add_argument("--note", default="")
    comp = rsub.add_parser("complete", help="close the current version")
    comp.add_argument("--force", action="store_true",
                      help="close despite unclassified failures")
    fin = rsub.add_parser("finish", help="close the whole session")
    fin.add_argument("--note", default="")
    fin.add_argument("--force", action="store_true",
                     help="finish with versions still open")
    rsub.add_parser("status", help="where the replay stands")
    p.set_defaults(handler=cmd_replay)

    p = sub.add_parser("activity", help="time categorized human work")
    asub = p.add_subparsers(dest="activity_cmd", required=True)
    categories = [c.value for c in ActivityCategory]
    st = asub.add_parser("start", help="start the activity timer")
    st.add_argument("--category", choices=categories, required=True)
    st.add_argument("--protocol", required=True)
    st.add_argument("--framework")
    st.add_argument("--note", default="")
    sp = asub.add_parser("stop", help="stop the timer and record the duration")
    sp.add_argument("--note", default="")
    asub.add_parser("cancel", help="abandon the running timer, counting nothing")
    add = asub.add_parser("add", help="enter a hand-measured duration")
    add.add_argument("--category", choices=categories, required=True)
    add.add_argument("--protocol", required=True)
    add.add_argument("--framework")
    add.add_argument("--seconds", type=int)
    add.add_argument("--minutes", type=float)
    add.add_argument("--note", default="")
    asub.add_parser("status", help="show the running timer, if any")
    p.set_defaults(handler=cmd_activity)

    p = sub.add_parser("estimate", help="fit cost models and locate break-even")
    p.add_argument("--framework", required=True)
    p.add_argument("--mgt", choices=["weekly", "monthly", "per-version"],
                   help="manual testing schedule")
    p.add_argument("--mgt-cost", type=float, help="minutes per manual session")
    p.add_argument("--accrual", choices=["per-step", "calendar"])
    p.add_argument("--model", choices=["linear", "log", "bayes"])
    p.add_argument("--predictor", choices=["step", "log-step"])
    p.add_argument("--horizon", type=int, help="steps to extrapolate past the data")
    p.add_argument("--seed", type=int)
    p.add_argument("--exclude-bug-time", action="store_true",
                   help="drop bug-handling from automation maintenance cost")
    p.set_defaults(handler=cmd_estimate)

    p = sub.add_parser("report", help="render summary tables and series")
    p.add_argument("--format", choices=["table", "csv", "bundle"], default="table")
    p.add_argument("--bin-width", type=float, default=5.0,
                   help="histogram bin width in minutes")
    p.set_defaults(handler=cmd_report)

    p = sub.add_parser("export", help="dump the measurement tables")
    p.add_argument("--format", choices=["csv", "structured"], default="csv")
    p.add_argument("--out", help="file (structured) or directory (csv) to write")
    p.set_defaults(handler=cmd_export)

    p = sub.add_parser("serve", help="run the web console service")
    p.add_argument("--host")
    p.add_argument("--port", type=int)
    p.add_argument("--token", help="shared secret for command endpoints")
    p.add_argument("--assets", help="directory of console static assets")
    p.set_defaults(handler=cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        result = args.handler(args)
    except BlockedError as exc:
        print(f"blocked: {exc}", file=sys.stderr)
        return EXIT_BLOCKED
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USER
    except ReplayRoiError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except KeyboardInterrupt:
        return EXIT_INTERNAL
    if isinstance(result, str) and not args.json:
        print(result)
    elif args.command == "estimate" and not args.json:
        print(_estimate_text(result))
    else:
        _print(result, args.json)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
