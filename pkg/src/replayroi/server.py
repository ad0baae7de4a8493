"""HTTP service exposing the session to the web console.

Read endpoints serve tables, series, estimates and session state computed
from the same folded snapshot the CLI uses. Command endpoints funnel into
the single-writer session under one lock, mirror its operations one to
one, and support three safety mechanisms:

* shared-token auth (Authorization: Bearer, X-Auth-Token, or ?token= for
  the event stream, which browsers cannot send headers on),
* optimistic concurrency: a command carrying expect_seq is refused with
  409 when the ledger has moved past that sequence number,
* idempotency: repeating a command_id returns the recorded response
  instead of re-executing, so client retries cannot double-append.

GET /api/events is a server-sent-event stream: ledger events as they
append, plus a tick at least once per second carrying the server clock and
the elapsed time of any running activity. The console renders timers from
these ticks rather than trusting the client clock.

Static console assets are served from a directory handed to serve(); the
service works headless without one.
"""

import hmac
import json
import mimetypes
import queue
import threading
from collections import OrderedDict
from datetime import datetime
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from urllib.parse import parse_qs, urlparse

from .errors import BlockedError, ReplayRoiError, UsageError
from .report import EstimateOptions, run_estimate, series_payload, build_bundle
from .session import ReplaySession, ReplayDriver

TICK_SECONDS = 1.0
API_PREFIX = "/api/"


class ServerError(ReplayRoiError):
    pass


class PortInUseError(ServerError, UsageError):
    pass


class _Broker:
    """Fan-out of ledger events to connected event-stream subscribers."""

    def __init__(self):
        self._lock = threading.Lock()
        self._subscribers: list[queue.Queue] = []

    def subscribe(self) -> queue.Queue:
        q: queue.Queue = queue.Queue(maxsize=1000)
        with self._lock:
            self._subscribers.append(q)
        return q

    def unsubscribe(self, q: queue.Queue) -> None:
        with self._lock:
            if q in self._subscribers:
                self._subscribers.remove(q)

    def publish(self, message: dict) -> None:
        with self._lock:
            targets = list(self._subscribers)
        for q in targets:
            try:
                q.put_nowait(message)
            except queue.Full:
                pass  # slow consumer drops events; it can refetch by seq


class ReplayService:
    """Application logic behind the HTTP handler, independent of sockets."""

    COMMANDS = (
        "record-baseline", "start", "advance", "run-test", "run-all",
        "record-test-run", "classify", "start-activity", "stop-activity",
        "discard-activity", "record-activity", "record-bug",
        "script-updated", "complete-version", "complete-session",
    )

    def __init__(
        self,
        session: ReplaySession,
        driver: ReplayDriver | None = None,
        token: str = "",
        estimate_defaults: dict | None = None,
        versions_loader=None,
        num_versions_hint=None,
    ):
        self.session = session
        self.driver = driver
        self.token = token
        self.estimate_defaults = dict(estimate_defaults or {})
        self.versions_loader = versions_loader
        self.num_versions_hint = num_versions_hint
        self.lock = threading.Lock()
        self.broker = _Broker()
        self._command_cache: OrderedDict[str, tuple] = OrderedDict()
        self._estimate_cache: dict = {}

    # -- auth -------------------------------------------------------------

    def check_token(self, presented: str | None) -> bool:
        if not self.token:
            return True
        return presented is not None and hmac.compare_digest(self.token, presented)

    # -- reads ------------------------------------------------------------

    def _num_versions(self):
        state = self.session.state
        return state.num_versions or state.tables.num_versions or self.num_versions_hint

    def session_payload(self) -> dict:
        with self.lock:
            state = self.session.state
            payload = state.progress()
            payload["server_time"] = self.session.clock.now().isoformat()
            if state.config is not None:
                payload["config"] = state.config.to_payload()
            if state.versions is not None:
                payload["versions"] = state.versions.to_payload()
            open_act = state.open_activity
            if open_act is not None:
                payload["open_activity"] = dict(
                    open_act, elapsed_s=self._elapsed(open_act)
                )
            version = state.current_version
            if version:
                payload["test_grid"] = self._test_grid(version)
                payload["unclassified"] = [
                    {"protocol": r.protocol, "framework": r.framework,
                     "attempt": r.attempt}
                    for r in state.unclassified_failures(version)
                ]
            return payload

    def _test_grid(self, version: int) -> list[dict]:
        state = self.session.state
        grid = []
        config = state.config
        if config is None:
            return grid
        classified = state.classified_keys()
        for fw in config.framework_ids():
            for ref in config.tests_for(fw):
                latest = state.latest_outcome(version, ref["protocol"], fw)
                cell = {
                    "protocol": ref["protocol"],
                    "framework": fw,
                    "outcome": None,
                    "attempt": 0,
                    "classified": False,
                }
                if latest is not None:
                    outcome, attempt = latest
                    cell["outcome"] = outcome
                    cell["attempt"] = attempt
                    cell["classified"] = (
                        (version, ref["protocol"], fw, attempt) in classified
                    )
                grid.append(cell)
        return grid

    def _elapsed(self, open_act: dict) -> float:
        clock = self.session.clock
        if open_act.get("clock_epoch") == clock.epoch:
            return max(0.0, clock.monotonic() - float(open_act["monotonic"]))
        started = datetime.fromisoformat(open_act["wall"])
        return max(0.0, (clock.now() - started).total_seconds())

    def tables_payload(self) -> dict:
        with self.lock:
            bundle = build_bundle(
                self.session.state.tables,
                ledger_seq=self.session.state.last_seq,
                config_payload=(
                    self.session.state.config.to_payload()
                    if self.session.state.config else {}
                ),
                num_versions=self._num_versions(),
                generated_at=self.session.clock.now().isoformat(),
            )
        return {
            "seq": bundle["provenance"]["ledger_seq"],
            "provenance": bundle["provenance"],
            "tables": bundle["tables"],
        }

    def series_payload(self) -> dict:
        with self.lock:
            seq = self.session.state.last_seq
            series = series_payload(self.session.state.tables, self._num_versions())
        return {"seq": seq, "series": series}

    def roi_payload(self, query: dict) -> dict:
        def pick(name, default=None):
            values = query.get(name)
            return values[0] if values else default

        framework = pick("framework")
        if not framework:
            raise UsageError("roi needs ?framework=")
        defaults = self.estimate_defaults
        options = EstimateOptions(
            framework=framework,
            schedule=pick("schedule", defaults.get("schedule", "weekly")),
            session_cost=float(
                pick("session_cost", pick("cost", defaults.get("session_cost", 75.0)))
            ),
            accrual=pick("accrual", defaults.get("accrual", "per-step")),
            model=pick("model", defaults.get("model", "bayes")),
            predictor=pick("predictor", defaults.get("predictor", "step")),
            horizon=int(pick("horizon", defaults.get("horizon", 24))),
            seed=int(pick("seed", defaults.get("seed", 0))),
            include_bug_time=pick(
                "include_bug_time", str(defaults.get("include_bug_time", True))
            ).lower() not in ("0", "false", "no"),
            chains=int(defaults.get("chains", 4)),
            warmup=int(defaults.get("warmup", 1000)),
            draws=int(defaults.get("draws", 1000)),
            dispersion_prior=defaults.get("dispersion_prior", "gamma-log"),
        )
        with self.lock:
            seq = self.session.state.last_seq
            tables = self.session.state.tables
            versions = self.session.state.versions
            num_versions = self._num_versions()
        key = (seq, options)
        if key in self._estimate_cache:
            return self._estimate_cache[key]
        result = run_estimate(
            tables, options, versions=versions, num_versions=num_versions
        )
        payload = {"seq": seq, "estimate": result}
        self._estimate_cache.clear()  # one snapshot's worth is enough
        self._estimate_cache[key] = payload
        return payload

    # -- commands ---------------------------------------------------------

    def handle_command(self, op: str, body: dict) -> tuple[int, dict]:
        if op not in self.COMMANDS:
            return 404, {"error": f"unknown command {op!r}"}
        command_id = body.get("command_id")
        with self.lock:
            if command_id and command_id in self._command_cache:
                return self._command_cache[command_id]
            expect_seq = body.get("expect_seq")
            if expect_seq is not None and int(expect_seq) != self.session.state.last_seq:
                return 409, {
                    "error": "stale state",
                    "expected_seq": int(expect_seq),
                    "actual_seq": self.session.state.last_seq,
                }
            before = self.session.state.last_seq
            try:
                result = self._dispatch(op, body)
                status, payload = 200, {
                    "ok": True,
                    "seq": self.session.state.last_seq,
                    "result": result,
                }
            except BlockedError as exc:
                status, payload = 409, {"error": str(exc), "blocked": True}
            except UsageError as exc:
                status, payload = 400, {"error": str(exc)}
            except KeyError as exc:
                # a command body without a required args field is caller error
                status, payload = 400, {"error": f"missing command field {exc}"}
            new_events = self.session.ledger.events()[before:]
            if command_id:
                self._command_cache[command_id] = (status, payload)
                while len(self._command_cache) > 1000:
                    self._command_cache.popitem(last=False)
        for event in new_events:
            self.broker.publish({
                "type": "ledger",
                "seq": event.seq,
                "at": event.at.isoformat(),
                "kind": event.kind,
                "payload": event.payload,
            })
        return status, payload

    def _dispatch(self, op: str, body: dict):
        session = self.session
        args = body.get("args") or {}
        if op == "record-baseline":
            return session.record_baseline(
                category=args["category"],
                protocol=args["protocol"],
                duration_s=int(args["duration_s"]),
                framework=args.get("framework"),
            )
        if op == "start":
            versions = None
            if self.versions_loader is not None:
                versions = self.versions_loader()
            if versions is None:
                raise UsageError("no version sequence available; select versions first")
            return session.start(versions, force=bool(args.get("force")))
        if op == "advance":
            if self.driver is None:
                raise UsageError("server is running without a workspace driver")
            return self.driver.advance(force=bool(args.get("force")))
        if op == "run-test":
            if self.driver is None:
                raise UsageError("server is running without a workspace driver")
            return self.driver.run_test(args["protocol"], args["framework"])
        if op == "run-all":
            if self.driver is None:
                raise UsageError("server is running without a workspace driver")
            return self.driver.run_all(args.get("framework"))
        if op == "record-test-run":
            return session.record_test_run(
                protocol=args["protocol"],
                framework=args["framework"],
                outcome=args["outcome"],
                duration_s=args.get("duration_s"),
                note=args.get("note", ""),
            )
        if op == "classify":
            return session.classify_failure(
                protocol=args["protocol"],
                framework=args["framework"],
                kind=args["kind"],
                note=args.get("note", ""),
            )
        if op == "start-activity":
            return session.start_activity(
                category=args["category"],
                protocol=args["protocol"],
                framework=args.get("framework"),
                note=args.get("note", ""),
            )
        if op == "stop-activity":
            return session.stop_activity(note=args.get("note", ""))
        if op == "discard-activity":
            return session.discard_activity()
        if op == "record-activity":
            return session.record_activity(
                category=args["category"],
                protocol=args["protocol"],
                duration_s=int(args["duration_s"]),
                framework=args.get("framework"),
                note=args.get("note", ""),
            )
        if op == "record-bug":
            return session.record_bug(
                description=args["description"],
                resolution=args["resolution"],
                activity_seq=args.get("activity_seq"),
            )
        if op == "script-updated":
            return session.record_script_update(
                protocol=args["protocol"],
                framework=args["framework"],
                description=args.get("description", ""),
            )
        if op == "complete-version":
            return session.complete_version(force=bool(args.get("force")))
        if op == "complete-session":
            return session.complete_session(
                note=args.get("note", ""), force=bool(args.get("force"))
            )
        raise UsageError(f"unhandled command {op!r}")  # unreachable

    # -- event stream -----------------------------------------------------

    def events_since(self, since: int) -> list[dict]:
        return [
            {
                "type": "ledger",
                "seq": e.seq,
                "at": e.at.isoformat(),
                "kind": e.kind,
                "payload": e.payload,
            }
            for e in self.session.ledger.events()
            if e.seq > since
        ]

    def tick_payload(self) -> dict:
        with self.lock:
            state = self.session.state
            open_act = state.open_activity
            tick = {
                "type": "tick",
                "now": self.session.clock.now().isoformat(),
                "seq": state.last_seq,
                "open_activity": None,
            }
            if open_act is not None:
                tick["open_activity"] = {
                    "category": open_act.get("category"),
                    "protocol": open_act.get("protocol"),
                    "framework": open_act.get("framework"),
                    "version": open_act.get("version"),
                    "elapsed_s": round(self._elapsed(open_act), 3),
                }
            return tick


def _guess_type(path: Path) -> str:
    guessed, _ = mimetypes.guess_type(str(path))
    return guessed or "application/octet-stream"


class ConsoleRequestHandler(BaseHTTPRequestHandler):
    """Routes HTTP traffic to a ReplayService; one instance per request."""

    protocol_version = "HTTP/1.1"
    service: ReplayService = None  # set by make_server
    static_dir: Path | None = None

    def log_message(self, format, *args):  # quiet by default
        pass

    # -- plumbing ---------------------------------------------------------

    def _send_json(self, status: int, payload: dict) -> None:
        body = json.dumps(payload).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json; charset=utf-8")
        self.send_header("Content-Length", str(len(body)))
        self.send_header("Cache-Control", "no-store")
        self.end_headers()
        self.wfile.write(body)

    def _presented_token(self, query: dict) -> str | None:
        auth = self.headers.get("Authorization", "")
        if auth.startswith("Bearer "):
            return auth[len("Bearer "):]
        header = self.headers.get("X-Auth-Token")
        if header:
            return header
        values = query.get("token")
        return values[0] if values else None

    # -- GET --------------------------------------------------------------

    def do_GET(self):
        parsed = urlparse(self.path)
        path = parsed.path
        query = parse_qs(parsed.query)
        if path.startswith(API_PREFIX) and not self.service.check_token(
            self._presented_token(query)
        ):
            return self._send_json(401, {"error": "bad or missing token"})
        try:
            if path == "/api/session":
                return self._send_json(200, self.service.session_payload())
            if path == "/api/tables":
                return self._send_json(200, self.service.tables_payload())
            if path == "/api/series":
                return self._send_json(200, self.service.series_payload())
            if path == "/api/roi":
                return self._send_json(200, self.service.roi_payload(query))
            if path == "/api/events":
                return self._stream_events(query)
            if path.startswith(API_PREFIX):
                return self._send_json(404, {"error": f"no endpoint {path}"})
            return self._serve_static(path)
        except UsageError as exc:
            return self._send_json(400, {"error": str(exc)})
        except BrokenPipeError:
            pass
        except Exception as exc:  # internal error, reported not raised
            return self._send_json(500, {"error": f"internal: {exc}"})

    def _serve_static(self, path: str) -> None:
        if self.static_dir is None:
            return self._send_json(404, {"error": "no console assets bundled"})
        rel = path.lstrip("/") or "index.html"
        target = (self.static_dir / rel).resolve()
        root = self.static_dir.resolve()
        if root not in target.parents and target != root:
            return self._send_json(404, {"error": "not found"})
        if target.is_dir():
            target = target / "index.html"
        if not target.is_file():
            # single-page app: unknown paths fall back to the shell
            fallback = root / "index.html"
            if fallback.is_file():
                target = fallback
            else:
                return self._send_json(404, {"error": "not found"})
        body = target.read_bytes()
        self.send_response(200)
        self.send_header("Content-Type", _guess_type(target))
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _stream_events(self, query: dict) -> None:
        # token already checked in do_GET for every API path
        since = int(query.get("since", ["0"])[0])
        self.send_response(200)
        self.send_header("Content-Type", "text/event-stream")
        self.send_header("Cache-Control", "no-store")
        self.send_header("Connection", "close")
        self.end_headers()

        def emit(message: dict) -> None:
            kind = message.get("type", "message")
            data = json.dumps(message)
            chunk = f"event: {kind}\ndata: {data}\n\n".encode("utf-8")
            self.wfile.write(chunk)
            self.wfile.flush()

        q = self.service.broker.subscribe()
        try:
            for message in self.service.events_since(since):
                emit(message)
            emit(self.service.tick_payload())
            while True:
                try:
                    message = q.get(timeout=TICK_SECONDS)
                except queue.Empty:
                    message = self.service.tick_payload()
                emit(message)
        except (BrokenPipeError, ConnectionResetError, OSError):
            pass
        finally:
            self.service.broker.unsubscribe(q)

    # -- POST -------------------------------------------------------------

    def do_POST(self):
        parsed = urlparse(self.path)
        path = parsed.path
        query = parse_qs(parsed.query)
        if not path.startswith("/api/commands/"):
            return self._send_json(404, {"error": f"no endpoint {path}"})
        if not self.service.check_token(self._presented_token(query)):
            return self._send_json(401, {"error": "bad or missing token"})
        op = path[len("/api/commands/"):]
        length = int(self.headers.get("Content-Length") or 0)
        raw = self.rfile.read(length) if length else b"{}"
        try:
            body = json.loads(raw.decode("utf-8") or "{}")
        except ValueError:
            return self._send_json(400, {"error": "body must be JSON"})
        if not isinstance(body, dict):
            return self._send_json(400, {"error": "body must be a JSON object"})
        try:
            status, payload = self.service.handle_command(op, body)
        except Exception as exc:
            return self._send_json(500, {"error": f"internal: {exc}"})
        return self._send_json(status, payload)


def make_server(
    service: ReplayService,
    host: str = "127.0.0.1",
    port: int = 8177,
    static_dir: str | Path | None = None,
) -> ThreadingHTTPServer:
    """Bind the service; caller runs serve_forever() or polls in a thread."""
    handler = type(
        "BoundHandler",
        (ConsoleRequestHandler,),
        {
            "service": service,
            "static_dir": Path(static_dir) if static_dir else None,
        },
    )
    try:
        httpd = ThreadingHTTPServer((host, port), handler)
    except OSError as exc:
        if exc.errno in (48, 98):  # EADDRINUSE on mac/linux
            raise PortInUseError(f"port {port} on {host} is already in use") from exc
        raise ServerError(f"cannot bind {host}:{port}: {exc}") from exc
    httpd.daemon_threads = True
    return httpd
