"""Start the measurement service and poke its HTTP interface.

The web console talks to the session over plain JSON endpoints plus a
server-sent event stream. This script stands a service up on an
ephemeral port, exercises the read endpoints and one command, shows the
token guard doing its job, and shuts down. Everything the browser
console does goes through exactly these calls.
"""

import json
import threading
import urllib.error
import urllib.request

from replayroi import (
    ActivityCategory,
    EventLedger,
    ManualClock,
    ProjectConfig,
    ReplayService,
    ReplaySession,
    make_server,
)

TOKEN = "demo-secret"


def small_session() -> ReplaySession:
    from replayroi import CommitRef, VersionEntry, VersionSequence
    from datetime import datetime, timedelta, timezone

    session = ReplaySession(EventLedger(None), clock=ManualClock())
    session.configure(ProjectConfig(
        name="service demo",
        repo=".",
        branch="main",
        build_command="true",
        protocols=[{"id": "login", "title": "Login", "selected": True}],
        frameworks=[{"id": "fw", "name": "demo"}],
        tests=[{"protocol": "login", "framework": "fw",
                "run_command": "true", "script_path": ""}],
    ))
    session.record_baseline(ActivityCategory.MANUAL_BASELINE, "login", 600)
    session.record_baseline(
        ActivityCategory.IMPLEMENTATION, "login", 3600, framework="fw"
    )
    t0 = datetime(2022, 2, 7, 9, 0, tzinfo=timezone.utc)
    session.start(VersionSequence(
        entries=tuple(
            VersionEntry(index=i,
                         commit=CommitRef(id=f"{i:02d}" + "e" * 38,
                                          timestamp=t0 + timedelta(weeks=i - 1)),
                         label=f"v{i}")
            for i in range(1, 4)
        ),
        strategy="fixture",
    ))
    session.checkout(1)
    session.verify_build(True)
    return session


def get(url: str, token: str | None = TOKEN):
    request = urllib.request.Request(url)
    if token:
        request.add_header("Authorization", f"Bearer {token}")
    with urllib.request.urlopen(request) as response:
        return json.load(response)


def post(url: str, payload: dict):
    request = urllib.request.Request(
        url, data=json.dumps(payload).encode(), method="POST",
        headers={"Content-Type": "application/json",
                 "Authorization": f"Bearer {TOKEN}"},
    )
    with urllib.request.urlopen(request) as response:
        return json.load(response)


session = small_session()
service = ReplayService(session, token=TOKEN)
httpd = make_server(service, host="127.0.0.1", port=0)
base = f"http://127.0.0.1:{httpd.server_address[1]}"
thread = threading.Thread(target=httpd.serve_forever, daemon=True)
thread.start()
print(f"service listening at {base}\n")

snapshot = get(f"{base}/api/session")
print(f"GET /api/session      version {snapshot['current_version']} "
      f"of {snapshot['num_versions']}, seq {snapshot['last_seq']}")

tables = get(f"{base}/api/tables")
impl = tables["tables"]["implementation"]["fw"]["total_minutes"]
print(f"GET /api/tables       implementation total {impl:.0f} min")

roi = get(f"{base}/api/roi?framework=fw&model=linear&session_cost=30")
step = roi["estimate"]["roi"]["break_even_step"]
print(f"GET /api/roi          break-even step {step} at 30 min weekly sessions")

try:
    get(f"{base}/api/session", token=None)
except urllib.error.HTTPError as error:
    print(f"GET without token     {error.code} (guard holds)")

# Commands are POSTs with an idempotency id; replaying the same id
# returns the recorded response instead of acting twice.
command = {"command_id": "demo-1",
           "args": {"protocol": "login", "framework": "fw",
                    "outcome": "pass", "duration_s": 42}}
first = post(f"{base}/api/commands/record-test-run", command)
second = post(f"{base}/api/commands/record-test-run", command)
print(f"POST record-test-run  seq {first['seq']}, replayed id gives seq "
      f"{second['seq']} (no duplicate)")

httpd.shutdown()
session.close()
print("\nserver stopped")
