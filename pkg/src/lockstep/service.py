"""Long-running HTTP service: runs pipelines in background threads, streams
trace events as newline-delimited JSON, persists every event before
acknowledging it, and exposes the human-authorization endpoints that steer a
deadlocked run through a resolution option.

Single-process, file-backed. Endpoints:

    POST /runs                      start a pipeline            -> 201
    GET  /runs                      list run handles
    GET  /runs/{id}                 full run summary
    GET  /runs/{id}/events          NDJSON replay + live follow
    GET  /runs/{id}/menu            resolution menu             -> 200|409
    POST /runs/{id}/resolution      authorize an option         -> 202|409|422
    GET  /harnesses                 registry metadata (constants redacted)
    GET  /harnesses/{name}
    GET  /console/...               static negotiation console bundle
"""

from __future__ import annotations

import json
import re
import threading
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Optional
from urllib.parse import parse_qs, urlparse

from .assets import BUILTIN_HARNESSES, harness_path
from .controller import AgentSet, ProblemSpec, RunConfig, RunStatus, load_problem, run_pipeline
from .feasibility import ResolutionKind, ResolutionOption, apply_resolution
from .harness import HarnessRegistry, load_registry_file

DEFAULT_PORT = 8787

_TERMINAL = {"SUCCESS", "EXHAUSTED", "PARSE_EXCLUDED"}


class ApiError(Exception):
    def __init__(self, status: int, message: str):
        self.status = status
        self.message = message
        super().__init__(message)


@dataclass
class RunRecord:
    run_id: str
    problem_name: str
    harness_name: str
    agents_spec: str
    created_at: str
    config: dict
    status: str = "RUNNING"
    awaiting_authorization: bool = False
    degraded: bool = False
    continuing: bool = False  # override applied, continuation not yet terminal
    events: list[dict] = field(default_factory=list)
    registry: Optional[HarnessRegistry] = None
    problem: Optional[ProblemSpec] = None
    menu_payload: Optional[list[dict]] = None
    override_applied: bool = False
    cond: threading.Condition = field(default_factory=threading.Condition)

    def handle(self) -> dict:
        return {
            "run_id": self.run_id,
            "created_at": self.created_at,
            "status": self.status,
            "problem": self.problem_name,
            "harness": self.harness_name,
            "harness_version": self.registry.version if self.registry else "",
            "awaiting_authorization": self.awaiting_authorization,
            "degraded": self.degraded,
            "events": len(self.events),
        }


class RunStore:
    """File-backed run registry. Every event is persisted before it is
    acknowledged to the emitting pipeline or visible to readers."""

    def __init__(self, data_dir: str | Path):
        self.data_dir = Path(data_dir)
        self.runs_dir = self.data_dir / "runs"
        self.runs_dir.mkdir(parents=True, exist_ok=True)
        self._lock = threading.RLock()
        self._runs: dict[str, RunRecord] = {}
        self._load_existing()

    def _run_dir(self, run_id: str) -> Path:
        return self.runs_dir / run_id

    def _load_existing(self) -> None:
        for run_dir in sorted(self.runs_dir.iterdir()) if self.runs_dir.exists() else []:
            meta_path = run_dir / "meta.json"
            events_path = run_dir / "events.jsonl"
            if not meta_path.exists():
                continue
            meta = json.loads(meta_path.read_text(encoding="utf-8"))
            record = RunRecord(
                run_id=meta["run_id"],
                problem_name=meta["problem"],
                harness_name=meta["harness"],
                agents_spec=meta["agents"],
                created_at=meta["created_at"],
                config=meta.get("config", {}),
            )
            if events_path.exists():
                for line in events_path.read_text(encoding="utf-8").splitlines():
                    if not line.strip():
                        continue
                    try:
                        record.events.append(json.loads(line))
                    except json.JSONDecodeError:
                        record.degraded = True  # corrupt trailing line: skip
                        break
            self._replay_state(record)
            self._runs[record.run_id] = record

    @staticmethod
    def _replay_state(record: RunRecord) -> None:
        last_status = -1
        last_override = -1
        for idx, event in enumerate(record.events):
            if event["kind"] == "status":
                record.status = event["payload"]["status"]
                last_status = idx
            elif event["kind"] == "resolution_menu":
                record.menu_payload = event["payload"]["menu"]
            elif event["kind"] == "override":
                record.override_applied = True
                last_override = idx
        record.awaiting_authorization = (
            record.status == "FAILED_PARADOX" and not record.override_applied
        )
        if last_override > last_status:
            # The service died mid-continuation; nothing will resume it.
            record.degraded = True
        record.continuing = False

    def create(self, record: RunRecord) -> None:
        with self._lock:
            if record.run_id in self._runs:
                raise ApiError(409, f"run {record.run_id} already exists")
            run_dir = self._run_dir(record.run_id)
            run_dir.mkdir(parents=True, exist_ok=True)
            (run_dir / "meta.json").write_text(
                json.dumps(
                    {
                        "run_id": record.run_id,
                        "problem": record.problem_name,
                        "harness": record.harness_name,
                        "agents": record.agents_spec,
                        "created_at": record.created_at,
                        "config": record.config,
                    },
                    indent=2,
                ),
                encoding="utf-8",
            )
            self._runs[record.run_id] = record

    def get(self, run_id: str) -> RunRecord:
        with self._lock:
            if run_id not in self._runs:
                raise ApiError(404, f"unknown run {run_id}")
            return self._runs[run_id]

    def list(self) -> list[RunRecord]:
        with self._lock:
            return sorted(self._runs.values(), key=lambda r: r.created_at)

    def append(self, record: RunRecord, kind: str, payload: dict) -> None:
        with record.cond:
            seq = len(record.events)
            event = {"run_id": record.run_id, "t": seq, "kind": kind, "payload": payload}
            events_path = self._run_dir(record.run_id) / "events.jsonl"
            with open(events_path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(event, sort_keys=True) + "\n")
                fh.flush()
            record.events.append(event)
            if kind == "status":
                record.status = payload["status"]
                record.continuing = False
            elif kind == "resolution_menu":
                record.menu_payload = payload["menu"]
            elif kind == "override":
                record.override_applied = True
                record.continuing = True  # the relaxed loop is about to re-enter
            record.awaiting_authorization = (
                record.status == "FAILED_PARADOX" and not record.override_applied
            )
            record.cond.notify_all()


class Orchestrator:
    """Glue between the HTTP surface and the convergence controller."""

    def __init__(self, data_dir: str | Path):
        self.store = RunStore(data_dir)

    # -- run lifecycle ------------------------------------------------------

    def start_run(self, body: dict) -> str:
        problem_name = body.get("problem")
        harness_name = body.get("harness")
        if not problem_name or not harness_name:
            raise ApiError(422, "body requires 'problem' and 'harness'")
        agents_spec = body.get("agents", "boundary_chaser")
        config_body = body.get("config", {})
        try:
            problem = load_problem(problem_name)
            registry = load_registry_file(harness_path(harness_name))
            agents = AgentSet.from_spec(agents_spec)
        except FileNotFoundError as exc:
            raise ApiError(422, f"unknown problem or harness: {exc}") from exc
        except Exception as exc:
            raise ApiError(422, str(exc)) from exc
        run_id = f"run-{datetime.now(timezone.utc).strftime('%Y%m%d%H%M%S')}-{len(self.store.list()):04d}"
        record = RunRecord(
            run_id=run_id,
            problem_name=problem_name,
            harness_name=harness_name,
            agents_spec=agents_spec,
            created_at=datetime.now(timezone.utc).isoformat(timespec="seconds"),
            config=dict(config_body),
        )
        record.registry = registry
        record.problem = problem
        self.store.create(record)
        thread = threading.Thread(
            target=self._execute, args=(record, agents, config_body), daemon=True
        )
        thread.start()
        return run_id

    def _config_for(self, record: RunRecord, config_body: dict) -> RunConfig:
        return RunConfig(
            node_budget=int(config_body.get("node_budget", 3)),
            max_global_iters=int(config_body.get("max_global_iters", 3)),
            parse_attempts=int(config_body.get("parse_attempts", 3)),
            seed=int(config_body.get("seed", 0)),
            run_id=record.run_id,
        )

    def _execute(self, record: RunRecord, agents: AgentSet, config_body: dict) -> None:
        sink = lambda event: self.store.append(record, event.kind, event.payload)  # noqa: E731
        try:
            run_pipeline(
                record.problem,
                record.registry,
                agents,
                self._config_for(record, config_body),
                emit_external=sink,
            )
        except Exception as exc:
            self.store.append(record, "status", {"status": "EXHAUSTED", "error": str(exc)})

    # -- negotiation --------------------------------------------------------

    def menu(self, run_id: str) -> list[dict]:
        record = self.store.get(run_id)
        if not record.awaiting_authorization or not record.menu_payload:
            raise ApiError(409, f"run {run_id} is not awaiting authorization")
        return record.menu_payload

    def resolve(self, run_id: str, body: dict) -> dict:
        record = self.store.get(run_id)
        if not record.awaiting_authorization:
            raise ApiError(409, f"run {run_id} is not awaiting authorization")
        label = body.get("option_label", "")
        actor = (body.get("actor") or "").strip()
        justification = body.get("justification", "")
        if not actor:
            raise ApiError(422, "actor must be a non-empty string")
        menu = record.menu_payload or []
        option_payload = next((o for o in menu if o["label"] == label), None)
        if option_payload is None:
            raise ApiError(422, f"unknown option label {label!r}")
        option = ResolutionOption(**option_payload)
        if option.kind == ResolutionKind.REPORT_DEADLOCK:
            # Preserves all constraints: the run stays in FAILED_PARADOX with
            # the evidence package as the formal record.
            self.store.append(
                record,
                "deadlock_reported",
                {"actor": actor, "justification": justification},
            )
            return {"applied": False, "status": record.status}
        if option.kind != ResolutionKind.RELAX_PARAMETER:
            raise ApiError(422, f"option {label} is not executable")
        if record.registry is None:
            record.registry = load_registry_file(harness_path(record.harness_name))
        if record.problem is None:
            record.problem = load_problem(record.problem_name)
        try:
            relaxed, override = apply_resolution(
                record.registry, option, actor=actor, justification=justification
            )
        except Exception as exc:
            raise ApiError(422, str(exc)) from exc
        record.registry = relaxed
        self.store.append(record, "override", {"record": override.__dict__})
        agents = AgentSet.from_spec(record.agents_spec)
        thread = threading.Thread(
            target=self._execute, args=(record, agents, record.config), daemon=True
        )
        thread.start()
        return {"applied": True, "override": override.__dict__}

    # -- harness metadata ---------------------------------------------------

    def harness_info(self, name: str, include_constants: bool = False) -> dict:
        try:
            reg = load_registry_file(harness_path(name))
        except FileNotFoundError:
            raise ApiError(404, f"unknown harness {name}") from None
        body = {
            "name": name,
            "display_name": reg.name,
            "version": reg.version,
            "frozen": reg.frozen,
            "rules": [
                {
                    "id": r.id,
                    "title": r.title,
                    "description": r.description,
                    "target_field": r.target_field,
                    "condition": r.condition,
                    "severity": r.severity.value,
                    "negotiable": r.negotiable,
                    "relaxation_parameter": r.relaxation_parameter,
                    "scope": sorted(r.scope) if r.scope else None,
                }
                for r in reg.rules
            ],
            "variables": [
                {
                    "name": v.name,
                    "label": v.label,
                    "unit": v.unit,
                    "min": v.min,
                    "max": v.max,
                    "resolution": v.resolution,
                    "integer": v.integer,
                }
                for v in reg.variables
            ],
        }
        # Constants are never sent to agents; the console may request them
        # for an authorized session.
        if include_constants:
            body["constants"] = dict(reg.constants)
        else:
            body["constants_redacted"] = True
        return body


# ---------------------------------------------------------------------------
# HTTP layer


def make_handler(orchestrator: Orchestrator, console_dir: Optional[Path]):
    routes_runs = re.compile(r"^/runs/([A-Za-z0-9_\-]+)(/events|/menu|/resolution)?$")
    routes_harness = re.compile(r"^/harnesses/([A-Za-z0-9_\-\.]+)$")

    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"

        def log_message(self, *args):
            pass

        # -- helpers --------------------------------------------------------

        def _json(self, status: int, body) -> None:
            data = json.dumps(body, sort_keys=True).encode("utf-8")
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(data)))
            self.send_header("Access-Control-Allow-Origin", "*")
            self.end_headers()
            self.wfile.write(data)

        def _error(self, exc: ApiError) -> None:
            self._json(exc.status, {"error": exc.message})

        def _body(self) -> dict:
            length = int(self.headers.get("Content-Length", 0))
            if length == 0:
                return {}
            try:
                return json.loads(self.rfile.read(length).decode("utf-8"))
            except json.JSONDecodeError as exc:
                raise ApiError(422, f"invalid JSON body: {exc}") from exc

        # -- GET ------------------------------------------------------------

        def do_GET(self):
            try:
                self._route_get()
            except ApiError as exc:
                self._error(exc)
            except (BrokenPipeError, ConnectionResetError):
                pass

        def _route_get(self):
            parsed = urlparse(self.path)
            path = parsed.path.rstrip("/") or "/"
            query = parse_qs(parsed.query)
            if path == "/runs":
                self._json(200, [r.handle() for r in orchestrator.store.list()])
                return
            match = routes_runs.match(path)
            if match:
                run_id, sub = match.group(1), match.group(2)
                record = orchestrator.store.get(run_id)
                if sub is None:
                    self._json(200, self._summary(record))
                    return
                if sub == "/events":
                    self._stream_events(record, query)
                    return
                if sub == "/menu":
                    self._json(200, {"run_id": run_id, "menu": orchestrator.menu(run_id)})
                    return
                raise ApiError(404, "not found")
            if path == "/harnesses":
                self._json(200, sorted(BUILTIN_HARNESSES))
                return
            match = routes_harness.match(path)
            if match:
                include = query.get("include_constants", ["0"])[0] == "1"
                self._json(200, orchestrator.harness_info(match.group(1), include))
                return
            if path == "/" or path == "/console" or path.startswith("/console/"):
                self._serve_console(path)
                return
            raise ApiError(404, "not found")

        def _summary(self, record: RunRecord) -> dict:
            body = record.handle()
            evidence = next(
                (e["payload"]["text"] for e in record.events if e["kind"] == "evidence"), None
            )
            body["menu"] = record.menu_payload
            body["evidence"] = evidence
            final = next(
                (
                    e["payload"]
                    for e in reversed(record.events)
                    if e["kind"] == "status" and "artifact" in e["payload"]
                ),
                None,
            )
            body["artifact"] = final.get("artifact") if final else None
            return body

        def _stream_events(self, record: RunRecord, query) -> None:
            after = int(query.get("after", ["-1"])[0])
            follow = query.get("follow", ["1"])[0] != "0"
            max_wait = float(query.get("wait_s", ["30"])[0])
            self.send_response(200)
            self.send_header("Content-Type", "application/x-ndjson")
            self.send_header("Cache-Control", "no-store")
            self.send_header("Access-Control-Allow-Origin", "*")
            self.send_header("Transfer-Encoding", "chunked")
            self.end_headers()

            def write_line(obj: dict) -> None:
                data = json.dumps(obj, sort_keys=True).encode("utf-8") + b"\n"
                chunk = f"{len(data):X}\r\n".encode() + data + b"\r\n"
                self.wfile.write(chunk)
                self.wfile.flush()

            cursor = after + 1
            deadline = time.monotonic() + max_wait
            try:
                while True:
                    with record.cond:
                        while cursor < len(record.events):
                            write_line(record.events[cursor])
                            cursor += 1
                        # A run is only finished for streaming purposes once it
                        # sits in a terminal state with no continuation pending
                        # (an applied override re-enters the loop shortly).
                        terminal = not record.continuing and (
                            record.status in _TERMINAL
                            or (
                                record.status == "FAILED_PARADOX"
                                and not record.awaiting_authorization
                            )
                        )
                        if not follow or terminal:
                            break
                        if time.monotonic() >= deadline:
                            break
                        record.cond.wait(timeout=0.25)
                self.wfile.write(b"0\r\n\r\n")
                self.wfile.flush()
            except (BrokenPipeError, ConnectionResetError):
                pass

        def _serve_console(self, path: str) -> None:
            if console_dir is None:
                raise ApiError(404, "console bundle not built")
            rel = path[len("/console"):].lstrip("/") if path.startswith("/console") else ""
            target = (console_dir / (rel or "index.html")).resolve()
            if not str(target).startswith(str(console_dir.resolve())) or not target.is_file():
                raise ApiError(404, "not found")
            ctype = {
                ".html": "text/html",
                ".js": "application/javascript",
                ".css": "text/css",
                ".map": "application/json",
            }.get(target.suffix, "application/octet-stream")
            data = target.read_bytes()
            self.send_response(200)
            self.send_header("Content-Type", ctype)
            self.send_header("Content-Length", str(len(data)))
            self.end_headers()
            self.wfile.write(data)

        # -- POST -----------------------------------------------------------

        def do_POST(self):
            try:
                self._route_post()
            except ApiError as exc:
                self._error(exc)
            except (BrokenPipeError, ConnectionResetError):
                pass

        def _route_post(self):
            path = urlparse(self.path).path.rstrip("/")
            if path == "/runs":
                run_id = orchestrator.start_run(self._body())
                self._json(201, {"run_id": run_id})
                return
            match = routes_runs.match(path)
            if match and match.group(2) == "/resolution":
                result = orchestrator.resolve(match.group(1), self._body())
                self._json(202, result)
                return
            raise ApiError(404, "not found")

    return Handler


def create_server(
    port: int = DEFAULT_PORT,
    data_dir: str | Path = "data",
    console_dir: Optional[str | Path] = None,
) -> ThreadingHTTPServer:
    if console_dir is None:
        candidate = Path(__file__).resolve().parents[2] / "frontend" / "dist"
        console_dir = candidate if candidate.exists() else None
    orchestrator = Orchestrator(data_dir)
    handler = make_handler(orchestrator, Path(console_dir) if console_dir else None)
    server = ThreadingHTTPServer(("127.0.0.1", port), handler)
    server.orchestrator = orchestrator  # handy for tests
    return server


def serve_forever(port: int = DEFAULT_PORT, data_dir: str | Path = "data",
                  console_dir: Optional[str | Path] = None) -> None:
    server = create_server(port, data_dir, console_dir)
    print(f"listening on http://127.0.0.1:{server.server_port} (data: {data_dir})")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        server.shutdown()
