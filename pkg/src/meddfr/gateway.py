"""Service surface: token-authenticated JSON API over the system facade.

Internal responders authenticate against the principal registry; remote
(third-party) sessions additionally append an AuthSession entry to the
hash-chained session ledger. Every mutating endpoint is role-checked and
lands in an audit chain through its owning module.

The handler core is transport-free (``handle()`` takes and returns plain
data) so tests drive it directly; ``serve()`` wraps it in a stdlib HTTP
server for the triage console.
"""

from __future__ import annotations

import json
import re
import secrets
import threading
import time
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Any, Optional
from urllib.parse import parse_qs, urlparse

from .incidents import (
    ACK_IN_PLACE,
    TERMINAL_STATES,
    TRANSITIONS,
    VALIDATE_STATES,
    IllegalTransition,
    Incident,
    IncidentState,
    UnauthorizedActor,
)
from .ledger import AuditAction
from .model import IRTClass, Severity, to_envelope
from .simulate import ScenarioId, letby_preset, run_pipeline, scenario_preset, generate
from .store import NodeGroup
from .system import System
from .forensics import UnauthorizedActor as ImagingUnauthorized

DEFAULT_SESSION_TTL_MS = 8 * 3_600_000


class InvalidCredentials(Exception):
    pass


@dataclass
class Session:
    session_id: str
    principal_id: str
    irt_class: Optional[IRTClass]
    admin: bool
    issued_at: int
    expires_at: int
    remote: bool
    ledger_seq: Optional[int] = None


def transition_table() -> dict[str, list[str]]:
    """State -> legal actions; the contract the console mirrors."""
    table: dict[str, list[str]] = {state.value: [] for state in IncidentState}
    for action, moves in TRANSITIONS.items():
        for state in moves:
            table[state.value].append(action)
    for state in ACK_IN_PLACE:
        table[state.value].append("ack")
    for state in VALIDATE_STATES:
        table[state.value].append("validate")
    for state in TERMINAL_STATES:
        table[state.value] = []
    return {state: sorted(actions) for state, actions in table.items()}


def _wall_ms() -> int:
    return int(time.time() * 1000)


class Gateway:
    def __init__(self, system: System, session_ttl_ms: int = DEFAULT_SESSION_TTL_MS):
        self.system = system
        self.session_ttl_ms = session_ttl_ms
        self.sessions: dict[str, Session] = {}
        self.metrics_runs: dict[str, dict] = {}
        self._run_counter = 0

    # ---- authentication --------------------------------------------------------

    def authenticate(self, principal_id: str, secret: str, remote: bool = False,
                     at: Optional[int] = None) -> Session:
        # Sessions age on the wall clock (transport concern); domain state
        # stays on virtual time. Deterministic tests pass `at` explicitly.
        principal = self.system.principals.get(principal_id)
        if principal is None or principal.secret != secret:
            raise InvalidCredentials(principal_id)
        issued = at if at is not None else _wall_ms()
        session = Session(
            session_id=secrets.token_hex(16),
            principal_id=principal_id,
            irt_class=principal.irt_class,
            admin=principal.admin,
            issued_at=issued,
            expires_at=issued + self.session_ttl_ms,
            remote=remote or principal.third_party,
        )
        if session.remote:
            entry = self.system.session_ledger.append(
                principal_id,
                principal.irt_class or IRTClass.C,
                AuditAction.AUTH_SESSION,
                session.session_id,
                issued,
            )
            session.ledger_seq = entry.seq
        self.sessions[session.session_id] = session
        return session

    def _session_from_headers(self, headers: dict[str, str],
                              now: int) -> Optional[Session]:
        token = None
        auth = headers.get("authorization") or headers.get("Authorization")
        if auth and auth.lower().startswith("bearer "):
            token = auth[7:].strip()
        token = token or headers.get("x-session") or headers.get("X-Session")
        if not token:
            return None
        session = self.sessions.get(token)
        if session is None or now > session.expires_at:
            return None
        return session

    # ---- request handling -----------------------------------------------------

    def handle(self, method: str, path: str, query: Optional[dict[str, str]] = None,
               body: Optional[dict[str, Any]] = None,
               headers: Optional[dict[str, str]] = None) -> tuple[int, dict]:
        query = query or {}
        body = body or {}
        headers = headers or {}
        now = body.get("at", _wall_ms())

        if method == "POST" and path == "/auth":
            try:
                session = self.authenticate(
                    body.get("principal_id", ""), body.get("secret", ""),
                    remote=bool(body.get("remote", False)), at=body.get("at"))
            except InvalidCredentials:
                return 401, {"error": "invalid-credentials"}
            return 200, {
                "session_id": session.session_id,
                "principal_id": session.principal_id,
                "irt_class": session.irt_class.value if session.irt_class else None,
                "admin": session.admin,
                "expires_at": session.expires_at,
                "remote": session.remote,
                "ledger_seq": session.ledger_seq,
            }

        if method == "GET" and path == "/meta/transitions":
            return 200, {"transitions": transition_table()}

        session = self._session_from_headers(headers, now)
        if session is None:
            return 401, {"error": "missing-or-expired-session"}

        if method == "GET" and path == "/alerts":
            return self._get_alerts(query)
        match = re.fullmatch(r"/incidents/([^/]+)", path)
        if method == "GET" and match:
            return self._get_incident(match.group(1))
        match = re.fullmatch(r"/incidents/([^/]+)/(ack|validate|dismiss|escalate|resolve)", path)
        if method == "POST" and match:
            return self._post_transition(match.group(1), match.group(2), session, body, now)
        if method == "POST" and path == "/images":
            return self._post_image(session, body, now)
        match = re.fullmatch(r"/images/([^/]+)", path)
        if method == "GET" and match:
            return self._get_image(match.group(1))
        match = re.fullmatch(r"/evidence/([^/]+)", path)
        if method == "GET" and match:
            return self._get_evidence(match.group(1))
        if method == "POST" and path == "/sim/run":
            return self._post_sim_run(session, body)
        if method == "GET" and path == "/metrics":
            return 200, {"runs": dict(self.metrics_runs)}
        match = re.fullmatch(r"/metrics/([^/]+)", path)
        if method == "GET" and match:
            run = self.metrics_runs.get(match.group(1))
            if run is None:
                return 404, {"error": "unknown-run"}
            return 200, run

        return 404, {"error": "unknown-endpoint"}

    # ---- endpoint bodies ---------------------------------------------------------

    def _alert_view(self, alert) -> dict:
        doc = alert.to_dict()
        incident = self.system.engine.incident_for_alert(alert.alert_id)
        doc["incident_id"] = incident.incident_id if incident else None
        doc["incident_state"] = incident.state.value if incident else None
        return doc

    def _get_alerts(self, query: dict[str, str]) -> tuple[int, dict]:
        items = [self._alert_view(a) for a in self.system.alerts]
        if "origin" in query:
            items = [a for a in items if a["origin"] == query["origin"]]
        if "severity" in query:
            items = [a for a in items if a["severity"] == query["severity"]]
        if "state" in query:
            items = [a for a in items if a["incident_state"] == query["state"]]
        items.sort(key=lambda a: (-(a["risk_score"] or 0.0),
                                  -Severity.from_label(a["severity"]).value,
                                  a["created_at"], a["alert_id"]))
        return 200, {"alerts": items}

    def _incident_view(self, incident: Incident) -> dict:
        doc = incident.to_dict()
        doc["audit"] = [e.to_dict() for e in
                        self.system.ledger.entries_for(incident.incident_id)]
        doc["legal_actions"] = self.system.engine.legal_actions(incident.incident_id)
        evidence = []
        for alert_id in incident.alert_refs:
            alert = self.system.alert_by_id(alert_id)
            if alert:
                evidence.extend(alert.evidence_refs)
        doc["evidence_refs"] = evidence
        return doc

    def _get_incident(self, incident_id: str) -> tuple[int, dict]:
        incident = self.system.engine.get(incident_id)
        if incident is None:
            return 404, {"error": "unknown-incident"}
        return 200, self._incident_view(incident)

    def _post_transition(self, incident_id: str, action: str, session: Session,
                         body: dict, now: int) -> tuple[int, dict]:
        if session.irt_class is None:
            return 403, {"error": "third-party-sessions-are-read-only"}
        try:
            incident = self.system.engine.transition(
                incident_id, action, session.principal_id, session.irt_class,
                at=body.get("at", now), note=body.get("note"))
        except KeyError:
            return 404, {"error": "unknown-incident"}
        except IllegalTransition as exc:
            return 409, {"error": "illegal-transition", "detail": str(exc)}
        except UnauthorizedActor as exc:
            return 403, {"error": "unauthorized", "detail": str(exc)}
        return 200, self._incident_view(incident)

    def _post_image(self, session: Session, body: dict, now: int) -> tuple[int, dict]:
        if session.irt_class != IRTClass.B:
            return 403, {"error": "image-acquisition-requires-class-B"}
        group_name = body.get("group", "DFR1")
        try:
            group = NodeGroup(group_name)
        except ValueError:
            return 400, {"error": f"unknown-group:{group_name}"}
        if group == NodeGroup.IMAGING:
            return 400, {"error": "cannot-image-the-imaging-group"}
        selection = body.get("selection")
        try:
            image = self.system.acquire_image(
                group, selection, session.principal_id, session.irt_class,
                at=body.get("at", now))
        except ImagingUnauthorized as exc:
            return 403, {"error": "unauthorized", "detail": str(exc)}
        return 200, image.to_dict()

    def _get_image(self, image_id: str) -> tuple[int, dict]:
        image = self.system.images.get(image_id)
        if image is None:
            return 404, {"error": "unknown-image"}
        mismatched = self.system.verify_image(image_id)
        doc = image.to_dict()
        doc["verified"] = not mismatched
        doc["mismatched_objects"] = mismatched
        return 200, doc

    def _get_evidence(self, record_id: str) -> tuple[int, dict]:
        record = self.system.evidence(record_id)
        if record is None:
            return 404, {"error": "unknown-record"}
        return 200, {"record": to_envelope(record)}

    def _post_sim_run(self, session: Session, body: dict) -> tuple[int, dict]:
        if not session.admin:
            return 403, {"error": "sim-run-requires-admin"}
        scenario_name = body.get("scenario", "letby")
        seed = int(body.get("seed", 1))
        duration_days = int(body.get("duration_days", 14))
        if scenario_name == "letby":
            config = letby_preset(seed, duration_days=duration_days)
        else:
            try:
                config = scenario_preset(ScenarioId(scenario_name), seed)
            except ValueError:
                return 400, {"error": f"unknown-scenario:{scenario_name}"}
        scenario = generate(config)
        metrics = run_pipeline(scenario, self.system)
        self._run_counter += 1
        run_id = f"run-{scenario_name}-{seed}-{self._run_counter}"
        self.metrics_runs[run_id] = metrics.to_dict()
        return 200, {"run_id": run_id, "metrics": metrics.to_dict()}


# ---- stdlib HTTP adapter ---------------------------------------------------


def serve(gateway: Gateway, host: str = "127.0.0.1", port: int = 8713,
          static_dir: Optional[str] = None) -> ThreadingHTTPServer:
    """Serve the gateway (and optionally the console's static files) on a
    background thread; returns the server for shutdown()."""

    class Handler(BaseHTTPRequestHandler):
        def _dispatch(self, method: str):
            parsed = urlparse(self.path)
            query = {k: v[0] for k, v in parse_qs(parsed.query).items()}
            body = {}
            length = int(self.headers.get("Content-Length") or 0)
            if length:
                try:
                    body = json.loads(self.rfile.read(length).decode("utf-8"))
                except json.JSONDecodeError:
                    self._send(400, {"error": "malformed-json"})
                    return
            if method == "GET" and static_dir and self._try_static(parsed.path):
                return
            status, doc = gateway.handle(
                method, parsed.path, query, body,
                {k.lower(): v for k, v in self.headers.items()})
            self._send(status, doc)

        def _try_static(self, path: str) -> bool:
            from pathlib import Path as _P

            base = _P(static_dir).resolve()
            name = "index.html" if path in ("/", "/index.html") else path.lstrip("/")
            target = (base / name).resolve()
            if not str(target).startswith(str(base)) or not target.is_file():
                return False
            content_types = {".html": "text/html", ".js": "text/javascript",
                             ".css": "text/css", ".json": "application/json"}
            data = target.read_bytes()
            self.send_response(200)
            self.send_header("Content-Type",
                             content_types.get(target.suffix, "application/octet-stream"))
            self.send_header("Content-Length", str(len(data)))
            self.end_headers()
            self.wfile.write(data)
            return True

        def _send(self, status: int, doc: dict):
            data = json.dumps(doc).encode("utf-8")
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(data)))
            self.send_header("Access-Control-Allow-Origin", "*")
            self.send_header("Access-Control-Allow-Headers",
                             "Authorization, Content-Type, X-Session")
            self.end_headers()
            self.wfile.write(data)

        def do_GET(self):
            self._dispatch("GET")

        def do_POST(self):
            self._dispatch("POST")

        def do_OPTIONS(self):
            self.send_response(204)
            self.send_header("Access-Control-Allow-Origin", "*")
            self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
            self.send_header("Access-Control-Allow-Headers",
                             "Authorization, Content-Type, X-Session")
            self.end_headers()

        def log_message(self, *args):
            pass

    server = ThreadingHTTPServer((host, port), Handler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    return server
