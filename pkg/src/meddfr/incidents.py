"""Incident lifecycle, escalation policy, and the audited triage surface.

States: New -> TriagedA -> EscalatedB -> EscalatedC, with Resolved and
Dismissed terminal from any triaged level. Human transitions follow that
chain strictly; the SLA timer is the one system actor allowed to skip the
ack step (an unacknowledged New incident escalates straight to B, then C).

Authorization: class C is advisory and performs no transitions. Class A
works SIEM incidents up to High severity end-to-end but cannot close
BdDFR-origin or Critical incidents, nor touch incidents escalated to C.
Class B can do everything a human may do.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Optional, Sequence

from .ledger import AuditAction, AuditEntry, AuditLedger
from .model import IRTClass, Severity
from .siem import AlertRecord, Origin


class IncidentState(Enum):
    NEW = "New"
    TRIAGED_A = "TriagedA"
    ESCALATED_B = "EscalatedB"
    ESCALATED_C = "EscalatedC"
    RESOLVED = "Resolved"
    DISMISSED = "Dismissed"


TERMINAL_STATES = (IncidentState.RESOLVED, IncidentState.DISMISSED)

# Human action -> {current state: next state}. Non-state-changing but
# audited actions (ack above A level, validate) are handled separately.
TRANSITIONS: dict[str, dict[IncidentState, IncidentState]] = {
    "ack": {IncidentState.NEW: IncidentState.TRIAGED_A},
    "escalate": {
        IncidentState.TRIAGED_A: IncidentState.ESCALATED_B,
        IncidentState.ESCALATED_B: IncidentState.ESCALATED_C,
    },
    "resolve": {
        IncidentState.TRIAGED_A: IncidentState.RESOLVED,
        IncidentState.ESCALATED_B: IncidentState.RESOLVED,
        IncidentState.ESCALATED_C: IncidentState.RESOLVED,
    },
    "dismiss": {
        IncidentState.TRIAGED_A: IncidentState.DISMISSED,
        IncidentState.ESCALATED_B: IncidentState.DISMISSED,
        IncidentState.ESCALATED_C: IncidentState.DISMISSED,
    },
}

# States where ack/validate are accepted without changing state.
ACK_IN_PLACE = (IncidentState.ESCALATED_B, IncidentState.ESCALATED_C)
VALIDATE_STATES = (IncidentState.TRIAGED_A, IncidentState.ESCALATED_B,
                   IncidentState.ESCALATED_C)

ACTION_AUDIT = {
    "ack": AuditAction.ACK,
    "validate": AuditAction.VALIDATE,
    "dismiss": AuditAction.DISMISS,
    "escalate": AuditAction.ESCALATE,
    "resolve": AuditAction.RESOLVE,
}


class IllegalTransition(Exception):
    pass


class UnauthorizedActor(Exception):
    pass


class DuplicateAlert(Exception):
    pass


@dataclass
class Incident:
    incident_id: str
    alert_refs: list[str]
    origin: Origin
    severity: Severity
    state: IncidentState
    assignee_class: IRTClass
    opened_at: int
    sla_deadline: int
    ack_pending: bool = True
    validated: bool = False
    resolution_note: Optional[str] = None

    def to_dict(self) -> dict:
        return {
            "incident_id": self.incident_id,
            "alert_refs": list(self.alert_refs),
            "origin": self.origin.value,
            "severity": self.severity.label,
            "state": self.state.value,
            "assignee_class": self.assignee_class.value,
            "opened_at": self.opened_at,
            "sla_deadline": self.sla_deadline,
            "ack_pending": self.ack_pending,
            "validated": self.validated,
            "resolution_note": self.resolution_note,
        }


def default_notification_policy() -> dict[tuple[Origin, Severity], tuple[frozenset, frozenset]]:
    """Dispatch table: SIEM alerts go to class A by email and stay there
    until escalation; anything from the behavioral engine is high priority
    and reaches A and B by SMS and email; Critical always pulls in C."""
    policy = {}
    for severity in Severity:
        if severity == Severity.CRITICAL:
            policy[(Origin.SIEM, severity)] = (
                frozenset({IRTClass.A, IRTClass.B, IRTClass.C}),
                frozenset({"SMS", "Email"}))
            policy[(Origin.BDDFR, severity)] = (
                frozenset({IRTClass.A, IRTClass.B, IRTClass.C}),
                frozenset({"SMS", "Email"}))
        else:
            policy[(Origin.SIEM, severity)] = (
                frozenset({IRTClass.A}), frozenset({"Email"}))
            policy[(Origin.BDDFR, severity)] = (
                frozenset({IRTClass.A, IRTClass.B}), frozenset({"SMS", "Email"}))
    return policy


class Notifier:
    """Pluggable notification sinks; the default writes one line per
    dispatch to per-channel outbox files (or keeps them in memory)."""

    def __init__(self, outbox_dir: Optional[Path] = None):
        self.outbox_dir = Path(outbox_dir) if outbox_dir else None
        self.sent: list[dict] = []
        if self.outbox_dir:
            self.outbox_dir.mkdir(parents=True, exist_ok=True)

    def dispatch(self, incident_id: str, severity: Severity,
                 recipients: frozenset, channels: frozenset, at: int) -> None:
        names = ",".join(sorted(c.value for c in recipients))
        for channel in sorted(channels):
            message = {
                "at": at,
                "channel": channel,
                "recipients": names,
                "incident_id": incident_id,
                "severity": severity.label,
            }
            self.sent.append(message)
            if self.outbox_dir:
                path = self.outbox_dir / f"{channel.lower()}.log"
                line = (f"at={at} recipients={names} incident={incident_id} "
                        f"severity={severity.label}")
                with path.open("a") as fh:
                    fh.write(line + "\n")


def make_incident_id(alert_id: str) -> str:
    return "inc_" + hashlib.sha256(alert_id.encode()).hexdigest()[:16]


class IncidentEngine:
    """Owns incidents, the audit ledger, and notification dispatch."""

    def __init__(self, ledger: AuditLedger, notifier: Optional[Notifier] = None,
                 policy: Optional[dict] = None, ack_sla_ms: int = 30 * 60 * 1000):
        self.ledger = ledger
        self.notifier = notifier or Notifier()
        self.policy = policy or default_notification_policy()
        self.ack_sla_ms = ack_sla_ms
        self.incidents: dict[str, Incident] = {}
        self._alert_binding: dict[str, str] = {}

    # ---- lifecycle ---------------------------------------------------------

    def open_incident(self, alert: AlertRecord, at: Optional[int] = None) -> Incident:
        """Open (or return the already-bound) incident for an alert and
        dispatch notifications per policy."""
        if alert.alert_id in self._alert_binding:
            return self.incidents[self._alert_binding[alert.alert_id]]
        opened_at = at if at is not None else alert.created_at
        incident = Incident(
            incident_id=make_incident_id(alert.alert_id),
            alert_refs=[alert.alert_id],
            origin=alert.origin,
            severity=alert.severity,
            state=IncidentState.NEW,
            assignee_class=IRTClass.A,
            opened_at=opened_at,
            sla_deadline=opened_at + self.ack_sla_ms,
        )
        self.incidents[incident.incident_id] = incident
        self._alert_binding[alert.alert_id] = incident.incident_id
        self.ledger.append("system", IRTClass.A, AuditAction.OPEN,
                           incident.incident_id, opened_at)
        recipients, channels = self.policy[(alert.origin, alert.severity)]
        self.notifier.dispatch(incident.incident_id, alert.severity,
                               recipients, channels, opened_at)
        return incident

    def transition(self, incident_id: str, action: str, actor_id: str,
                   actor_class: IRTClass, at: int,
                   note: Optional[str] = None) -> Incident:
        """Apply a human triage action. Legality of the transition is checked
        before authorization (an impossible move is 'illegal' even for an
        actor who could never perform it)."""
        incident = self._get(incident_id)
        if action not in ACTION_AUDIT:
            raise IllegalTransition(f"unknown action {action!r}")

        new_state = self._next_state(incident, action)
        self._authorize(incident, action, actor_class)

        if action == "ack":
            incident.ack_pending = False
        if action == "validate":
            incident.validated = True
        if new_state is not None:
            incident.state = new_state
            if action == "escalate":
                incident.assignee_class = (
                    IRTClass.B if new_state == IncidentState.ESCALATED_B else IRTClass.C)
                incident.ack_pending = True
                incident.sla_deadline = at + self.ack_sla_ms
                recipients, channels = self.policy[(incident.origin, incident.severity)]
                self.notifier.dispatch(incident.incident_id, incident.severity,
                                       frozenset({incident.assignee_class}),
                                       channels, at)
            if action in ("resolve", "dismiss"):
                incident.resolution_note = note
        self.ledger.append(actor_id, actor_class, ACTION_AUDIT[action],
                           incident.incident_id, at)
        return incident

    def _next_state(self, incident: Incident, action: str) -> Optional[IncidentState]:
        """The state the action moves to, None for audited in-place actions.
        Raises IllegalTransition when the action is not legal here."""
        if incident.state in TERMINAL_STATES:
            raise IllegalTransition(
                f"{incident.state.value} is terminal, cannot {action}")
        if action == "validate":
            if incident.state not in VALIDATE_STATES:
                raise IllegalTransition(f"cannot validate from {incident.state.value}")
            return None
        if action == "ack" and incident.state in ACK_IN_PLACE:
            return None
        table = TRANSITIONS[action]
        if incident.state not in table:
            raise IllegalTransition(
                f"cannot {action} from {incident.state.value}")
        return table[incident.state]

    def _authorize(self, incident: Incident, action: str, actor_class: IRTClass) -> None:
        if actor_class == IRTClass.C:
            raise UnauthorizedActor("class C is advisory and performs no transitions")
        if actor_class == IRTClass.B:
            return
        # class A
        if incident.state == IncidentState.ESCALATED_C:
            raise UnauthorizedActor("incident is at class C level")
        if action in ("resolve", "dismiss"):
            if (incident.origin == Origin.BDDFR
                    or incident.severity == Severity.CRITICAL
                    or incident.state != IncidentState.TRIAGED_A):
                raise UnauthorizedActor(
                    "class A closes only triaged SIEM incidents below Critical")

    def auto_escalate(self, now: int) -> list[Incident]:
        """SLA timer: every incident past its deadline without an
        acknowledgement escalates one level (A to B, B to C) with a fresh
        deadline. Idempotent within one SLA period."""
        escalated = []
        for incident in self.incidents.values():
            if incident.state in TERMINAL_STATES or not incident.ack_pending:
                continue
            if now <= incident.sla_deadline:
                continue
            if incident.state == IncidentState.NEW:
                incident.state = IncidentState.ESCALATED_B
                incident.assignee_class = IRTClass.B
            elif incident.state == IncidentState.ESCALATED_B:
                incident.state = IncidentState.ESCALATED_C
                incident.assignee_class = IRTClass.C
            else:
                continue  # already at C; nothing above
            incident.sla_deadline = now + self.ack_sla_ms
            self.ledger.append("sla-timer", IRTClass.A, AuditAction.ESCALATE,
                               incident.incident_id, now)
            _, channels = self.policy[(incident.origin, incident.severity)]
            self.notifier.dispatch(incident.incident_id, incident.severity,
                                   frozenset({incident.assignee_class}), channels, now)
            escalated.append(incident)
        return escalated

    # ---- queries -------------------------------------------------------------

    def _get(self, incident_id: str) -> Incident:
        if incident_id not in self.incidents:
            raise KeyError(incident_id)
        return self.incidents[incident_id]

    def get(self, incident_id: str) -> Optional[Incident]:
        return self.incidents.get(incident_id)

    def incident_for_alert(self, alert_id: str) -> Optional[Incident]:
        incident_id = self._alert_binding.get(alert_id)
        return self.incidents.get(incident_id) if incident_id else None

    def list_incidents(self) -> list[Incident]:
        return sorted(self.incidents.values(), key=lambda i: (i.opened_at, i.incident_id))

    def legal_actions(self, incident_id: str) -> list[str]:
        """Actions transition() would accept for some authorized actor."""
        incident = self._get(incident_id)
        if incident.state in TERMINAL_STATES:
            return []
        actions = []
        for action in ("ack", "validate", "dismiss", "escalate", "resolve"):
            try:
                self._next_state(incident, action)
            except IllegalTransition:
                continue
            actions.append(action)
        return actions

    def verify_audit_chain(self) -> Optional[int]:
        return self.ledger.verify()


def replay_ledger(entries: Iterable[AuditEntry]) -> dict[str, IncidentState]:
    """Reconstruct the final state of every incident from the audit chain."""
    states: dict[str, IncidentState] = {}
    for entry in entries:
        subject = entry.subject
        if entry.action == AuditAction.OPEN:
            states[subject] = IncidentState.NEW
        elif subject not in states:
            continue
        elif entry.action == AuditAction.ACK:
            if states[subject] == IncidentState.NEW:
                states[subject] = IncidentState.TRIAGED_A
        elif entry.action == AuditAction.ESCALATE:
            if states[subject] in (IncidentState.NEW, IncidentState.TRIAGED_A):
                states[subject] = IncidentState.ESCALATED_B
            elif states[subject] == IncidentState.ESCALATED_B:
                states[subject] = IncidentState.ESCALATED_C
        elif entry.action == AuditAction.RESOLVE:
            states[subject] = IncidentState.RESOLVED
        elif entry.action == AuditAction.DISMISS:
            states[subject] = IncidentState.DISMISSED
    return states
