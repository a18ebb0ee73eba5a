// In-memory stand-in for the gateway, faithful to its wire contract:
// legality is checked before authorization (409 beats 403), successful
// mutations append a ledger entry carrying the session's actor and class,
// and responses use the same JSON shapes as the real server.

import { TRANSITION_TABLE } from "../src/transitions.js";
import type { FetchLike } from "../src/api.js";
import type { AlertView, IncidentStateName, IncidentView, TriageAction } from "../src/types.js";

export interface ScriptedLedgerEntry {
  seq: number;
  actor_id: string;
  actor_class: string;
  action: string;
  subject: string;
  at: number;
  prev_hash: string;
  entry_hash: string;
}

const NEXT_STATE: Record<TriageAction, Partial<Record<IncidentStateName, IncidentStateName>>> = {
  ack: { New: "TriagedA", EscalatedB: "EscalatedB", EscalatedC: "EscalatedC" },
  validate: { TriagedA: "TriagedA", EscalatedB: "EscalatedB", EscalatedC: "EscalatedC" },
  escalate: { TriagedA: "EscalatedB", EscalatedB: "EscalatedC" },
  resolve: { TriagedA: "Resolved", EscalatedB: "Resolved", EscalatedC: "Resolved" },
  dismiss: { TriagedA: "Dismissed", EscalatedB: "Dismissed", EscalatedC: "Dismissed" },
};

export class ScriptedGateway {
  ledger: ScriptedLedgerEntry[] = [];
  incidents = new Map<string, IncidentView>();
  alertsList: AlertView[] = [];
  principal = { id: "ana.alvarez", irtClass: "A", secret: "alpha-secret" };
  failNextTransitionWith: number | null = null;

  seedIncident(partial: Partial<IncidentView> = {}): IncidentView {
    const incident: IncidentView = {
      incident_id: partial.incident_id ?? `inc_${this.incidents.size + 1}`,
      alert_refs: partial.alert_refs ?? ["al_seeded"],
      origin: partial.origin ?? "SIEM",
      severity: partial.severity ?? "Medium",
      state: partial.state ?? "New",
      assignee_class: partial.assignee_class ?? "A",
      opened_at: partial.opened_at ?? 1_000,
      sla_deadline: partial.sla_deadline ?? 1_800_000,
      ack_pending: partial.ack_pending ?? true,
      validated: partial.validated ?? false,
      resolution_note: null,
      audit: [],
      legal_actions: TRANSITION_TABLE[partial.state ?? "New"],
      evidence_refs: partial.evidence_refs ?? ["ev-1"],
    };
    this.incidents.set(incident.incident_id, incident);
    this.alertsList.push({
      alert_id: incident.alert_refs[0],
      origin: incident.origin,
      rule_or_feature: "failed-login-burst",
      severity: incident.severity,
      entity_id: "pn_" + "ab12".repeat(8),
      window: [0, 60_000],
      evidence_refs: incident.evidence_refs,
      risk_score: incident.origin === "BdDFR" ? 4.5 : null,
      created_at: incident.opened_at,
      incident_id: incident.incident_id,
      incident_state: incident.state,
    });
    return incident;
  }

  private appendLedger(action: string, subject: string): void {
    this.ledger.push({
      seq: this.ledger.length,
      actor_id: this.principal.id,
      actor_class: this.principal.irtClass,
      action,
      subject,
      at: 10_000 + this.ledger.length,
      prev_hash: "0".repeat(64),
      entry_hash: "f".repeat(64),
    });
  }

  private transition(incidentId: string, action: TriageAction): [number, unknown] {
    const incident = this.incidents.get(incidentId);
    if (!incident) return [404, { error: "unknown-incident" }];
    if (["Resolved", "Dismissed"].includes(incident.state)) {
      return [409, { error: "illegal-transition", detail: "terminal state" }];
    }
    const next = NEXT_STATE[action]?.[incident.state];
    if (next === undefined) {
      return [409, { error: "illegal-transition", detail: `${action} from ${incident.state}` }];
    }
    if (this.failNextTransitionWith !== null) {
      const status = this.failNextTransitionWith;
      this.failNextTransitionWith = null;
      return [status, { error: status === 403 ? "unauthorized" : "illegal-transition" }];
    }
    if (this.principal.irtClass === "C") {
      return [403, { error: "unauthorized", detail: "class C is advisory" }];
    }
    incident.state = next;
    if (action === "ack") incident.ack_pending = false;
    if (action === "validate") incident.validated = true;
    if (action === "escalate") {
      incident.assignee_class = next === "EscalatedB" ? "B" : "C";
      incident.ack_pending = true;
    }
    incident.legal_actions = TRANSITION_TABLE[incident.state];
    const auditName = action.charAt(0).toUpperCase() + action.slice(1);
    this.appendLedger(auditName, incident.incident_id);
    incident.audit = this.ledger
      .filter((entry) => entry.subject === incident.incident_id)
      .map((entry) => ({ ...entry }));
    const row = this.alertsList.find((a) => a.incident_id === incidentId);
    if (row) row.incident_state = incident.state;
    return [200, incident];
  }

  fetchImpl(): FetchLike {
    return async (url, init) => {
      const method = init?.method ?? "GET";
      const path = url.replace(/^https?:\/\/[^/]+/, "");
      const body = init?.body ? JSON.parse(String(init.body)) : {};
      const respond = (status: number, doc: unknown): Response =>
        new Response(JSON.stringify(doc), {
          status,
          headers: { "Content-Type": "application/json" },
        });

      if (method === "POST" && path === "/auth") {
        if (body.principal_id !== this.principal.id || body.secret !== this.principal.secret) {
          return respond(401, { error: "invalid-credentials" });
        }
        return respond(200, {
          session_id: "scripted-session",
          principal_id: this.principal.id,
          irt_class: this.principal.irtClass,
          admin: false,
          expires_at: 9e15,
          remote: false,
          ledger_seq: null,
        });
      }
      const authorized = init?.headers
        && (init.headers as Record<string, string>)["Authorization"] === "Bearer scripted-session";
      if (path === "/meta/transitions") {
        return respond(200, { transitions: TRANSITION_TABLE });
      }
      if (!authorized) {
        return respond(401, { error: "missing-or-expired-session" });
      }
      if (method === "GET" && path.startsWith("/alerts")) {
        return respond(200, { alerts: this.alertsList.map((a) => ({ ...a })) });
      }
      const act = path.match(/^\/incidents\/([^/]+)\/(ack|validate|dismiss|escalate|resolve)$/);
      if (method === "POST" && act) {
        const [status, doc] = this.transition(act[1], act[2] as TriageAction);
        return respond(status, doc);
      }
      const one = path.match(/^\/incidents\/([^/]+)$/);
      if (method === "GET" && one) {
        const incident = this.incidents.get(one[1]);
        return incident
          ? respond(200, incident)
          : respond(404, { error: "unknown-incident" });
      }
      return respond(404, { error: "unknown-endpoint" });
    };
  }
}
