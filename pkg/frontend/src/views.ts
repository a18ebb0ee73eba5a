import {
  escapeHtml,
  formatAge,
  formatRisk,
  formatTime,
  renderSubject,
  severityRank,
} from "./format.js";
import { canRequestImages, enabledActions, isTerminal } from "./transitions.js";
import type {
  AlertView,
  DetectionMetricsView,
  EvidenceEnvelope,
  IncidentView,
  QueueSortKey,
  TriageAction,
} from "./types.js";

const ACTION_LABELS: Record<TriageAction, string> = {
  ack: "Acknowledge",
  validate: "Validate",
  dismiss: "Dismiss",
  escalate: "Escalate",
  resolve: "Resolve",
};

export function sortAlerts(alerts: AlertView[], sortKey: QueueSortKey): AlertView[] {
  const sorted = [...alerts];
  if (sortKey === "severity") {
    sorted.sort((a, b) => severityRank(b.severity) - severityRank(a.severity)
      || (b.risk_score ?? 0) - (a.risk_score ?? 0)
      || a.created_at - b.created_at);
  } else if (sortKey === "age") {
    sorted.sort((a, b) => a.created_at - b.created_at);
  } else {
    sorted.sort((a, b) => (b.risk_score ?? 0) - (a.risk_score ?? 0)
      || severityRank(b.severity) - severityRank(a.severity)
      || a.created_at - b.created_at);
  }
  return sorted;
}

export function renderQueue(alerts: AlertView[], nowMs: number,
                            sortKey: QueueSortKey = "risk"): string {
  if (alerts.length === 0) {
    return `<p class="empty">No alerts.</p>`;
  }
  const header = (key: QueueSortKey, label: string) =>
    `<th class="sortable ${sortKey === key ? "sorted" : ""}" data-sort="${key}">${label}</th>`;
  const rows = sortAlerts(alerts, sortKey)
    .map((alert) => {
      // Behavioral-engine alerts are the high-priority lane.
      const flag = alert.origin === "BdDFR" ? ` <span class="flag">priority</span>` : "";
      return `<tr class="alert-row sev-${alert.severity.toLowerCase()}" data-incident="${escapeHtml(alert.incident_id ?? "")}">
        <td><span class="badge origin-${alert.origin.toLowerCase()}">${alert.origin}</span>${flag}</td>
        <td class="sev">${alert.severity}</td>
        <td>${escapeHtml(alert.rule_or_feature)}</td>
        <td class="mono">${escapeHtml(renderSubject(alert.entity_id))}</td>
        <td class="num">${formatRisk(alert.risk_score)}</td>
        <td>${formatAge(nowMs, alert.created_at)}</td>
        <td class="mono">${escapeHtml(alert.incident_state ?? "-")}</td>
      </tr>`;
    });
  return `<table class="queue">
    <thead><tr><th>Origin</th>${header("severity", "Severity")}<th>Signal</th><th>Entity</th>${header("risk", "Risk")}${header("age", "Age")}<th>Incident</th></tr></thead>
    <tbody>${rows.join("")}</tbody>
  </table>`;
}

export function renderMetrics(runs: Record<string, DetectionMetricsView>): string {
  const runIds = Object.keys(runs);
  if (runIds.length === 0) {
    return `<p class="empty">No scenario runs yet.</p>`;
  }
  const latest = runIds[runIds.length - 1];
  const m = runs[latest];
  const recall = m.recall === null ? "n/a (0 injected)" : m.recall.toFixed(2);
  const precision = m.precision === null ? "n/a" : m.precision.toFixed(2);
  return `<div class="metrics">
    <p class="mono run-id">${escapeHtml(latest)}</p>
    <dl>
      <dt>Injected / detected</dt><dd>${m.injected} / ${m.detected}</dd>
      <dt>Recall</dt><dd>${recall}</dd>
      <dt>Precision</dt><dd>${precision}</dd>
      <dt>False positives</dt><dd>${m.false_positives} (${(m.false_positive_rate * 100).toFixed(2)}% of ${m.profiled_events} profiled events)</dd>
      <dt>Alerts</dt><dd>${m.alerts_total} total, ${m.alerts_bddfr} behavioral, ${m.alerts_siem} rule-based</dd>
    </dl>
  </div>`;
}

export function renderIncident(incident: IncidentView, irtClass: string | null,
                               pendingAction: string | null): string {
  const actions = enabledActions(incident.state)
    .map((action) => {
      const disabled = pendingAction !== null ? "disabled" : "";
      return `<button class="action" data-action="${action}" ${disabled}>${ACTION_LABELS[action]}</button>`;
    })
    .join(" ");
  const terminalNote = isTerminal(incident.state)
    ? `<p class="terminal">Incident is closed; no further actions.</p>` : "";
  const audit = incident.audit
    .map((entry) => `<tr>
        <td class="num">${entry.seq}</td>
        <td>${formatTime(entry.at)}</td>
        <td>${escapeHtml(entry.actor_id)} (${escapeHtml(entry.actor_class)})</td>
        <td>${escapeHtml(entry.action)}</td>
        <td class="mono hash">${escapeHtml(entry.entry_hash.slice(0, 12))}…</td>
      </tr>`)
    .join("");
  const evidence = incident.evidence_refs
    .map((ref) => `<li><a href="#" class="evidence-link mono" data-record="${escapeHtml(ref)}">${escapeHtml(ref)}</a></li>`)
    .join("");
  const imaging = canRequestImages(irtClass)
    ? `<form class="imaging-form">
         <label>Group
           <select name="group"><option>DFR1</option><option>DFR2</option></select>
         </label>
         <button type="submit">Request forensic image</button>
       </form>`
    : "";
  return `<section class="incident">
    <h2 class="mono">${escapeHtml(incident.incident_id)}</h2>
    <dl>
      <dt>State</dt><dd class="state-${incident.state.toLowerCase()}">${incident.state}${incident.validated ? " (validated)" : ""}</dd>
      <dt>Origin</dt><dd>${incident.origin}</dd>
      <dt>Severity</dt><dd>${incident.severity}</dd>
      <dt>Assignee</dt><dd>Class ${escapeHtml(incident.assignee_class)}</dd>
      <dt>Opened</dt><dd>${formatTime(incident.opened_at)}</dd>
      <dt>Ack deadline</dt><dd>${formatTime(incident.sla_deadline)}${incident.ack_pending ? " (pending)" : ""}</dd>
    </dl>
    <div class="actions">${actions}</div>
    ${terminalNote}
    ${imaging}
    <h3>Evidence</h3>
    <ul class="evidence">${evidence || "<li>none</li>"}</ul>
    <h3>Audit trail</h3>
    <table class="audit">
      <thead><tr><th>#</th><th>At</th><th>Actor</th><th>Action</th><th>Hash</th></tr></thead>
      <tbody>${audit}</tbody>
    </table>
  </section>`;
}

/**
 * Evidence is rendered read-only: metadata plus identity fields through the
 * token guard; payload bytes are never decoded or displayed here (download
 * goes through export tooling, not the console).
 */
export function renderEvidence(envelope: EvidenceEnvelope): string {
  const tags = envelope.scenario_tags.map((t) => escapeHtml(t)).join(", ") || "-";
  return `<section class="evidence-detail">
    <h3 class="mono">${escapeHtml(envelope.record_id)}</h3>
    <dl>
      <dt>Kind</dt><dd>${escapeHtml(envelope.kind)}</dd>
      <dt>Class</dt><dd>${escapeHtml(envelope.data_class)}</dd>
      <dt>Zone</dt><dd>${escapeHtml(envelope.source_zone)}</dd>
      <dt>Device</dt><dd>${escapeHtml(envelope.source_device)}</dd>
      <dt>Entity</dt><dd class="mono">${escapeHtml(renderSubject(envelope.entity_id))}</dd>
      <dt>Subject</dt><dd class="mono">${escapeHtml(renderSubject(envelope.subject_id))}</dd>
      <dt>Observed</dt><dd>${formatTime(envelope.occurred_at)}</dd>
      <dt>Canonical</dt><dd>${envelope.canonical_at === null ? "-" : formatTime(envelope.canonical_at)}</dd>
      <dt>Content hash</dt><dd class="mono hash">${escapeHtml(envelope.content_hash)}</dd>
      <dt>Scenario tags</dt><dd>${tags}</dd>
    </dl>
  </section>`;
}
