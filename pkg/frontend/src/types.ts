// Wire types for the gateway's JSON API.

export type IncidentStateName =
  | "New"
  | "TriagedA"
  | "EscalatedB"
  | "EscalatedC"
  | "Resolved"
  | "Dismissed";

export type TriageAction = "ack" | "validate" | "dismiss" | "escalate" | "resolve";

export type SeverityName = "Low" | "Medium" | "High" | "Critical";

export type OriginName = "SIEM" | "BdDFR";

export interface AlertView {
  alert_id: string;
  origin: OriginName;
  rule_or_feature: string;
  severity: SeverityName;
  entity_id: string;
  window: [number, number];
  evidence_refs: string[];
  risk_score: number | null;
  created_at: number;
  incident_id: string | null;
  incident_state: IncidentStateName | null;
}

export interface AuditEntryView {
  seq: number;
  actor_id: string;
  actor_class: string;
  action: string;
  subject: string;
  at: number;
  prev_hash: string;
  entry_hash: string;
}

export interface IncidentView {
  incident_id: string;
  alert_refs: string[];
  origin: OriginName;
  severity: SeverityName;
  state: IncidentStateName;
  assignee_class: string;
  opened_at: number;
  sla_deadline: number;
  ack_pending: boolean;
  validated: boolean;
  resolution_note: string | null;
  audit: AuditEntryView[];
  legal_actions: TriageAction[];
  evidence_refs: string[];
}

export interface SessionInfo {
  session_id: string;
  principal_id: string;
  irt_class: string | null;
  admin: boolean;
  expires_at: number;
  remote: boolean;
  ledger_seq: number | null;
}

export interface EvidenceEnvelope {
  record_id: string;
  source_zone: string;
  source_device: string;
  entity_id: string;
  subject_id: string | null;
  kind: string;
  data_class: string;
  occurred_at: number;
  canonical_at: number | null;
  content_hash: string;
  pii_fields: string[];
  scenario_tags: string[];
  original_hash: string | null;
  payload?: string;
  payload_ref?: string;
}

export interface ImageView {
  image_id: string;
  source_snapshot: string;
  included_objects: string[];
  object_hashes: Record<string, string>;
  image_hash: string;
  acquired_at: number;
  acquired_by: string;
  custody_seq: number;
  verified?: boolean;
  mismatched_objects?: string[];
}

export interface DetectionMetricsView {
  injected: number;
  detected: number;
  time_to_detect_ms: (number | null)[];
  false_positives: number;
  precision: number | null;
  recall: number | null;
  profiled_events: number;
  false_positive_rate: number;
  alerts_total: number;
  alerts_bddfr: number;
  alerts_siem: number;
}

export interface ApiError {
  error: string;
  detail?: string;
}

export type QueueSortKey = "risk" | "severity" | "age";
