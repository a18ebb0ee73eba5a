import { ApiClient, GatewayError } from "./api.js";
import { enabledActions } from "./transitions.js";
import type { AlertView, IncidentView, TriageAction } from "./types.js";

export interface ConsoleState {
  alerts: AlertView[];
  selected: IncidentView | null;
  lastError: string | null;
  pendingAction: string | null;
}

type Listener = (state: ConsoleState) => void;

/**
 * Client-side store. Triage actions apply optimistically (the expected next
 * state renders immediately), then reconcile to whatever the server
 * returned; a 4xx rolls the incident back to its previous snapshot and
 * surfaces the error. Server state is always authoritative.
 */
export class ConsoleStore {
  private state: ConsoleState = {
    alerts: [],
    selected: null,
    lastError: null,
    pendingAction: null,
  };
  private listeners: Listener[] = [];

  constructor(private readonly api: ApiClient) {}

  get current(): ConsoleState {
    return this.state;
  }

  subscribe(listener: Listener): () => void {
    this.listeners.push(listener);
    return () => {
      this.listeners = this.listeners.filter((l) => l !== listener);
    };
  }

  private update(patch: Partial<ConsoleState>): void {
    this.state = { ...this.state, ...patch };
    for (const listener of this.listeners) {
      listener(this.state);
    }
  }

  /** Poll the alert queue; reconciles the selected incident too. */
  async refresh(): Promise<void> {
    const alerts = await this.api.alerts();
    const patch: Partial<ConsoleState> = { alerts };
    const selected = this.state.selected;
    if (selected && this.state.pendingAction === null) {
      patch.selected = await this.api.incident(selected.incident_id);
    }
    this.update(patch);
  }

  async select(incidentId: string): Promise<void> {
    this.update({ selected: await this.api.incident(incidentId), lastError: null });
  }

  deselect(): void {
    this.update({ selected: null, lastError: null });
  }

  /**
   * Optimistic transition: apply the expected state locally, POST, then
   * reconcile to the server's answer. On 4xx the previous snapshot is
   * restored and the error is surfaced; local state never survives a
   * rejected mutation.
   */
  async act(action: TriageAction, note?: string): Promise<boolean> {
    const before = this.state.selected;
    if (!before) return false;
    if (!enabledActions(before.state).includes(action)) {
      this.update({ lastError: `${action} is not legal from ${before.state}` });
      return false;
    }
    this.update({
      selected: optimisticResult(before, action),
      pendingAction: action,
      lastError: null,
    });
    try {
      const confirmed = await this.api.transition(before.incident_id, action, note);
      this.update({ selected: confirmed, pendingAction: null });
      return true;
    } catch (error) {
      // Roll back; the server refused or failed.
      const message = error instanceof GatewayError
        ? `${error.body.error}${error.body.detail ? `: ${error.body.detail}` : ""}`
        : String(error);
      this.update({ selected: before, pendingAction: null, lastError: message });
      return false;
    }
  }
}

/** The state the engine will move to if it accepts the action. */
export function optimisticResult(incident: IncidentView, action: TriageAction): IncidentView {
  const next = { ...incident, legal_actions: [...incident.legal_actions] };
  switch (action) {
    case "ack":
      if (incident.state === "New") next.state = "TriagedA";
      next.ack_pending = false;
      break;
    case "validate":
      next.validated = true;
      break;
    case "escalate":
      next.state = incident.state === "TriagedA" ? "EscalatedB" : "EscalatedC";
      next.assignee_class = next.state === "EscalatedB" ? "B" : "C";
      next.ack_pending = true;
      break;
    case "resolve":
      next.state = "Resolved";
      break;
    case "dismiss":
      next.state = "Dismissed";
      break;
  }
  next.legal_actions = enabledActions(next.state);
  return next;
}
