import type { IncidentStateName, TriageAction } from "./types.js";

/**
 * State -> legal triage actions, mirroring the gateway's incident state
 * machine. The contract test pins this table to docs/state_transitions.json,
 * which the server-side suite in turn pins to the engine, so a drift on
 * either side fails a build.
 */
export const TRANSITION_TABLE: Record<IncidentStateName, TriageAction[]> = {
  New: ["ack"],
  TriagedA: ["dismiss", "escalate", "resolve", "validate"],
  EscalatedB: ["ack", "dismiss", "escalate", "resolve", "validate"],
  EscalatedC: ["ack", "dismiss", "resolve", "validate"],
  Resolved: [],
  Dismissed: [],
};

export const TERMINAL_STATES: IncidentStateName[] = ["Resolved", "Dismissed"];

/** Actions the console may enable for an incident in the given state. */
export function enabledActions(state: IncidentStateName): TriageAction[] {
  return [...(TRANSITION_TABLE[state] ?? [])];
}

export function isTerminal(state: IncidentStateName): boolean {
  return TERMINAL_STATES.includes(state);
}

/** Imaging requests are a class-B capability (technical/forensics lead). */
export function canRequestImages(irtClass: string | null): boolean {
  return irtClass === "B";
}
