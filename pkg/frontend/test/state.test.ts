// Round-trip behaviour of the store against a scripted gateway: optimistic
// apply, server reconciliation, rollback on 4xx, and the audit trail every
// UI action must leave (correct actor and class on each entry).

import { beforeEach, describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { ConsoleStore, optimisticResult } from "../src/state.js";
import { ScriptedGateway } from "./scripted_gateway.js";

let gateway: ScriptedGateway;
let api: ApiClient;
let store: ConsoleStore;

beforeEach(async () => {
  gateway = new ScriptedGateway();
  api = new ApiClient("http://gw", gateway.fetchImpl());
  store = new ConsoleStore(api);
  await api.login("ana.alvarez", "alpha-secret");
});

describe("triage actions through the store", () => {
  it("acks a new incident and reconciles to server state", async () => {
    const incident = gateway.seedIncident();
    await store.refresh();
    await store.select(incident.incident_id);
    const ok = await store.act("ack");
    expect(ok).toBe(true);
    expect(store.current.selected?.state).toBe("TriagedA");
    expect(store.current.selected?.ack_pending).toBe(false);
    expect(store.current.lastError).toBeNull();
  });

  it("records every UI action in the ledger with the actor and class", async () => {
    const incident = gateway.seedIncident();
    await store.select(incident.incident_id);
    await store.act("ack");
    await store.act("validate");
    await store.act("escalate");
    await store.act("resolve");
    expect(gateway.ledger.map((e) => e.action)).toEqual([
      "Ack", "Validate", "Escalate", "Resolve",
    ]);
    for (const entry of gateway.ledger) {
      expect(entry.actor_id).toBe("ana.alvarez");
      expect(entry.actor_class).toBe("A");
      expect(entry.subject).toBe(incident.incident_id);
    }
    // The incident view now carries the same audit trail.
    expect(store.current.selected?.audit.map((e) => e.action)).toEqual([
      "Ack", "Validate", "Escalate", "Resolve",
    ]);
  });

  it("refuses locally-illegal actions without calling the server", async () => {
    const incident = gateway.seedIncident(); // state New
    await store.select(incident.incident_id);
    const ok = await store.act("dismiss"); // must ack first
    expect(ok).toBe(false);
    expect(gateway.ledger).toEqual([]);
    expect(store.current.selected?.state).toBe("New");
    expect(store.current.lastError).toContain("not legal");
  });

  it("rolls back the optimistic state on a 409", async () => {
    const incident = gateway.seedIncident({ state: "TriagedA" });
    await store.select(incident.incident_id);
    gateway.failNextTransitionWith = 409;
    const ok = await store.act("resolve");
    expect(ok).toBe(false);
    expect(store.current.selected?.state).toBe("TriagedA");
    expect(store.current.lastError).toContain("illegal-transition");
    expect(gateway.ledger).toEqual([]); // nothing audited, nothing mutated
  });

  it("rolls back the optimistic state on a 403", async () => {
    const incident = gateway.seedIncident({ state: "TriagedA" });
    await store.select(incident.incident_id);
    gateway.failNextTransitionWith = 403;
    const ok = await store.act("dismiss");
    expect(ok).toBe(false);
    expect(store.current.selected?.state).toBe("TriagedA");
    expect(store.current.lastError).toContain("unauthorized");
  });

  it("shows the optimistic state before the server answers", async () => {
    const incident = gateway.seedIncident();
    await store.select(incident.incident_id);
    const pending = store.act("ack");
    expect(store.current.selected?.state).toBe("TriagedA"); // optimistic
    expect(store.current.pendingAction).toBe("ack");
    await pending;
    expect(store.current.pendingAction).toBeNull();
  });

  it("reconciles the queue on refresh after actions", async () => {
    const incident = gateway.seedIncident();
    await store.select(incident.incident_id);
    await store.act("ack");
    await store.refresh();
    const row = store.current.alerts.find((a) => a.incident_id === incident.incident_id);
    expect(row?.incident_state).toBe("TriagedA");
  });
});

describe("optimisticResult", () => {
  it("mirrors the engine's expected next states", () => {
    const base = new ScriptedGateway().seedIncident({ state: "TriagedA" });
    expect(optimisticResult(base, "escalate").state).toBe("EscalatedB");
    expect(optimisticResult(base, "resolve").state).toBe("Resolved");
    expect(optimisticResult(base, "dismiss").state).toBe("Dismissed");
    expect(optimisticResult({ ...base, state: "New" }, "ack").state).toBe("TriagedA");
    expect(optimisticResult({ ...base, state: "EscalatedB" }, "escalate").state)
      .toBe("EscalatedC");
  });

  it("updates the enabled-action set with the new state", () => {
    const base = new ScriptedGateway().seedIncident({ state: "TriagedA" });
    expect(optimisticResult(base, "resolve").legal_actions).toEqual([]);
  });
});
