import { describe, expect, it } from "vitest";

import { renderMetrics, renderQueue, sortAlerts } from "../src/views.js";
import type { AlertView, DetectionMetricsView } from "../src/types.js";

function alert(overrides: Partial<AlertView>): AlertView {
  return {
    alert_id: "al",
    origin: "SIEM",
    rule_or_feature: "r",
    severity: "Low",
    entity_id: "pn_" + "ab".repeat(16),
    window: [0, 1],
    evidence_refs: ["ev"],
    risk_score: null,
    created_at: 0,
    incident_id: "inc",
    incident_state: "New",
    ...overrides,
  };
}

const QUEUE = [
  alert({ alert_id: "a", severity: "Low", risk_score: 9.0, created_at: 300 }),
  alert({ alert_id: "b", severity: "Critical", risk_score: null, created_at: 200 }),
  alert({ alert_id: "c", severity: "High", risk_score: 4.0, created_at: 100 }),
];

describe("queue sorting", () => {
  it("sorts by risk by default", () => {
    expect(sortAlerts(QUEUE, "risk").map((a) => a.alert_id)).toEqual(["a", "c", "b"]);
  });

  it("sorts by severity", () => {
    expect(sortAlerts(QUEUE, "severity").map((a) => a.alert_id)).toEqual(["b", "c", "a"]);
  });

  it("sorts by age (oldest first)", () => {
    expect(sortAlerts(QUEUE, "age").map((a) => a.alert_id)).toEqual(["c", "b", "a"]);
  });

  it("marks the active sort header", () => {
    const html = renderQueue(QUEUE, 1000, "severity");
    expect(html).toMatch(/sortable sorted" data-sort="severity"/);
  });

  it("flags behavioral-origin alerts as priority", () => {
    const html = renderQueue([alert({ origin: "BdDFR", risk_score: 5 })], 1000);
    expect(html).toContain("priority");
  });
});

describe("metrics panel", () => {
  const metrics: DetectionMetricsView = {
    injected: 3,
    detected: 3,
    time_to_detect_ms: [0, 0, 300000],
    false_positives: 2,
    precision: 0.6,
    recall: 1.0,
    profiled_events: 4000,
    false_positive_rate: 0.0005,
    alerts_total: 5,
    alerts_bddfr: 5,
    alerts_siem: 0,
  };

  it("renders the latest run", () => {
    const html = renderMetrics({ "run-letby-1-1": metrics });
    expect(html).toContain("run-letby-1-1");
    expect(html).toContain("3 / 3");
    expect(html).toContain("1.00");
    expect(html).toContain("0.05%");
  });

  it("handles the empty case and undefined recall", () => {
    expect(renderMetrics({})).toContain("No scenario runs");
    const clean = renderMetrics({ r: { ...metrics, injected: 0, recall: null } });
    expect(clean).toContain("n/a (0 injected)");
  });
});
