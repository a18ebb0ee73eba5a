import { ApiClient, GatewayError } from "./api.js";
import { escapeHtml } from "./format.js";
import { ConsoleStore } from "./state.js";
import { TRANSITION_TABLE } from "./transitions.js";
import { renderEvidence, renderIncident, renderMetrics, renderQueue } from "./views.js";
import type { QueueSortKey, SessionInfo, TriageAction } from "./types.js";

interface ConsoleConfig {
  gatewayBaseUrl: string;
  pollIntervalMs: number;
}

const DEFAULT_CONFIG: ConsoleConfig = {
  gatewayBaseUrl: "",
  pollIntervalMs: 2000,
};

async function loadConfig(): Promise<ConsoleConfig> {
  try {
    const response = await fetch("./console-config.json");
    if (!response.ok) return DEFAULT_CONFIG;
    return { ...DEFAULT_CONFIG, ...(await response.json()) };
  } catch {
    return DEFAULT_CONFIG;
  }
}

function el(id: string): HTMLElement {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node;
}

async function verifyServerContract(api: ApiClient): Promise<string | null> {
  // Defense in depth on top of the build-time contract test: refuse to
  // operate against a gateway whose state machine drifted from ours.
  const doc = await api.transitionTable();
  for (const [state, actions] of Object.entries(TRANSITION_TABLE)) {
    const server = [...(doc.transitions[state] ?? [])].sort();
    if (JSON.stringify(server) !== JSON.stringify([...actions].sort())) {
      return `state table mismatch for ${state}: server ${server}, console ${actions}`;
    }
  }
  return null;
}

async function start(): Promise<void> {
  const config = await loadConfig();
  const api = new ApiClient(config.gatewayBaseUrl);
  const store = new ConsoleStore(api);
  let session: SessionInfo | null = null;

  const loginForm = el("login-form") as HTMLFormElement;
  const loginError = el("login-error");
  const shell = el("console-shell");
  const badge = el("identity-badge");
  const queueNode = el("alert-queue");
  const detailNode = el("incident-detail");
  const errorNode = el("action-error");
  const evidenceNode = el("evidence-panel");
  const metricsNode = el("metrics-panel");
  let sortKey: QueueSortKey = "risk";

  function renderAll(): void {
    const state = store.current;
    queueNode.innerHTML = renderQueue(state.alerts, Date.now(), sortKey);
    detailNode.innerHTML = state.selected
      ? renderIncident(state.selected, session?.irt_class ?? null, state.pendingAction)
      : `<p class="empty">Select an alert to open its incident.</p>`;
    errorNode.textContent = state.lastError ?? "";
    bindQueue();
    bindActions();
  }

  function refreshMetrics(): void {
    void api.metricsRuns().then(
      (doc) => { metricsNode.innerHTML = renderMetrics(doc.runs); },
      () => undefined,
    );
  }

  function bindQueue(): void {
    for (const row of queueNode.querySelectorAll<HTMLElement>(".alert-row")) {
      row.addEventListener("click", () => {
        const incidentId = row.dataset.incident;
        if (incidentId) void store.select(incidentId).then(renderAll);
      });
    }
    for (const head of queueNode.querySelectorAll<HTMLElement>("th.sortable")) {
      head.addEventListener("click", () => {
        sortKey = (head.dataset.sort as QueueSortKey) ?? "risk";
        renderAll();
      });
    }
  }

  function bindActions(): void {
    for (const button of detailNode.querySelectorAll<HTMLButtonElement>(".action")) {
      button.addEventListener("click", () => {
        const action = button.dataset.action as TriageAction;
        renderAll(); // show optimistic state immediately
        void store.act(action).then(renderAll);
      });
    }
    for (const link of detailNode.querySelectorAll<HTMLAnchorElement>(".evidence-link")) {
      link.addEventListener("click", (event) => {
        event.preventDefault();
        const recordId = link.dataset.record;
        if (!recordId) return;
        void api.evidence(recordId).then(
          (doc) => { evidenceNode.innerHTML = renderEvidence(doc.record); },
          (error) => { evidenceNode.innerHTML = `<p class="error">${escapeHtml(String(error))}</p>`; },
        );
      });
    }
    const imagingForm = detailNode.querySelector<HTMLFormElement>(".imaging-form");
    imagingForm?.addEventListener("submit", (event) => {
      event.preventDefault();
      const group = (imagingForm.elements.namedItem("group") as HTMLSelectElement).value;
      void api.requestImage(group).then(
        (image) => {
          evidenceNode.innerHTML =
            `<p class="ok">Image <span class="mono">${escapeHtml(image.image_id)}</span> acquired`
            + ` (custody seq ${image.custody_seq}).</p>`;
        },
        (error) => {
          const message = error instanceof GatewayError ? error.message : String(error);
          evidenceNode.innerHTML = `<p class="error">${escapeHtml(message)}</p>`;
        },
      );
    });
  }

  loginForm.addEventListener("submit", (event) => {
    event.preventDefault();
    const principal = (loginForm.elements.namedItem("principal") as HTMLInputElement).value;
    const secret = (loginForm.elements.namedItem("secret") as HTMLInputElement).value;
    void api.login(principal, secret).then(
      async (info) => {
        session = info;
        const drift = await verifyServerContract(api);
        if (drift) {
          loginError.textContent = drift;
          api.logout();
          return;
        }
        loginForm.parentElement!.classList.add("hidden");
        shell.classList.remove("hidden");
        badge.textContent = `${info.principal_id} — class ${info.irt_class ?? "external"}`;
        await store.refresh();
        renderAll();
        refreshMetrics();
        window.setInterval(() => {
          void store.refresh().then(renderAll).catch(() => undefined);
          refreshMetrics();
        }, config.pollIntervalMs);
      },
      () => {
        loginError.textContent = "Login failed: check principal and secret.";
      },
    );
  });

  store.subscribe(() => renderAll());
}

void start();
