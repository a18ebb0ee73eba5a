// Display helpers and the client-side PII guard.

const TOKEN_PATTERN = /^pn_[0-9a-f]{32}$/;

/** Server-issued pseudonym tokens are the only identity form the UI shows. */
export function isPseudonymToken(value: string): boolean {
  return TOKEN_PATTERN.test(value);
}

/**
 * Render an identity field. The server guarantees sanitisation; the console
 * still refuses to print anything that is not in token format, so a server
 * regression can never leak an identity through this UI.
 */
export function renderSubject(value: string | null | undefined): string {
  if (value === null || value === undefined || value === "") {
    return "-";
  }
  return isPseudonymToken(value) ? shortToken(value) : "[redacted: untokenized]";
}

export function shortToken(token: string): string {
  return token.length > 14 ? `${token.slice(0, 11)}…` : token;
}

export function formatTime(epochMs: number): string {
  return new Date(epochMs).toISOString().replace("T", " ").slice(0, 19);
}

export function formatAge(nowMs: number, epochMs: number): string {
  const seconds = Math.max(0, Math.floor((nowMs - epochMs) / 1000));
  if (seconds < 60) return `${seconds}s`;
  if (seconds < 3600) return `${Math.floor(seconds / 60)}m`;
  if (seconds < 86_400) return `${Math.floor(seconds / 3600)}h`;
  return `${Math.floor(seconds / 86_400)}d`;
}

export function severityRank(severity: string): number {
  return { Low: 1, Medium: 2, High: 3, Critical: 4 }[severity] ?? 0;
}

export function formatRisk(risk: number | null): string {
  if (risk === null) return "-";
  return risk >= 1000 ? risk.toExponential(1) : risk.toFixed(2);
}

/** Escape untrusted text for interpolation into HTML. */
export function escapeHtml(value: string): string {
  return value
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;")
    .replace(/'/g, "&#39;");
}
