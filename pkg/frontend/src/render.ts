/**
 * Pure HTML renderers for engine responses.
 *
 * Every number shown comes straight from a response field; the only local
 * arithmetic is layout (bar widths as percentages of response values).
 */

import type {
  EvidenceItem,
  ExplainResponse,
  L1Decision,
  L2Decision,
  LatencyMap,
  QueryResponse,
} from "./types.js";

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;")
    .replace(/'/g, "&#39;");
}

const ROUTE_COLORS: Record<string, string> = {
  general: "#7f8c8d",
  keyword: "#2980b9",
  sql: "#8e44ad",
  semantic: "#27ae60",
};

/** Stage rows appear in engine execution order; absent stages are omitted. */
const STAGE_ORDER = [
  "l1_route",
  "keyword_search",
  "sql_generate",
  "sql_execute",
  "semantic_search",
  "l2_route",
  "llm_generate",
  "total",
];

export function renderRouteBadge(route: L1Decision): string {
  const color = ROUTE_COLORS[route.path] ?? "#333";
  return (
    `<span class="route-badge route-${route.path}" style="background:${color}">` +
    `${escapeHtml(route.path)}</span>`
  );
}

export function renderPatternChips(route: L1Decision): string {
  if (route.matched_patterns.length === 0) {
    return '<span class="chips-empty">no signals matched</span>';
  }
  const chips = route.matched_patterns
    .map((p) => `<span class="chip chip-${chipFamily(p)}">${escapeHtml(p)}</span>`)
    .join("");
  const guard = `<span class="chip chip-guard ${route.p7_passed ? "chip-on" : "chip-off"}">P7 ${
    route.p7_passed ? "pass" : "block"
  }</span>`;
  return chips + guard;
}

function chipFamily(patternId: string): string {
  if (patternId.startsWith("sql_")) return "sql";
  if (patternId.startsWith("ev_")) return "event";
  return "keyword";
}

export function renderScores(route: L1Decision): string {
  const row = (label: string, value: number) =>
    `<div class="score-row"><span>${label}</span><code>${value.toFixed(2)}</code></div>`;
  const term = route.extracted_search_term
    ? `<div class="score-row"><span>term</span><code>${escapeHtml(route.extracted_search_term)}</code></div>`
    : "";
  return (
    '<div class="l1-scores">' +
    row("sql", route.sql_score) +
    row("keyword", route.keyword_score) +
    row("event", route.event_score) +
    term +
    "</div>"
  );
}

/**
 * Feature bars against the 0.25 per-feature cap, plus a total bar against
 * the 0.5 tier threshold marker.
 */
export function renderL2Bars(l2: L2Decision | null): string {
  if (!l2) return '<div class="l2-panel l2-empty">no complexity score (bypass path)</div>';
  const features: Array<[string, number]> = [
    ["s_len", l2.s_len],
    ["s_agg", l2.s_agg],
    ["s_temp", l2.s_temp],
    ["s_ent", l2.s_ent],
  ];
  const bars = features
    .map(([name, value]) => {
      const pct = Math.min(100, (value / 0.25) * 100);
      return (
        `<div class="l2-row" data-feature="${name}" data-value="${value}">` +
        `<span class="l2-name">${name}</span>` +
        `<div class="l2-track"><div class="l2-fill" style="width:${pct.toFixed(1)}%"></div></div>` +
        `<code>${value.toFixed(5)}</code></div>`
      );
    })
    .join("");
  const totalPct = Math.min(100, l2.total * 100);
  return (
    `<div class="l2-panel" data-tier="${l2.tier}">` +
    bars +
    `<div class="l2-row l2-total" data-value="${l2.total}">` +
    `<span class="l2-name">total</span>` +
    `<div class="l2-track"><div class="l2-fill" style="width:${totalPct.toFixed(1)}%"></div>` +
    `<div class="l2-threshold" style="left:50%"></div></div>` +
    `<code>${l2.total.toFixed(5)}</code></div>` +
    `<div class="l2-tier">tier: <strong>${l2.tier}</strong></div>` +
    "</div>"
  );
}

export function renderEvidence(evidence: EvidenceItem[]): string {
  if (evidence.length === 0) return '<div class="evidence evidence-empty">no evidence</div>';
  const items = evidence
    .map(
      (e) =>
        `<li class="evidence-item"><code class="evidence-ref">${escapeHtml(e.ref)}</code>` +
        `<span class="evidence-score">${e.score.toFixed(6)}</span>` +
        `<pre class="evidence-text">${escapeHtml(e.text)}</pre></li>`,
    )
    .join("");
  return `<ol class="evidence">${items}</ol>`;
}

/**
 * Horizontal waterfall: one row per recorded stage in execution order,
 * bar width proportional to the stage's share of the total stage.
 */
export function renderLatencyWaterfall(latencies: LatencyMap): string {
  const present = STAGE_ORDER.filter((s) => s in latencies);
  for (const stage of Object.keys(latencies)) {
    if (!present.includes(stage)) present.push(stage);
  }
  if (present.length === 0) return '<div class="waterfall waterfall-empty">no stages recorded</div>';
  const total = latencies["total"] ?? Math.max(...present.map((s) => latencies[s]));
  let offset = 0;
  const rows = present.map((stage) => {
    const seconds = latencies[stage];
    const widthPct = total > 0 ? Math.max(0.5, (seconds / total) * 100) : 0.5;
    const leftPct = stage === "total" ? 0 : offset;
    if (stage !== "total") offset += total > 0 ? (seconds / total) * 100 : 0;
    return (
      `<div class="wf-row" data-stage="${stage}">` +
      `<span class="wf-name">${escapeHtml(stage)}</span>` +
      `<div class="wf-track"><div class="wf-bar" style="left:${leftPct.toFixed(2)}%;width:${widthPct.toFixed(2)}%"></div></div>` +
      `<code class="wf-ms">${(seconds * 1000).toFixed(1)}ms</code></div>`
    );
  });
  return `<div class="waterfall">${rows.join("")}</div>`;
}

export function renderDegradedBanner(response: QueryResponse): string {
  if (!response.degraded) return "";
  const reason = response.degraded_reason ? escapeHtml(response.degraded_reason) : "unknown reason";
  return `<div class="banner banner-degraded">degraded response: ${reason}</div>`;
}

export function renderSql(sqlText: string | null): string {
  if (!sqlText) return "";
  return `<pre class="sql-text">${escapeHtml(sqlText)}</pre>`;
}

/** Full result card for one answered query. */
export function renderResultCard(question: string, response: QueryResponse): string {
  return (
    `<article class="result-card" data-trace="${escapeHtml(response.trace_id)}">` +
    renderDegradedBanner(response) +
    `<header class="result-head">${renderRouteBadge(response.route)}` +
    `<span class="result-question">${escapeHtml(question)}</span></header>` +
    `<div class="result-chips">${renderPatternChips(response.route)}</div>` +
    renderScores(response.route) +
    renderL2Bars(response.l2) +
    `<pre class="answer">${escapeHtml(response.answer)}</pre>` +
    renderSql(response.sql_text) +
    `<details class="evidence-box" open><summary>evidence (${response.evidence.length})</summary>` +
    renderEvidence(response.evidence) +
    "</details>" +
    `<details class="latency-box" open><summary>latency</summary>` +
    renderLatencyWaterfall(response.latencies) +
    "</details>" +
    `<footer class="result-foot"><code>trace ${escapeHtml(response.trace_id)}</code></footer>` +
    "</article>"
  );
}

/** Route preview panel shown while typing; hidden when empty/unavailable. */
export function renderExplainPreview(explain: ExplainResponse | null): string {
  if (!explain) return "";
  return (
    `<div class="preview" data-path="${explain.l1.path}">` +
    `would route: ${renderRouteBadge(explain.l1)}` +
    `<span class="preview-tier">tier ${explain.l2.tier}</span>` +
    `<div class="preview-chips">${renderPatternChips(explain.l1)}</div>` +
    "</div>"
  );
}

export function renderErrorBanner(message: string): string {
  return `<div class="banner banner-error">engine unreachable: ${escapeHtml(message)}</div>`;
}
