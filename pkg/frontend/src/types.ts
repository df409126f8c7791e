/**
 * Wire types mirroring the engine's HTTP responses. The console renders
 * these fields verbatim and computes nothing of its own over the scores.
 */

export type RoutePath = "general" | "keyword" | "sql" | "semantic";
export type Tier = "small" | "large";

export interface L1Decision {
  path: RoutePath;
  sql_score: number;
  keyword_score: number;
  event_score: number;
  matched_patterns: string[];
  p7_passed: boolean;
  extracted_search_term: string | null;
}

export interface L2Decision {
  s_len: number;
  s_agg: number;
  s_temp: number;
  s_ent: number;
  total: number;
  tier: Tier;
}

export interface EvidenceItem {
  ref: string;
  text: string;
  score: number;
}

/** Stage name -> duration in seconds. */
export type LatencyMap = Record<string, number>;

export interface QueryResponse {
  answer: string;
  route: L1Decision;
  l2: L2Decision | null;
  evidence: EvidenceItem[];
  sql_text: string | null;
  latencies: LatencyMap;
  trace_id: string;
  degraded: boolean;
  degraded_reason: string | null;
}

export interface ExplainResponse {
  l1: L1Decision;
  l2: L2Decision;
}

export interface HealthResponse {
  status: string;
  counts: Record<string, number>;
  providers: Record<string, boolean>;
}

export type Strategy = "hybrid" | "dense_only" | "keyword_only";

export const ABLATION_CONDITIONS = [
  "full",
  "no_l1",
  "no_l2",
  "no_routing",
  "semantic_only",
  "keyword_only",
  "hybrid",
  "always_large",
  "no_drain",
] as const;

export type Ablation = (typeof ABLATION_CONDITIONS)[number];

export interface Toggles {
  strategy: Strategy;
  ablation: Ablation;
  dataset: string;
}

export const DEFAULT_TOGGLES: Toggles = {
  strategy: "hybrid",
  ablation: "full",
  dataset: "",
};
