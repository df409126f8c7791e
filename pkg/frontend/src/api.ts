/**
 * Thin fetch client for the engine's HTTP API.
 *
 * The base URL comes from (in order) an explicit constructor argument, a
 * `<meta name="logrouter-base">` tag, or same-origin.
 */

import type {
  ExplainResponse,
  HealthResponse,
  QueryResponse,
  Toggles,
} from "./types.js";

export class EngineError extends Error {
  constructor(
    message: string,
    public readonly status?: number,
  ) {
    super(message);
    this.name = "EngineError";
  }
}

async function asJson<T>(res: Response): Promise<T> {
  if (!res.ok) {
    let detail = res.statusText;
    try {
      const body = await res.json();
      detail = body?.detail?.message ?? JSON.stringify(body);
    } catch {
      /* non-JSON error body */
    }
    throw new EngineError(detail, res.status);
  }
  return res.json() as Promise<T>;
}

export class EngineClient {
  readonly baseUrl: string;

  constructor(baseUrl?: string) {
    this.baseUrl = (baseUrl ?? discoverBaseUrl()).replace(/\/$/, "");
  }

  async query(question: string, toggles?: Partial<Toggles>, signal?: AbortSignal): Promise<QueryResponse> {
    const body: Record<string, string> = { question };
    if (toggles?.strategy && toggles.strategy !== "hybrid") body.strategy = toggles.strategy;
    if (toggles?.ablation && toggles.ablation !== "full") body.ablation = toggles.ablation;
    if (toggles?.dataset) body.dataset = toggles.dataset;
    const res = await fetch(`${this.baseUrl}/query`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
      signal,
    });
    return asJson<QueryResponse>(res);
  }

  async explain(question: string, ablation?: string, signal?: AbortSignal): Promise<ExplainResponse> {
    const params = new URLSearchParams({ q: question });
    if (ablation && ablation !== "full") params.set("ablation", ablation);
    const res = await fetch(`${this.baseUrl}/routes/explain?${params}`, { signal });
    return asJson<ExplainResponse>(res);
  }

  async health(signal?: AbortSignal): Promise<HealthResponse> {
    return asJson<HealthResponse>(await fetch(`${this.baseUrl}/health`, { signal }));
  }
}

function discoverBaseUrl(): string {
  if (typeof document !== "undefined") {
    const meta = document.querySelector('meta[name="logrouter-base"]');
    const content = meta?.getAttribute("content");
    if (content) return content;
  }
  return "";
}

/**
 * Trailing-edge debounce with cancellation; used for explain previews so
 * only the last keystroke's request lands (last-write-wins).
 */
export function debounce<Args extends unknown[]>(
  fn: (...args: Args) => void,
  waitMs: number,
): { call: (...args: Args) => void; cancel: () => void } {
  let timer: ReturnType<typeof setTimeout> | null = null;
  return {
    call: (...args: Args) => {
      if (timer !== null) clearTimeout(timer);
      timer = setTimeout(() => {
        timer = null;
        fn(...args);
      }, waitMs);
    },
    cancel: () => {
      if (timer !== null) clearTimeout(timer);
      timer = null;
    },
  };
}
