/**
 * Console session state: append-only query history plus the active
 * what-if toggles. History survives reloads via browser storage.
 */

import type { QueryResponse, Toggles } from "./types.js";
import { DEFAULT_TOGGLES } from "./types.js";

export interface HistoryEntry {
  question: string;
  response: QueryResponse;
}

const STORAGE_KEY = "logrouter-console-session";

export class ConsoleSession {
  private entries: HistoryEntry[] = [];
  toggles: Toggles = { ...DEFAULT_TOGGLES };

  get history(): readonly HistoryEntry[] {
    return this.entries;
  }

  append(question: string, response: QueryResponse): HistoryEntry {
    const entry = { question, response };
    this.entries.push(entry);
    return entry;
  }

  setToggle<K extends keyof Toggles>(key: K, value: Toggles[K]): void {
    this.toggles[key] = value;
  }

  save(storage: Pick<Storage, "setItem"> = localStorage): void {
    storage.setItem(
      STORAGE_KEY,
      JSON.stringify({ entries: this.entries, toggles: this.toggles }),
    );
  }

  static load(storage: Pick<Storage, "getItem"> = localStorage): ConsoleSession {
    const session = new ConsoleSession();
    const raw = storage.getItem(STORAGE_KEY);
    if (!raw) return session;
    try {
      const parsed = JSON.parse(raw);
      if (Array.isArray(parsed.entries)) session.entries = parsed.entries;
      if (parsed.toggles) session.toggles = { ...DEFAULT_TOGGLES, ...parsed.toggles };
    } catch {
      /* corrupted storage: start fresh */
    }
    return session;
  }
}
