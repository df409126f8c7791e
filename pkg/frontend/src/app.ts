/**
 * DOM wiring for the query console: submit box with debounced route
 * preview, toggle controls, and the result history column.
 *
 * One query in flight per session; previews are cancellable and
 * last-write-wins.
 */

import { debounce, EngineClient, EngineError } from "./api.js";
import {
  renderErrorBanner,
  renderExplainPreview,
  renderResultCard,
} from "./render.js";
import { ConsoleSession } from "./session.js";
import type { Ablation, Strategy } from "./types.js";
import { ABLATION_CONDITIONS } from "./types.js";

const PREVIEW_DEBOUNCE_MS = 200;

export function mountConsole(root: HTMLElement, client = new EngineClient()): void {
  root.innerHTML = `
    <div class="console">
      <form class="ask" autocomplete="off">
        <input name="question" class="ask-input" placeholder="Ask about your logs..." />
        <button type="submit" class="ask-submit">Ask</button>
      </form>
      <div class="preview-slot"></div>
      <div class="toggles">
        <label>strategy
          <select name="strategy">
            <option value="hybrid">hybrid</option>
            <option value="dense_only">dense_only</option>
            <option value="keyword_only">keyword_only</option>
          </select>
        </label>
        <label>ablation
          <select name="ablation">
            ${ABLATION_CONDITIONS.map((c) => `<option value="${c}">${c}</option>`).join("")}
          </select>
        </label>
        <label>dataset
          <input name="dataset" class="dataset-input" placeholder="(all)" />
        </label>
      </div>
      <div class="banner-slot"></div>
      <div class="history"></div>
    </div>`;

  const session = ConsoleSession.load(safeStorage());
  const form = root.querySelector(".ask") as HTMLFormElement;
  const input = root.querySelector(".ask-input") as HTMLInputElement;
  const previewSlot = root.querySelector(".preview-slot") as HTMLElement;
  const bannerSlot = root.querySelector(".banner-slot") as HTMLElement;
  const historyEl = root.querySelector(".history") as HTMLElement;
  const strategySel = root.querySelector('select[name="strategy"]') as HTMLSelectElement;
  const ablationSel = root.querySelector('select[name="ablation"]') as HTMLSelectElement;
  const datasetInput = root.querySelector('input[name="dataset"]') as HTMLInputElement;

  strategySel.value = session.toggles.strategy;
  ablationSel.value = session.toggles.ablation;
  datasetInput.value = session.toggles.dataset;
  for (const entry of session.history) {
    historyEl.insertAdjacentHTML("afterbegin", renderResultCard(entry.question, entry.response));
  }

  strategySel.addEventListener("change", () => {
    session.setToggle("strategy", strategySel.value as Strategy);
    session.save(safeStorage());
  });
  ablationSel.addEventListener("change", () => {
    session.setToggle("ablation", ablationSel.value as Ablation);
    session.save(safeStorage());
  });
  datasetInput.addEventListener("change", () => {
    session.setToggle("dataset", datasetInput.value.trim());
    session.save(safeStorage());
  });

  let previewAbort: AbortController | null = null;
  const preview = debounce(async (question: string) => {
    previewAbort?.abort();
    if (!question.trim()) {
      previewSlot.innerHTML = "";
      return;
    }
    previewAbort = new AbortController();
    try {
      const explain = await client.explain(question, session.toggles.ablation, previewAbort.signal);
      previewSlot.innerHTML = renderExplainPreview(explain);
    } catch {
      previewSlot.innerHTML = ""; // preview failure: hide panel, no banner
    }
  }, PREVIEW_DEBOUNCE_MS);

  input.addEventListener("input", () => preview.call(input.value));

  let inFlight = false;
  form.addEventListener("submit", async (event) => {
    event.preventDefault();
    const question = input.value.trim();
    if (!question || inFlight) return;
    inFlight = true;
    preview.cancel();
    bannerSlot.innerHTML = "";
    try {
      const response = await client.query(question, session.toggles);
      session.append(question, response);
      session.save(safeStorage());
      historyEl.insertAdjacentHTML("afterbegin", renderResultCard(question, response));
      input.value = "";
      previewSlot.innerHTML = "";
    } catch (err) {
      const message = err instanceof EngineError ? err.message : String(err);
      bannerSlot.innerHTML = renderErrorBanner(message); // history unchanged
    } finally {
      inFlight = false;
    }
  });
}

function safeStorage(): Storage {
  try {
    return window.localStorage;
  } catch {
    const memory = new Map<string, string>();
    return {
      getItem: (k: string) => memory.get(k) ?? null,
      setItem: (k: string, v: string) => void memory.set(k, v),
      removeItem: (k: string) => void memory.delete(k),
      clear: () => memory.clear(),
      key: () => null,
      length: 0,
    } as Storage;
  }
}

if (typeof document !== "undefined") {
  const root = document.getElementById("console-root");
  if (root) mountConsole(root);
}
