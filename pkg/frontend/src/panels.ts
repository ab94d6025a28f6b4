/** The two interactive panels, as plain-DOM components.
 *
 * Both panels funnel every vector operation through the HTTP API and keep
 * at most one in-flight request each; slider traffic is debounced and a
 * superseded response is discarded rather than rendered.
 */

import { ApiClient } from "./api.js";
import { Debouncer, LatestOnly } from "./flow.js";
import { SessionState, appendHistory, setTau } from "./state.js";

const SLIDER_MIN_INTERVAL_MS = 200; // ≤ 5 requests/second

function el<K extends keyof HTMLElementTagNameMap>(
  doc: Document,
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = doc.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

function showError(banner: HTMLElement, err: unknown): void {
  banner.textContent = err instanceof Error ? err.message : String(err);
  banner.style.display = "block";
}

function clearError(banner: HTMLElement): void {
  banner.textContent = "";
  banner.style.display = "none";
}

export interface InterpolationPanel {
  root: HTMLElement;
  /** Fetch the full table for the current sentence pair and render it. */
  submit(): Promise<void>;
  /** Move the slider; issues a debounced, latest-wins live request. */
  moveSlider(tau: number): void;
}

export function createInterpolationPanel(
  doc: Document,
  client: ApiClient,
  state: SessionState,
  onHistory?: () => void,
): InterpolationPanel {
  const root = el(doc, "section", "panel interpolation-panel");
  root.append(el(doc, "h2", undefined, "Interpolation"));
  const banner = el(doc, "div", "error-banner");
  banner.style.display = "none";

  const inputA = el(doc, "input", "sentence-1");
  inputA.placeholder = "sentence 1";
  const inputB = el(doc, "input", "sentence-2");
  inputB.placeholder = "sentence 2";
  const button = el(doc, "button", "interpolate-go", "Interpolate");

  const slider = el(doc, "input", "tau-slider");
  slider.type = "range";
  slider.min = "0";
  slider.max = "1";
  slider.step = "0.01";
  slider.value = "0";
  const live = el(doc, "div", "live-sentence");
  const table = el(doc, "table", "interpolation-table");

  root.append(banner, inputA, inputB, button, slider, live, table);

  const debouncer = new Debouncer(SLIDER_MIN_INTERVAL_MS);
  const inflight = new LatestOnly<{ rows: { tau: number; text: string }[] }>();

  function renderTable(rows: { tau: number; text: string }[]): void {
    table.replaceChildren();
    const head = el(doc, "tr");
    head.append(el(doc, "th", undefined, "τ"), el(doc, "th", undefined, "text"));
    table.append(head);
    for (const row of rows) {
      const tr = el(doc, "tr", "interpolation-row");
      tr.append(
        el(doc, "td", "tau-cell", row.tau.toFixed(1)),
        el(doc, "td", "text-cell", row.text),
      );
      table.append(tr);
    }
  }

  function nearestRow(rows: { tau: number; text: string }[], tau: number) {
    let best = rows[0];
    for (const row of rows) {
      if (Math.abs(row.tau - tau) < Math.abs(best.tau - tau)) best = row;
    }
    return best;
  }

  async function submit(): Promise<void> {
    state.a = inputA.value;
    state.b = inputB.value;
    if (!state.a.trim() || !state.b.trim()) {
      showError(banner, "both sentences are required");
      return;
    }
    try {
      const res = await client.interpolate(state.a, state.b);
      clearError(banner);
      renderTable(res.rows);
      live.textContent = nearestRow(res.rows, state.tau).text;
      appendHistory(state, { op: "interpolate", a: state.a, b: state.b }, { ...res });
      onHistory?.();
    } catch (err) {
      showError(banner, err);
    }
  }

  function moveSlider(tau: number): void {
    setTau(state, tau);
    slider.value = String(state.tau);
    state.a = inputA.value;
    state.b = inputB.value;
    if (!state.a.trim() || !state.b.trim()) return;
    const target = state.tau;
    debouncer.call(() => {
      void inflight
        .issue(() => client.interpolate(state.a, state.b))
        .then((res) => {
          if (res === null) return; // superseded by a newer slider position
          clearError(banner);
          live.textContent = nearestRow(res.rows, target).text;
        })
        .catch((err) => showError(banner, err));
    });
  }

  button.addEventListener("click", () => void submit());
  slider.addEventListener("input", () => moveSlider(Number(slider.value)));

  return { root, submit, moveSlider };
}

export interface ArithmeticPanel {
  root: HTMLElement;
  submit(): Promise<void>;
}

export function createArithmeticPanel(
  doc: Document,
  client: ApiClient,
  state: SessionState,
  onHistory?: () => void,
): ArithmeticPanel {
  const root = el(doc, "section", "panel arithmetic-panel");
  root.append(el(doc, "h2", undefined, "Arithmetic"));
  const banner = el(doc, "div", "error-banner");
  banner.style.display = "none";

  const inputA = el(doc, "input", "slot-a");
  inputA.placeholder = "A";
  const inputB = el(doc, "input", "slot-b");
  inputB.placeholder = "B";
  const inputC = el(doc, "input", "slot-c");
  inputC.placeholder = "C";
  const button = el(doc, "button", "arith-go", "Compute");
  const formula = el(doc, "div", "formula", "z_D = z_B − z_A + z_C");
  const result = el(doc, "div", "arith-result");

  root.append(banner, inputA, inputB, inputC, button, formula, result);

  // Submissions are chained so at most one request is in flight and the
  // history order always matches the submission order.
  let chain: Promise<void> = Promise.resolve();

  function submit(): Promise<void> {
    const a = inputA.value;
    const b = inputB.value;
    const c = inputC.value;
    state.a = a;
    state.b = b;
    state.c = c;
    if (!a.trim() || !b.trim() || !c.trim()) {
      showError(banner, "all three sentences are required");
      return Promise.resolve();
    }
    chain = chain.then(async () => {
      try {
        const res = await client.arith(a, b, c);
        clearError(banner);
        result.textContent = res.text;
        appendHistory(state, { op: "arith", a, b, c }, { ...res });
        onHistory?.();
      } catch (err) {
        showError(banner, err);
      }
    });
    return chain;
  }

  button.addEventListener("click", () => void submit());

  return { root, submit };
}

export function renderHistory(
  doc: Document,
  container: HTMLElement,
  state: SessionState,
): void {
  container.replaceChildren();
  for (const entry of state.history) {
    const item = el(doc, "li", "history-entry");
    const req = entry.request as { op?: string };
    const res = entry.response as { text?: string };
    item.textContent = `${req.op ?? "?"}: ${res.text ?? JSON.stringify(entry.response)}`;
    container.append(item);
  }
}
