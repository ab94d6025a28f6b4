/** Entry point: wires the panels and history list to the page.
 *
 * The API base URL is configurable at load time via ?api=... or a
 * window-level PLAYGROUND_API global; it defaults to the page origin.
 */

import { ApiClient } from "./api.js";
import {
  createArithmeticPanel,
  createInterpolationPanel,
  renderHistory,
} from "./panels.js";
import { initialState } from "./state.js";

export function resolveEndpoint(win: Window): string {
  const fromQuery = new URL(win.location.href).searchParams.get("api");
  const fromGlobal = (win as unknown as { PLAYGROUND_API?: string }).PLAYGROUND_API;
  return fromQuery ?? fromGlobal ?? win.location.origin;
}

export function mountApp(doc: Document, win: Window): void {
  const endpoint = resolveEndpoint(win);
  const state = initialState(endpoint);
  const client = new ApiClient(endpoint);

  const app = doc.getElementById("app") ?? doc.body;
  const historyList = doc.createElement("ul");
  historyList.className = "history";
  const onHistory = () => renderHistory(doc, historyList, state);

  const interp = createInterpolationPanel(doc, client, state, onHistory);
  const arith = createArithmeticPanel(doc, client, state, onHistory);

  const historySection = doc.createElement("section");
  historySection.className = "panel history-panel";
  const title = doc.createElement("h2");
  title.textContent = "History";
  historySection.append(title, historyList);

  app.append(interp.root, arith.root, historySection);
}

if (typeof document !== "undefined" && typeof window !== "undefined") {
  mountApp(document, window);
}
