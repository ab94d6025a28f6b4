/** Session state: sentence slots, the slider position, and an append-only
 * history of (request, response) pairs so each result can seed the next
 * manipulation. Nothing is persisted beyond the page's lifetime. */

export interface HistoryEntry {
  request: Record<string, unknown>;
  response: Record<string, unknown>;
  timestamp: number;
}

export interface SessionState {
  endpoint: string;
  a: string;
  b: string;
  c: string;
  tau: number;
  history: HistoryEntry[];
}

export function initialState(endpoint: string): SessionState {
  return { endpoint, a: "", b: "", c: "", tau: 0, history: [] };
}

export function setTau(state: SessionState, tau: number): void {
  state.tau = Math.min(1, Math.max(0, tau));
}

export function appendHistory(
  state: SessionState,
  request: Record<string, unknown>,
  response: Record<string, unknown>,
  now: () => number = Date.now,
): HistoryEntry {
  const entry = { request, response, timestamp: now() };
  state.history.push(entry);
  return entry;
}
