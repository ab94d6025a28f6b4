/** Request-flow helpers: debouncing and latest-wins sequencing.
 *
 * The slider can emit dozens of positions per second; Debouncer caps the
 * outgoing request rate, and LatestOnly tags each request with a ticket so
 * a slow, superseded response can never overwrite a newer one.
 */

export class Debouncer {
  private timer: ReturnType<typeof setTimeout> | null = null;
  private lastFire = -Infinity;

  constructor(
    private minIntervalMs: number,
    private now: () => number = Date.now,
  ) {}

  /** Run fn now if the rate limit allows, otherwise schedule the latest
   * call for the next available slot (intermediate calls are dropped). */
  call(fn: () => void): void {
    const wait = this.lastFire + this.minIntervalMs - this.now();
    if (this.timer !== null) clearTimeout(this.timer);
    if (wait <= 0) {
      this.timer = null;
      this.lastFire = this.now();
      fn();
      return;
    }
    this.timer = setTimeout(() => {
      this.timer = null;
      this.lastFire = this.now();
      fn();
    }, wait);
  }
}

export class LatestOnly<T> {
  private ticket = 0;

  /** Start a request; resolves with its result only if no newer request
   * was issued meanwhile, otherwise resolves with null (discarded). */
  async issue(start: () => Promise<T>): Promise<T | null> {
    const mine = ++this.ticket;
    const result = await start();
    return mine === this.ticket ? result : null;
  }
}
