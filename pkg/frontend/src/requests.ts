/** Latest-wins request gate: at most one properties request is honored at
 * a time. A newer call supersedes an in-flight one; the stale response is
 * discarded (the fetch itself is not cancelable everywhere, but its result
 * never reaches the caller). */

export const SUPERSEDED = Symbol("superseded");

export class LatestWins {
  private epoch = 0;

  /** Run the task; resolve with its value, or SUPERSEDED if a newer task
   * started while it was in flight. Rejections of stale tasks are
   * swallowed. */
  async run<T>(task: () => Promise<T>): Promise<T | typeof SUPERSEDED> {
    const mine = ++this.epoch;
    try {
      const value = await task();
      return mine === this.epoch ? value : SUPERSEDED;
    } catch (err) {
      if (mine === this.epoch) throw err;
      return SUPERSEDED;
    }
  }

  get inFlightEpoch(): number {
    return this.epoch;
  }
}
