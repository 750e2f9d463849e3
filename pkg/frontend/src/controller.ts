/** Data flow: view state -> one properties request -> marker specs.
 *
 * Each filter change issues exactly one new properties request; stale
 * responses are discarded so the newest filter always wins.
 */
import { ApiClient } from "./api";
import { buildMarkers, MarkerSpec } from "./markers";
import { LatestWins, SUPERSEDED } from "./requests";
import { ViewState } from "./state";

export class MapController {
  private gate = new LatestWins();
  state: ViewState;

  constructor(
    private client: ApiClient,
    initial: ViewState,
    private render: (markers: MarkerSpec[]) => void,
    private onError: (err: unknown) => void = () => {},
  ) {
    this.state = initial;
  }

  /** Apply a new view state and refresh markers from the API. */
  async applyState(next: ViewState): Promise<void> {
    this.state = next;
    try {
      const result = await this.gate.run(() => this.client.getProperties(next));
      if (result === SUPERSEDED) return; // a newer filter took over
      this.render(buildMarkers(result.features, next.visibleLayers));
    } catch (err) {
      this.onError(err); // stale markers stay on screen
    }
  }
}
