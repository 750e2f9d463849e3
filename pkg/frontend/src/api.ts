/** Typed client for the firerisk service.
 *
 * The UI never filters or aggregates on its own beyond toggling layer
 * visibility: every displayed number originates from these endpoints.
 */
import { ViewState } from "./state";
import { FeatureCollection, Meta, OverlayCollection, OverlayStats } from "./types";

export type FetchLike = (url: string) => Promise<{
  ok: boolean;
  status: number;
  json(): Promise<unknown>;
}>;

/** Server-side filter params for the current view; layer visibility is a
 * client-side toggle (a hidden layer is simply not drawn), so it is not
 * part of the properties query. */
export function propertiesQuery(state: ViewState): string {
  const params = new URLSearchParams();
  if (state.usageFilter) params.set("usage", state.usageFilter);
  if (state.dateFrom) params.set("from", state.dateFrom);
  if (state.dateTo) params.set("to", state.dateTo);
  if (state.riskMin !== null) params.set("risk_min", String(state.riskMin));
  if (state.riskMax !== null) params.set("risk_max", String(state.riskMax));
  const q = params.toString();
  return q ? `?${q}` : "";
}

export class ApiError extends Error {
  constructor(public url: string, public status: number) {
    super(`${url} -> HTTP ${status}`);
  }
}

export class ApiClient {
  constructor(
    private fetchImpl: FetchLike,
    private base: string = "",
  ) {}

  private async get<T>(path: string): Promise<T> {
    const url = this.base + path;
    const resp = await this.fetchImpl(url);
    if (!resp.ok) throw new ApiError(url, resp.status);
    return (await resp.json()) as T;
  }

  getMeta(): Promise<Meta> {
    return this.get<Meta>("/api/meta");
  }

  getProperties(state: ViewState): Promise<FeatureCollection> {
    return this.get<FeatureCollection>(`/api/properties${propertiesQuery(state)}`);
  }

  getOverlays(kind: string): Promise<OverlayCollection> {
    return this.get<OverlayCollection>(`/api/overlays/${kind}`);
  }

  getOverlayStats(kind: string, id: string, state: ViewState): Promise<OverlayStats> {
    return this.get<OverlayStats>(
      `/api/overlays/${kind}/${id}/stats${propertiesQuery(state)}`,
    );
  }
}
