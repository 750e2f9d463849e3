/** View state <-> URL query string.
 *
 * The whole view state lives in the URL so sessions are shareable and
 * bookmarkable. Parsing clamps risk bounds into 1..10 and orders the date
 * range; garbage values are dropped rather than propagated.
 */
import { ALL_LAYERS, LayerName } from "./types";

export interface ViewState {
  visibleLayers: Set<LayerName>;
  usageFilter: string | null;
  dateFrom: string | null; // ISO YYYY-MM-DD
  dateTo: string | null;
  riskMin: number | null;
  riskMax: number | null;
  activeOverlayKind: string | null;
}

export function defaultState(): ViewState {
  return {
    visibleLayers: new Set(ALL_LAYERS),
    usageFilter: null,
    dateFrom: null,
    dateTo: null,
    riskMin: null,
    riskMax: null,
    activeOverlayKind: null,
  };
}

const DATE_RE = /^\d{4}-\d{2}-\d{2}$/;

function clampRisk(raw: string | null): number | null {
  if (raw === null || raw === "") return null;
  const n = Number(raw);
  if (!Number.isInteger(n)) return null;
  return Math.min(10, Math.max(1, n));
}

function parseDate(raw: string | null): string | null {
  return raw !== null && DATE_RE.test(raw) ? raw : null;
}

export function decodeState(query: string): ViewState {
  const params = new URLSearchParams(query);
  const state = defaultState();

  const layers = params.get("layers");
  if (layers !== null) {
    const chosen = layers
      .split(",")
      .filter((l): l is LayerName => (ALL_LAYERS as string[]).includes(l));
    state.visibleLayers = new Set(chosen);
  }
  state.usageFilter = params.get("usage") || null;
  let from = parseDate(params.get("from"));
  let to = parseDate(params.get("to"));
  if (from !== null && to !== null && from > to) [from, to] = [to, from];
  state.dateFrom = from;
  state.dateTo = to;
  let lo = clampRisk(params.get("risk_min"));
  let hi = clampRisk(params.get("risk_max"));
  if (lo !== null && hi !== null && lo > hi) [lo, hi] = [hi, lo];
  state.riskMin = lo;
  state.riskMax = hi;
  state.activeOverlayKind = params.get("overlay") || null;
  return state;
}

export function encodeState(state: ViewState): string {
  const params = new URLSearchParams();
  if (state.visibleLayers.size !== ALL_LAYERS.length) {
    params.set("layers", ALL_LAYERS.filter((l) => state.visibleLayers.has(l)).join(","));
  }
  if (state.usageFilter) params.set("usage", state.usageFilter);
  if (state.dateFrom) params.set("from", state.dateFrom);
  if (state.dateTo) params.set("to", state.dateTo);
  if (state.riskMin !== null) params.set("risk_min", String(state.riskMin));
  if (state.riskMax !== null) params.set("risk_max", String(state.riskMax));
  if (state.activeOverlayKind) params.set("overlay", state.activeOverlayKind);
  return params.toString();
}
