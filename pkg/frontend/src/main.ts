/** Boot the inspector map: restore state from the URL, wire controls, and
 * keep URL, API, and map in sync. */
import { ApiClient } from "./api";
import { MapController } from "./controller";
import { MapView } from "./map";
import { decodeState, defaultState, encodeState, ViewState } from "./state";
import { ALL_LAYERS, LayerName } from "./types";

function byId<T extends HTMLElement>(id: string): T {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing #${id}`);
  return el as T;
}

function readControls(): ViewState {
  const state = defaultState();
  state.visibleLayers = new Set(
    ALL_LAYERS.filter((layer) => byId<HTMLInputElement>(`layer-${layer}`).checked),
  );
  state.usageFilter = byId<HTMLInputElement>("usage").value.trim() || null;
  state.dateFrom = byId<HTMLInputElement>("date-from").value || null;
  state.dateTo = byId<HTMLInputElement>("date-to").value || null;
  const riskMin = byId<HTMLInputElement>("risk-min").value;
  const riskMax = byId<HTMLInputElement>("risk-max").value;
  state.riskMin = riskMin ? Number(riskMin) : null;
  state.riskMax = riskMax ? Number(riskMax) : null;
  state.activeOverlayKind = byId<HTMLSelectElement>("overlay-kind").value || null;
  return state;
}

function writeControls(state: ViewState): void {
  for (const layer of ALL_LAYERS) {
    byId<HTMLInputElement>(`layer-${layer}`).checked =
      state.visibleLayers.has(layer as LayerName);
  }
  byId<HTMLInputElement>("usage").value = state.usageFilter ?? "";
  byId<HTMLInputElement>("date-from").value = state.dateFrom ?? "";
  byId<HTMLInputElement>("date-to").value = state.dateTo ?? "";
  byId<HTMLInputElement>("risk-min").value =
    state.riskMin === null ? "" : String(state.riskMin);
  byId<HTMLInputElement>("risk-max").value =
    state.riskMax === null ? "" : String(state.riskMax);
  byId<HTMLSelectElement>("overlay-kind").value = state.activeOverlayKind ?? "";
}

async function boot(): Promise<void> {
  const params = new URLSearchParams(window.location.search);
  const offline = params.get("basemap") === "off";
  const client = new ApiClient((url) => fetch(url));
  const view = new MapView("map", client, () => new Date(), {
    offlineBasemap: offline,
  });
  const controller = new MapController(
    client,
    decodeState(window.location.search),
    (markers) => view.setMarkers(markers),
    () => byId("error-banner").classList.add("visible"),
  );

  const apply = async (state: ViewState) => {
    byId("error-banner").classList.remove("visible");
    const query = encodeState(state);
    const url = query ? `?${query}` : window.location.pathname;
    window.history.replaceState(null, "", url);
    await Promise.all([
      controller.applyState(state),
      state.activeOverlayKind
        ? view.showOverlays(state.activeOverlayKind, () => controller.state)
        : Promise.resolve(view.clearOverlays()),
    ]);
  };

  writeControls(controller.state);
  byId<HTMLFormElement>("filters").addEventListener("change", () => {
    void apply(readControls());
  });

  const meta = await client.getMeta();
  byId("build-stamp").textContent = meta.buildStamp;
  await apply(controller.state);
}

void boot();
