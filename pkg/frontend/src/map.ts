/** Leaflet wiring: basemap, circle markers, overlay polygons, hover panel,
 * and overlay tooltips. DOM-heavy by nature; all decisions that matter are
 * delegated to the pure modules (markers, panel, overlay). */
import L from "leaflet";

import { ApiClient } from "./api";
import { MarkerSpec, markerRadius } from "./markers";
import { hoverPanelRows } from "./panel";
import { TOOLTIP_UNAVAILABLE, tooltipHtml, tooltipLines } from "./overlay";
import { ViewState } from "./state";
import { OverlayCollection } from "./types";

const ATLANTA_CENTER: [number, number] = [33.77, -84.42];
const TILE_URL = "https://tile.openstreetmap.org/{z}/{x}/{y}.png";
const TILE_ATTRIBUTION = "&copy; OpenStreetMap contributors";

export interface MapViewOptions {
  /** offline mode: single-color basemap, no tile requests (used in tests
   * and air-gapped deployments) */
  offlineBasemap?: boolean;
}

export class MapView {
  readonly map: L.Map;
  private markerLayer = L.layerGroup();
  private overlayLayer = L.layerGroup();
  private panel: HTMLElement | null;

  constructor(
    container: string | HTMLElement,
    private client: ApiClient,
    private clock: () => Date = () => new Date(),
    options: MapViewOptions = {},
  ) {
    this.map = L.map(container, { center: ATLANTA_CENTER, zoom: 12 });
    if (options.offlineBasemap) {
      const el = this.map.getContainer();
      el.style.background = "#dfe8dc";
    } else {
      L.tileLayer(TILE_URL, { attribution: TILE_ATTRIBUTION }).addTo(this.map);
    }
    this.markerLayer.addTo(this.map);
    this.overlayLayer.addTo(this.map);
    this.panel = document.getElementById("hover-panel");
    this.map.on("zoomend", () => this.resizeMarkers());
  }

  setMarkers(markers: MarkerSpec[]): void {
    this.markerLayer.clearLayers();
    const radius = markerRadius(this.map.getZoom());
    for (const spec of markers) {
      const circle = L.circleMarker([spec.lat, spec.lon], {
        radius,
        color: spec.color,
        fillColor: spec.color,
        fillOpacity: 0.7,
        weight: 1,
      });
      circle.on("mouseover", () => this.showPanel(spec));
      circle.on("mouseout", () => this.clearPanel());
      this.markerLayer.addLayer(circle);
    }
  }

  private resizeMarkers(): void {
    const radius = markerRadius(this.map.getZoom());
    this.markerLayer.eachLayer((layer) => {
      (layer as L.CircleMarker).setRadius(radius);
    });
  }

  private showPanel(spec: MarkerSpec): void {
    if (!this.panel) return;
    const rows = hoverPanelRows(spec.feature, this.clock());
    this.panel.innerHTML = rows
      .map((r) => `<div class="row"><span>${r.label}</span><b>${r.value}</b></div>`)
      .join("");
    this.panel.classList.add("visible");
  }

  private clearPanel(): void {
    this.panel?.classList.remove("visible");
  }

  /** Draw one overlay kind; tooltips fetch stats for the state current at
   * hover time, so filter changes show up on the next hover. */
  async showOverlays(kind: string, stateOf: () => ViewState): Promise<void> {
    this.overlayLayer.clearLayers();
    if (!kind) return;
    const collection: OverlayCollection = await this.client.getOverlays(kind);
    for (const feature of collection.features) {
      const rings = feature.geometry.coordinates.map((ring) =>
        ring.map(([lon, lat]) => [lat, lon] as [number, number]),
      );
      const polygon = L.polygon(rings, {
        color: "#555",
        weight: 1,
        fillOpacity: 0.05,
      });
      polygon.bindTooltip("", { sticky: true });
      polygon.on("mouseover", async () => {
        try {
          const stats = await this.client.getOverlayStats(
            kind,
            feature.properties.id,
            stateOf(),
          );
          polygon.setTooltipContent(
            tooltipHtml(stats.name, tooltipLines(stats)),
          );
        } catch {
          polygon.setTooltipContent(TOOLTIP_UNAVAILABLE);
        }
      });
      this.overlayLayer.addLayer(polygon);
    }
  }

  clearOverlays(): void {
    this.overlayLayer.clearLayers();
  }
}
