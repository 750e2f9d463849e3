/** Circle-marker descriptors for the three property layers.
 *
 * Colors are exactly red (fires), green (current inspections), and blue
 * (potential inspections). Marker radius scales with zoom, never with
 * risk; risk is conveyed by the filter panel and hover details.
 */
import { ApiFeature, LayerName } from "./types";

export const LAYER_COLORS: Record<LayerName, string> = {
  FIRE: "red",
  CURRENT_INSPECTION: "green",
  POTENTIAL_INSPECTION: "blue",
};

export interface MarkerSpec {
  id: string;
  lat: number;
  lon: number;
  color: string;
  feature: ApiFeature;
}

export function buildMarkers(
  features: ApiFeature[],
  visibleLayers: Set<LayerName>,
): MarkerSpec[] {
  const out: MarkerSpec[] = [];
  for (const feature of features) {
    if (!visibleLayers.has(feature.properties.layer)) continue;
    const [lon, lat] = feature.geometry.coordinates;
    out.push({
      id: feature.id,
      lat,
      lon,
      color: LAYER_COLORS[feature.properties.layer],
      feature,
    });
  }
  return out;
}

/** Monotone in zoom, clamped so markers stay legible at both extremes. */
export function markerRadius(zoom: number): number {
  return Math.min(9, Math.max(3, zoom - 8));
}
