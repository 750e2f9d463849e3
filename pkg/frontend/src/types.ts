/** Shapes returned by the firerisk HTTP API. */

export type LayerName = "FIRE" | "CURRENT_INSPECTION" | "POTENTIAL_INSPECTION";

export const ALL_LAYERS: LayerName[] = [
  "FIRE",
  "CURRENT_INSPECTION",
  "POTENTIAL_INSPECTION",
];

export interface FeatureProperties {
  layer: LayerName;
  businessName: string | null;
  address: string | null;
  usageType: string | null;
  date: string | null; // ISO YYYY-MM-DD
  riskScore: number | null;
  riskCategory: string | null;
  riskProbability: number | null;
}

export interface ApiFeature {
  type: "Feature";
  id: string;
  geometry: { type: "Point"; coordinates: [number, number] }; // [lon, lat]
  properties: FeatureProperties;
}

export interface FeatureCollection {
  type: "FeatureCollection";
  features: ApiFeature[];
}

export interface LayerStats {
  count: number;
  filteredTotal: number;
  percentage: number;
}

export interface OverlayStats {
  kind: string;
  id: string;
  name: string;
  layers: Record<LayerName, LayerStats>;
}

export interface Meta {
  buildStamp: string;
  counts: Record<LayerName, number>;
}

export interface OverlayFeature {
  type: "Feature";
  geometry: { type: "Polygon"; coordinates: [number, number][][] };
  properties: { id: string; kind: string; name: string };
}

export interface OverlayCollection {
  type: "FeatureCollection";
  features: OverlayFeature[];
}
