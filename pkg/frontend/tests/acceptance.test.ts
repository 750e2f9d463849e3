/** Acceptance for the web map, run against API responses recorded from the
 * real service over the 10-feature fixture snapshot. */
import { describe, expect, it } from "vitest";

import { ApiClient } from "../src/api";
import { MapController } from "../src/controller";
import { LAYER_COLORS, MarkerSpec, buildMarkers } from "../src/markers";
import { DASH, hoverPanelRows } from "../src/panel";
import { tooltipLines } from "../src/overlay";
import { defaultState } from "../src/state";
import { FeatureCollection } from "../src/types";
import { recordedFetch, recordedResponse } from "./helpers";

const CLOCK = new Date("2015-04-01T00:00:00Z");

describe("ACCEPTANCE web map", () => {
  it("marker count and colors match the fixture layers", () => {
    const collection = recordedResponse<FeatureCollection>("/api/properties");
    const markers = buildMarkers(collection.features, defaultState().visibleLayers);
    expect(markers).toHaveLength(10);
    const byColor = new Map<string, number>();
    for (const m of markers) {
      byColor.set(m.color, (byColor.get(m.color) ?? 0) + 1);
      expect(m.color).toBe(LAYER_COLORS[m.feature.properties.layer]);
    }
    expect(byColor.get("red")).toBe(4); // fires
    expect(byColor.get("green")).toBe(3); // current inspections
    expect(byColor.get("blue")).toBe(3); // potential inspections
  });

  it("hover panel shows the five fields", () => {
    const collection = recordedResponse<FeatureCollection>("/api/properties");
    for (const feature of collection.features) {
      const rows = hoverPanelRows(feature, CLOCK);
      expect(rows).toHaveLength(5);
      expect(rows.map((r) => r.label)).toEqual([
        "Business name",
        "Address",
        "Usage type",
        feature.properties.layer === "FIRE"
          ? "Days since fire"
          : "Days since inspection",
        "Risk score",
      ]);
      for (const row of rows) expect(row.value.length).toBeGreaterThan(0);
      if (feature.properties.riskScore === null) {
        expect(rows[4].value).toBe(DASH);
      }
    }
  });

  it("overlay tooltip numbers equal a direct API call", async () => {
    const client = new ApiClient(recordedFetch());
    for (const overlayId of ["NPU-1", "NPU-2"]) {
      const direct = await client.getOverlayStats("npu", overlayId, defaultState());
      const lines = tooltipLines(direct);
      for (const line of lines) {
        const cell = direct.layers[line.layer as keyof typeof direct.layers];
        expect(line.count).toBe(cell.count);
        expect(line.percentage).toBe(cell.percentage);
      }
    }
  });

  it("a filter change triggers exactly one new properties request", async () => {
    const log: string[] = [];
    const client = new ApiClient(recordedFetch(log));
    let rendered: MarkerSpec[] = [];
    const controller = new MapController(client, defaultState(), (m) => {
      rendered = m;
    });
    await controller.applyState(defaultState());
    const before = log.filter((u) => u.startsWith("/api/properties")).length;
    expect(before).toBe(1);

    const filtered = defaultState();
    filtered.riskMin = 6;
    await controller.applyState(filtered);
    const after = log.filter((u) => u.startsWith("/api/properties")).length;
    expect(after - before).toBe(1);
    // and the markers now reflect the server-filtered set
    expect(rendered.every((m) => (m.feature.properties.riskScore ?? 0) >= 6)).toBe(true);
  });
});
