/** Overlay hover tooltip: a straight pass-through of the stats endpoint.
 * Every number shown is the API's own; the UI adds no arithmetic. */
import { ALL_LAYERS, OverlayStats } from "./types";

export const LAYER_LABELS: Record<string, string> = {
  FIRE: "Fires",
  CURRENT_INSPECTION: "Current inspections",
  POTENTIAL_INSPECTION: "Potential inspections",
};

export interface TooltipLine {
  layer: string;
  label: string;
  count: number;
  percentage: number;
  text: string;
}

export function tooltipLines(stats: OverlayStats): TooltipLine[] {
  return ALL_LAYERS.map((layer) => {
    const cell = stats.layers[layer];
    return {
      layer,
      label: LAYER_LABELS[layer],
      count: cell.count,
      percentage: cell.percentage,
      text: `${LAYER_LABELS[layer]}: ${cell.count} (${cell.percentage.toFixed(1)}%)`,
    };
  });
}

export const TOOLTIP_UNAVAILABLE = "unavailable";

export function tooltipHtml(name: string, lines: TooltipLine[]): string {
  const rows = lines.map((l) => `<div>${l.text}</div>`).join("");
  return `<strong>${name}</strong>${rows}`;
}
