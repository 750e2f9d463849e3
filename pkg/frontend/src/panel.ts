/** Hover info panel: exactly five rows per feature. Absent values render
 * as an em dash. The clock is injected so day arithmetic is testable. */
import { ApiFeature } from "./types";

export const DASH = "—";

export interface PanelRow {
  label: string;
  value: string;
}

export function daysSince(isoDate: string, now: Date): number {
  const then = new Date(`${isoDate}T00:00:00Z`);
  const ms = now.getTime() - then.getTime();
  return Math.floor(ms / 86_400_000);
}

export function hoverPanelRows(feature: ApiFeature, now: Date): PanelRow[] {
  const p = feature.properties;
  let when = DASH;
  if (p.date !== null) {
    const days = daysSince(p.date, now);
    when = days === 1 ? "1 day ago" : `${days} days ago`;
  }
  return [
    { label: "Business name", value: p.businessName ?? DASH },
    { label: "Address", value: p.address ?? DASH },
    { label: "Usage type", value: p.usageType ?? DASH },
    {
      label: p.layer === "FIRE" ? "Days since fire" : "Days since inspection",
      value: when,
    },
    { label: "Risk score", value: p.riskScore === null ? DASH : String(p.riskScore) },
  ];
}
