/** Severity banding for display only. The clinical severity levels are
 * defined by symptoms and vitals, not by S, so the UI labels this mapping
 * explicitly as a display convention. */

export type SeverityBand = "minimal" | "common" | "severe" | "critical";

export const BANDING_NOTE = "display convention, not the NHC clinical criteria";

export function severityBand(s: number): SeverityBand {
  if (s > 100) return "critical";
  if (s > 75) return "severe";
  if (s >= 25) return "common";
  return "minimal";
}

/** Scores above the baseline (S > 100) always render in an alert style. */
export function isAlert(s: number): boolean {
  return s > 100;
}
