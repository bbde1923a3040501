// Hover-highlight logic: a pure function of (attribution, hover target).

import type { AttributionOut } from "./types";

export interface HighlightState {
  /** Source sentence ids to highlight; empty for an ungrounded sentence. */
  sourceSids: string[];
  /** The hovered generated sentence is ungrounded (no supporting sources). */
  ungrounded: boolean;
}

const EMPTY: HighlightState = { sourceSids: [], ungrounded: false };

export function highlightFor(attribution: AttributionOut | null, hoverSid: string | null): HighlightState {
  if (!attribution || !hoverSid) return EMPTY;
  const entry = attribution.entries.find((e) => e.gen_sid === hoverSid);
  if (!entry) return EMPTY;
  return { sourceSids: [...entry.sources], ungrounded: entry.sources.length === 0 };
}

/** Attribution source ids that do not exist in the loaded record; the UI
 * renders these as explicit errors instead of silently skipping them. */
export function danglingSources(attribution: AttributionOut, recordSids: Set<string>): string[] {
  const missing: string[] = [];
  for (const entry of attribution.entries) {
    for (const sid of entry.sources) {
      if (!recordSids.has(sid) && !missing.includes(sid)) missing.push(sid);
    }
  }
  return missing;
}
