// Client view state for the four-page workflow. Pages 1-3 are thin forms;
// page 4 carries the comparison/review interaction.

import type { AttributionOut, SummaryOut, UnifiedRecordOut } from "./types";

export type Page = 1 | 2 | 3 | 4;

export interface ViewState {
  page: Page;
  sessionId: string | null;
  record: UnifiedRecordOut | null;
  department: string | null;
  summary: SummaryOut | null;
  attribution: AttributionOut | null;
  reference: Record<string, string> | null;
  hoverSid: string | null;
  editBuffer: { sid: string; text: string } | null;
  pendingComments: { gen_sid: string; text: string }[];
  notice: string | null;
}

export function initialState(): ViewState {
  return {
    page: 1,
    sessionId: null,
    record: null,
    department: null,
    summary: null,
    attribution: null,
    reference: null,
    hoverSid: null,
    editBuffer: null,
    pendingComments: [],
    notice: null,
  };
}

/** Page 4 needs a generated summary; pages 2-3 need a session. */
export function canEnter(state: ViewState, page: Page): boolean {
  if (page === 1) return true;
  if (!state.sessionId) return false;
  if (page === 4) return state.summary !== null && state.attribution !== null;
  return true;
}

export function goTo(state: ViewState, page: Page): ViewState {
  if (!canEnter(state, page)) return { ...state, notice: `page ${page} is not reachable yet` };
  return { ...state, page, notice: null };
}

export function setHover(state: ViewState, sid: string | null): ViewState {
  if (sid !== null && state.summary) {
    const known = state.summary.fields.some((f) => f.sentences.some((s) => s.sid === sid));
    if (!known) return { ...state, hoverSid: null };
  }
  return { ...state, hoverSid: sid };
}
