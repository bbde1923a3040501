// Wire formats of the review-service API (schema_version 1 throughout).

export interface SentenceOut {
  sid: string;
  text: string;
}

export interface RecordFieldOut {
  field_name: string;
  content: string;
  sentences: SentenceOut[];
}

export interface DocumentOut {
  doc_id: string;
  doc_type: string;
  title: string;
  timestamp: string | null;
  fields: RecordFieldOut[];
}

export interface UnifiedRecordOut {
  schema_version: number;
  patient_id: string;
  admission_id: string;
  documents: DocumentOut[];
}

export interface SummarySentenceOut {
  sid: string;
  text: string;
  sources: string[];
}

export interface SummaryFieldOut {
  ds_field: string;
  text: string;
  plan_id: string;
  source_unavailable: boolean;
  sentences: SummarySentenceOut[];
}

export interface SummaryOut {
  schema_version: number;
  summary_id: string;
  department: string;
  status: "silver" | "golden";
  fields: SummaryFieldOut[];
}

export interface AttributionEntryOut {
  gen_sid: string;
  sources: string[];
  method: "provider" | "lexical";
  confidence: number;
}

export interface AttributionOut {
  summary_id: string;
  entries: AttributionEntryOut[];
}

export interface GoldenRecordOut {
  session_id: string;
  record_ref: { patient_id: string; admission_id: string };
  silver_summary: SummaryOut;
  golden_summary: SummaryOut;
  comments: CommentOut[];
  edits: EditOut[];
  reviewer_id: string;
  exported_at: string;
}

export interface CommentOut {
  gen_sid: string;
  author: string;
  text: string;
  at: string;
}

export interface EditOut {
  gen_sid: string;
  old_text: string;
  new_text: string;
  at: string;
}

export interface SessionInfo {
  session_id: string;
  state: string;
  department: string | null;
  provider: string;
  documents: number;
  comments: number;
  edits: number;
}

export const DS_FIELDS = [
  "patient_info",
  "discharge_diagnosis",
  "tests_examinations",
  "course_treatment",
  "discharge_condition",
  "medication_advice",
] as const;

/** Re-validate a parsed export as a golden record; returns problem strings. */
export function validateGoldenRecord(value: unknown): string[] {
  const problems: string[] = [];
  const golden = value as Partial<GoldenRecordOut> | null;
  if (!golden || typeof golden !== "object") return ["not an object"];
  if (typeof golden.session_id !== "string") problems.push("missing session_id");
  if (!golden.record_ref || typeof golden.record_ref.admission_id !== "string") {
    problems.push("missing record_ref");
  }
  if (typeof golden.reviewer_id !== "string") problems.push("missing reviewer_id");
  if (!Array.isArray(golden.comments)) problems.push("comments is not a list");
  if (!Array.isArray(golden.edits)) problems.push("edits is not a list");
  for (const [key, status] of [
    ["silver_summary", "silver"],
    ["golden_summary", "golden"],
  ] as const) {
    const summary = golden[key];
    if (!summary || typeof summary !== "object") {
      problems.push(`missing ${key}`);
      continue;
    }
    problems.push(...validateSummary(summary, status).map((p) => `${key}: ${p}`));
  }
  return problems;
}

export function validateSummary(summary: SummaryOut, status?: "silver" | "golden"): string[] {
  const problems: string[] = [];
  if (summary.schema_version !== 1) problems.push(`bad schema_version ${summary.schema_version}`);
  if (status && summary.status !== status) problems.push(`status ${summary.status} != ${status}`);
  const fields = summary.fields?.map((f) => f.ds_field) ?? [];
  if (fields.length !== DS_FIELDS.length || DS_FIELDS.some((name, i) => fields[i] !== name)) {
    problems.push(`fields out of order: ${fields.join(",")}`);
  }
  const seen = new Set<string>();
  for (const field of summary.fields ?? []) {
    const joined = field.sentences.map((s) => s.text).join(" ");
    if (squashWs(joined) !== squashWs(field.text)) {
      problems.push(`${field.ds_field}: sentences do not reassemble text`);
    }
    for (const sentence of field.sentences) {
      if (seen.has(sentence.sid)) problems.push(`duplicate sid ${sentence.sid}`);
      seen.add(sentence.sid);
    }
  }
  return problems;
}

export function squashWs(text: string): string {
  return text.replace(/\s+/g, "");
}
