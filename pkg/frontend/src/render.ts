// Page-4 rendering: generated/reference comparison on top, source documents
// below, every sentence wrapped in an element keyed by its id.

import { danglingSources, highlightFor } from "./highlight";
import type { AttributionOut, SummaryOut, UnifiedRecordOut } from "./types";

export const HIGHLIGHT_CLASS = "highlighted";
export const UNGROUNDED_CLASS = "ungrounded";

function el(tag: string, className?: string, text?: string): HTMLElement {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

export interface ComparisonHandlers {
  onHover?: (sid: string | null) => void;
  onSelect?: (sid: string) => void;
}

export function renderComparison(
  container: HTMLElement,
  summary: SummaryOut,
  reference: Record<string, string> | null,
  attribution: AttributionOut,
  record: UnifiedRecordOut,
  handlers: ComparisonHandlers = {},
): void {
  container.textContent = "";

  const upper = el("div", "comparison-upper");
  const generatedPane = el("section", "pane generated-pane");
  generatedPane.appendChild(el("h2", "pane-title", `生成摘要 (${summary.status})`));
  const ungroundedSids = new Set(
    attribution.entries.filter((e) => e.sources.length === 0).map((e) => e.gen_sid),
  );
  for (const field of summary.fields) {
    const section = el("section", "summary-field");
    section.dataset.dsField = field.ds_field;
    section.appendChild(el("h3", "field-label", field.ds_field));
    const body = el("p", "field-body");
    if (field.source_unavailable && !field.text) {
      body.appendChild(el("em", "missing", "无可用来源"));
    }
    for (const sentence of field.sentences) {
      const span = el("span", "gen-sentence", sentence.text);
      span.dataset.sid = sentence.sid;
      if (ungroundedSids.has(sentence.sid)) {
        span.classList.add(UNGROUNDED_CLASS);
        span.appendChild(el("sup", "ungrounded-badge", "未溯源"));
      }
      span.addEventListener("mouseenter", () => handlers.onHover?.(sentence.sid));
      span.addEventListener("mouseleave", () => handlers.onHover?.(null));
      span.addEventListener("click", () => handlers.onSelect?.(sentence.sid));
      body.appendChild(span);
      body.appendChild(document.createTextNode(" "));
    }
    section.appendChild(body);
    generatedPane.appendChild(section);
  }
  upper.appendChild(generatedPane);

  const referencePane = el("section", "pane reference-pane");
  referencePane.appendChild(el("h2", "pane-title", "医生参考版本"));
  if (reference) {
    for (const field of summary.fields) {
      const section = el("section", "reference-field");
      section.dataset.dsField = field.ds_field;
      section.appendChild(el("h3", "field-label", field.ds_field));
      section.appendChild(el("p", "field-body", reference[field.ds_field] ?? ""));
      referencePane.appendChild(section);
    }
  } else {
    referencePane.appendChild(el("p", "empty-state", "未提供参考版本"));
  }
  upper.appendChild(referencePane);
  container.appendChild(upper);

  const lower = el("div", "source-panel");
  lower.appendChild(el("h2", "pane-title", "原始病历"));
  const recordSids = new Set<string>();
  for (const doc of record.documents) {
    const docSection = el("section", "source-doc");
    docSection.dataset.docId = doc.doc_id;
    docSection.appendChild(el("h3", "doc-title", `${doc.title} · ${doc.doc_type}`));
    for (const field of doc.fields) {
      const fieldBlock = el("div", "source-field");
      fieldBlock.appendChild(el("h4", "field-label", field.field_name));
      const body = el("p", "field-body");
      for (const sentence of field.sentences) {
        recordSids.add(sentence.sid);
        const span = el("span", "source-sentence", sentence.text);
        span.dataset.sid = sentence.sid;
        body.appendChild(span);
        body.appendChild(document.createTextNode(" "));
      }
      fieldBlock.appendChild(body);
      docSection.appendChild(fieldBlock);
    }
    lower.appendChild(docSection);
  }

  const dangling = danglingSources(attribution, recordSids);
  if (dangling.length > 0) {
    const warning = el("div", "dangling-error");
    warning.setAttribute("role", "alert");
    warning.textContent = `溯源指向不存在的句子: ${dangling.join(", ")}`;
    lower.appendChild(warning);
  }
  container.appendChild(lower);
}

/** Apply hover styling: exactly the supporting source sentences highlight. */
export function applyHighlight(
  container: HTMLElement,
  attribution: AttributionOut | null,
  hoverSid: string | null,
): string[] {
  const state = highlightFor(attribution, hoverSid);
  const wanted = new Set(state.sourceSids);
  const highlighted: string[] = [];
  container.querySelectorAll<HTMLElement>(".source-sentence").forEach((node) => {
    const sid = node.dataset.sid ?? "";
    if (wanted.has(sid)) {
      node.classList.add(HIGHLIGHT_CLASS);
      highlighted.push(sid);
    } else {
      node.classList.remove(HIGHLIGHT_CLASS);
    }
  });
  container.querySelectorAll<HTMLElement>(".gen-sentence").forEach((node) => {
    node.classList.toggle("hover-active", node.dataset.sid === hoverSid);
  });
  return highlighted;
}

/** List the source documents supporting one generated sentence (click action). */
export function sourceDocsFor(
  attribution: AttributionOut,
  record: UnifiedRecordOut,
  genSid: string,
): string[] {
  const entry = attribution.entries.find((e) => e.gen_sid === genSid);
  if (!entry) return [];
  const docs: string[] = [];
  for (const sid of entry.sources) {
    const docId = sid.split("#")[0];
    if (record.documents.some((d) => d.doc_id === docId) && !docs.includes(docId)) {
      docs.push(docId);
    }
  }
  return docs;
}

/** Trigger a JSON download of the exported golden record. */
export function downloadGolden(golden: unknown, filename: string): void {
  const blob = new Blob([JSON.stringify(golden, null, 2)], { type: "application/json" });
  const url = URL.createObjectURL(blob);
  const anchor = document.createElement("a");
  anchor.href = url;
  anchor.download = filename;
  anchor.click();
  URL.revokeObjectURL(url);
}
