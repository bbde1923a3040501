// Thin typed client over the review-service HTTP API. The UI holds no
// authoritative state; every mutation goes through these calls.

import type {
  AttributionOut,
  GoldenRecordOut,
  SessionInfo,
  SummaryOut,
  UnifiedRecordOut,
} from "./types";

export class ApiError extends Error {
  constructor(
    message: string,
    readonly status: number,
  ) {
    super(message);
  }
}

export interface RawDocumentIn {
  doc_id: string;
  payload: string;
  doc_type?: string;
}

export class ReviewApi {
  constructor(
    private readonly baseUrl: string = "",
    private readonly reviewerId: string = "reviewer",
  ) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const response = await fetch(`${this.baseUrl}${path}`, {
      method,
      headers: {
        "Content-Type": "application/json",
        "X-Reviewer-Id": this.reviewerId,
      },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    if (!response.ok) {
      let detail = `${response.status}`;
      try {
        const parsed = await response.json();
        detail = parsed.detail ?? detail;
      } catch {
        // keep the bare status
      }
      throw new ApiError(String(detail), response.status);
    }
    return response.json() as Promise<T>;
  }

  createSession(): Promise<{ session_id: string; state: string }> {
    return this.request("POST", "/api/sessions");
  }

  sessionInfo(sessionId: string): Promise<SessionInfo> {
    return this.request("GET", `/api/sessions/${sessionId}`);
  }

  departments(): Promise<{ departments: string[] }> {
    return this.request("GET", "/api/departments");
  }

  uploadDocuments(sessionId: string, documents: RawDocumentIn[]): Promise<{ state: string; documents: number }> {
    return this.request("POST", `/api/sessions/${sessionId}/documents`, { documents });
  }

  convert(sessionId: string, patientId: string, admissionId: string): Promise<{ state: string; record: UnifiedRecordOut }> {
    return this.request("POST", `/api/sessions/${sessionId}/convert`, {
      patient_id: patientId,
      admission_id: admissionId,
    });
  }

  getRecord(sessionId: string): Promise<UnifiedRecordOut> {
    return this.request("GET", `/api/sessions/${sessionId}/record`);
  }

  getConfig(sessionId: string): Promise<{ department: string | null; provider: string; rule_edits: Record<string, string> }> {
    return this.request("GET", `/api/sessions/${sessionId}/config`);
  }

  putConfig(
    sessionId: string,
    config: { department?: string; provider?: string; rule_edits?: Record<string, string> },
  ): Promise<{ state: string; department: string | null }> {
    return this.request("PUT", `/api/sessions/${sessionId}/config`, config);
  }

  generate(sessionId: string): Promise<{ state: string; summary: SummaryOut }> {
    return this.request("POST", `/api/sessions/${sessionId}/generate`);
  }

  getSummary(sessionId: string): Promise<SummaryOut> {
    return this.request("GET", `/api/sessions/${sessionId}/summary`);
  }

  getAttribution(sessionId: string): Promise<AttributionOut> {
    return this.request("GET", `/api/sessions/${sessionId}/attribution`);
  }

  editSentence(
    sessionId: string,
    sid: string,
    text: string,
  ): Promise<{ sid: string; text: string; sources: string[]; ungrounded: boolean }> {
    // sentence ids contain '#', which would otherwise start a URL fragment
    return this.request("PUT", `/api/sessions/${sessionId}/sentences/${encodeURIComponent(sid)}`, { text });
  }

  addComment(sessionId: string, genSid: string, text: string): Promise<{ comments: number }> {
    return this.request("POST", `/api/sessions/${sessionId}/comments`, { gen_sid: genSid, text });
  }

  exportGolden(sessionId: string): Promise<GoldenRecordOut> {
    return this.request("POST", `/api/sessions/${sessionId}/export`);
  }
}
