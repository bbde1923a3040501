import { afterEach, describe, expect, it, vi } from "vitest";

import { ApiError, ReviewApi } from "../src/api";

function mockFetch(status: number, body: unknown) {
  const calls: { url: string; init: RequestInit }[] = [];
  const fetchMock = vi.fn(async (url: string, init: RequestInit) => {
    calls.push({ url, init });
    return {
      ok: status >= 200 && status < 300,
      status,
      json: async () => body,
    } as Response;
  });
  vi.stubGlobal("fetch", fetchMock);
  return calls;
}

afterEach(() => {
  vi.unstubAllGlobals();
});

describe("ReviewApi", () => {
  it("percent-encodes sentence ids in edit paths", async () => {
    const calls = mockFetch(200, { sid: "s", text: "t", sources: [], ungrounded: true });
    const api = new ReviewApi("http://svc", "dr-li");
    await api.editSentence("abc", "ds-A#patient_info#0", "新文本");
    expect(calls[0].url).toBe("http://svc/api/sessions/abc/sentences/ds-A%23patient_info%230");
    expect(calls[0].init.method).toBe("PUT");
    expect(JSON.parse(calls[0].init.body as string)).toEqual({ text: "新文本" });
  });

  it("sends the reviewer id header on every call", async () => {
    const calls = mockFetch(201, { session_id: "s1", state: "created" });
    const api = new ReviewApi("", "dr-wang");
    await api.createSession();
    expect((calls[0].init.headers as Record<string, string>)["X-Reviewer-Id"]).toBe("dr-wang");
  });

  it("wraps server errors with their detail and status", async () => {
    mockFetch(400, { detail: "session is 'created'" });
    const api = new ReviewApi();
    const error = await api.generate("s1").catch((e: unknown) => e);
    expect(error).toBeInstanceOf(ApiError);
    expect((error as ApiError).status).toBe(400);
    expect((error as ApiError).message).toContain("session is");
  });

  it("posts comments with the sentence id in the body", async () => {
    const calls = mockFetch(200, { comments: 1 });
    const api = new ReviewApi();
    await api.addComment("s1", "ds-A#course_treatment#1", "请复核");
    expect(calls[0].url).toBe("/api/sessions/s1/comments");
    expect(JSON.parse(calls[0].init.body as string)).toEqual({
      gen_sid: "ds-A#course_treatment#1",
      text: "请复核",
    });
  });
});
