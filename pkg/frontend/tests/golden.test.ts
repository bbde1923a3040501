// The export button must yield a file that re-validates as a golden record.

import { afterEach, describe, expect, it, vi } from "vitest";

import { ReviewApi } from "../src/api";
import type { GoldenRecordOut } from "../src/types";
import { validateGoldenRecord } from "../src/types";
import fixture from "./fixtures/session.json";

const golden = fixture.golden as GoldenRecordOut;

afterEach(() => {
  vi.unstubAllGlobals();
});

describe("validateGoldenRecord", () => {
  it("accepts the fixture export", () => {
    expect(validateGoldenRecord(golden)).toEqual([]);
  });

  it("rejects a golden summary whose status was not flipped", () => {
    const tampered = structuredClone(golden);
    tampered.golden_summary.status = "silver";
    expect(validateGoldenRecord(tampered).join(";")).toContain("status");
  });

  it("rejects a summary with missing fields", () => {
    const tampered = structuredClone(golden);
    tampered.golden_summary.fields = tampered.golden_summary.fields.slice(0, 3);
    expect(validateGoldenRecord(tampered).join(";")).toContain("fields out of order");
  });

  it("rejects sentence/text mismatches", () => {
    const tampered = structuredClone(golden);
    tampered.golden_summary.fields[0].text = "被改过但句子没改";
    expect(validateGoldenRecord(tampered).join(";")).toContain("reassemble");
  });

  it("rejects non-objects", () => {
    expect(validateGoldenRecord(null)).toEqual(["not an object"]);
    expect(validateGoldenRecord("x")).not.toEqual([]);
  });
});

describe("export round-trip", () => {
  it("the downloaded export parses and re-validates", async () => {
    vi.stubGlobal(
      "fetch",
      vi.fn(async () => ({ ok: true, status: 200, json: async () => golden }) as Response),
    );
    const api = new ReviewApi();
    const exported = await api.exportGolden("session-fixed");
    const fileText = JSON.stringify(exported, null, 2);
    const reparsed = JSON.parse(fileText) as unknown;
    expect(validateGoldenRecord(reparsed)).toEqual([]);
    expect((reparsed as GoldenRecordOut).record_ref.admission_id).toBe("A");
  });
});
