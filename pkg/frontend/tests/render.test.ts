import { describe, expect, it } from "vitest";

import type { ClassifyResponse } from "../src/api.js";
import { buildResultView, formatPercent } from "../src/render.js";

function response(top: [string, number][]): ClassifyResponse {
  return {
    top: top.map(([label, confidence]) => ({ label, confidence })),
    distribution: {},
    model_id: "abc123",
    stored: false,
    record_id: null,
  };
}

describe("formatPercent", () => {
  it("rounds to the nearest integer percent", () => {
    expect(formatPercent(0.97)).toBe("97%");
    expect(formatPercent(0.974)).toBe("97%");
    expect(formatPercent(0.975)).toBe("98%");
  });

  it("shows <1% instead of 0%", () => {
    expect(formatPercent(0.004)).toBe("<1%");
    expect(formatPercent(0)).toBe("<1%");
  });
});

describe("buildResultView", () => {
  it("renders the 97/1/1 example", () => {
    const view = buildResultView(
      response([
        ["happy", 0.97],
        ["contempt", 0.01],
        ["surprise", 0.01],
      ])
    );
    expect(view.headline).toBe("Happy / 97% confidence");
    expect(view.others).toEqual(["Contempt - 1%", "Surprise - 1%"]);
  });

  it("keeps three slots even when runners-up round to zero", () => {
    const view = buildResultView(
      response([
        ["anger", 0.995],
        ["fear", 0.003],
        ["disgust", 0.002],
      ])
    );
    expect(view.others).toEqual(["Fear - <1%", "Disgust - <1%"]);
  });

  it("rendered percentages sum to at most 100", () => {
    const view = buildResultView(
      response([
        ["happy", 0.5004],
        ["sad", 0.2504],
        ["fear", 0.2492],
      ])
    );
    const total = [view.headline, ...view.others]
      .map((line) => Number(/(\d+)%/.exec(line)?.[1] ?? 0))
      .reduce((a, b) => a + b, 0);
    expect(total).toBeLessThanOrEqual(100);
  });

  it("reports the stored flag", () => {
    const stored = { ...response([["happy", 1], ["sad", 0], ["fear", 0]]), stored: true, record_id: "r1" };
    expect(buildResultView(stored).storedText).toContain("r1");
    expect(buildResultView(response([["happy", 1], ["sad", 0], ["fear", 0]])).storedText).toBe(
      "Image not stored."
    );
  });

  it("rejects payloads with fewer than three entries", () => {
    expect(() => buildResultView(response([["happy", 1]]))).toThrow();
  });
});
