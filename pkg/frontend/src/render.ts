import type { ClassifyResponse } from "./api.js";

export interface ResultView {
  headline: string;
  others: string[];
  storedText: string;
}

function titleCase(label: string): string {
  return label.charAt(0).toUpperCase() + label.slice(1);
}

/** Integer percent; confidences that round to 0 display as "<1%". */
export function formatPercent(confidence: number): string {
  const pct = Math.round(confidence * 100);
  return pct === 0 ? "<1%" : `${pct}%`;
}

export function buildResultView(response: ClassifyResponse): ResultView {
  if (response.top.length < 3) {
    throw new Error(`expected 3 ranked emotions, got ${response.top.length}`);
  }
  const [primary, ...rest] = response.top;
  return {
    headline: `${titleCase(primary.label)} / ${formatPercent(primary.confidence)} confidence`,
    others: rest
      .slice(0, 2)
      .map((e) => `${titleCase(e.label)} - ${formatPercent(e.confidence)}`),
    storedText: response.stored
      ? `Image stored with your consent (record ${response.record_id}).`
      : "Image not stored.",
  };
}
