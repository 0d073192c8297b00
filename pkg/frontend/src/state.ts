import { type CropBox, fullImageBox } from "./crop.js";

export type SubmissionStatus = "idle" | "in-flight" | "result" | "error";

export interface CaptureState {
  image: Blob | null;
  filename: string;
  source: "webcam" | "upload";
  imageWidth: number;
  imageHeight: number;
  crop: CropBox;
  consent: boolean;
  status: SubmissionStatus;
  /** Monotonic id of the latest submission; stale responses are discarded. */
  submissionId: number;
}

export function initialState(): CaptureState {
  return {
    image: null,
    filename: "",
    source: "upload",
    imageWidth: 0,
    imageHeight: 0,
    crop: { x: 0, y: 0, w: 0, h: 0 },
    consent: false,
    status: "idle",
    submissionId: 0,
  };
}

export function withImage(
  state: CaptureState,
  image: Blob,
  filename: string,
  source: "webcam" | "upload",
  width: number,
  height: number
): CaptureState {
  return {
    ...state,
    image,
    filename,
    source,
    imageWidth: width,
    imageHeight: height,
    crop: fullImageBox(width, height),
    status: "idle",
  };
}

const ACCEPTED_TYPES = ["image/png", "image/jpeg"];

export function isAcceptedUpload(file: { type: string }): boolean {
  return ACCEPTED_TYPES.includes(file.type);
}

export function canSubmit(state: CaptureState): boolean {
  return state.image !== null && state.status !== "in-flight";
}

export function beginSubmission(state: CaptureState): CaptureState {
  return { ...state, status: "in-flight", submissionId: state.submissionId + 1 };
}

/** True when the response belongs to the submission still being awaited. */
export function isCurrent(state: CaptureState, submissionId: number): boolean {
  return state.submissionId === submissionId;
}
