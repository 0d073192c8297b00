import type { CropBox } from "./crop.js";

export interface TopEntry {
  label: string;
  confidence: number;
}

export interface ClassifyResponse {
  top: TopEntry[];
  distribution: Record<string, number>;
  model_id: string;
  stored: boolean;
  record_id: string | null;
}

export class ApiError extends Error {
  constructor(
    message: string,
    public readonly status: number | null
  ) {
    super(message);
  }
}

export interface ClassifyRequest {
  image: Blob;
  filename: string;
  crop: CropBox;
  consent: boolean;
  source: "webcam" | "upload";
  userLabel?: string;
}

export async function classifyImage(
  baseUrl: string,
  request: ClassifyRequest,
  fetchFn: typeof fetch = fetch
): Promise<ClassifyResponse> {
  const meta: Record<string, unknown> = {
    crop: request.crop,
    consent: request.consent,
    source: request.source,
  };
  if (request.userLabel) meta.user_label = request.userLabel;

  const form = new FormData();
  form.append("image", request.image, request.filename);
  form.append("meta", JSON.stringify(meta));

  let response: Response;
  try {
    response = await fetchFn(`${baseUrl}/api/classify`, {
      method: "POST",
      body: form,
    });
  } catch {
    throw new ApiError("Could not reach the emotion service. Is it running?", null);
  }
  if (!response.ok) {
    const message =
      response.status >= 500
        ? "The emotion service is unavailable right now. Try again in a moment."
        : response.status === 413
          ? "That image is too large to upload."
          : "The image could not be processed. Try a different JPEG or PNG.";
    throw new ApiError(message, response.status);
  }
  return (await response.json()) as ClassifyResponse;
}

export async function fetchHealth(
  baseUrl: string,
  fetchFn: typeof fetch = fetch
): Promise<{ status: string; active_model: string | null; stored_image_count: number }> {
  const response = await fetchFn(`${baseUrl}/api/health`);
  if (!response.ok) throw new ApiError("health check failed", response.status);
  return response.json();
}
