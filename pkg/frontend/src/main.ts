import { ApiError, classifyImage } from "./api.js";
import { applyDrag, type CropBox, type DragHandle, imageToPreview, previewToImage } from "./crop.js";
import { buildResultView } from "./render.js";
import {
  beginSubmission,
  canSubmit,
  type CaptureState,
  initialState,
  isAcceptedUpload,
  isCurrent,
  withImage,
} from "./state.js";

const API_BASE = (window as { FERKIT_API_BASE?: string }).FERKIT_API_BASE ?? "";

let state: CaptureState = initialState();

const el = {
  video: document.getElementById("webcam") as HTMLVideoElement,
  preview: document.getElementById("preview") as HTMLImageElement,
  overlay: document.getElementById("crop-overlay") as HTMLDivElement,
  stage: document.getElementById("stage") as HTMLDivElement,
  fileInput: document.getElementById("file-input") as HTMLInputElement,
  captureBtn: document.getElementById("capture-btn") as HTMLButtonElement,
  submitBtn: document.getElementById("submit-btn") as HTMLButtonElement,
  consent: document.getElementById("consent") as HTMLInputElement,
  banner: document.getElementById("banner") as HTMLDivElement,
  result: document.getElementById("result") as HTMLDivElement,
};

function showBanner(message: string, retry = false) {
  el.banner.textContent = message;
  el.banner.hidden = false;
  el.banner.dataset.retry = retry ? "yes" : "no";
}

function clearBanner() {
  el.banner.hidden = true;
}

function previewScale(): number {
  return state.imageWidth > 0 ? el.preview.clientWidth / state.imageWidth : 1;
}

function syncOverlay() {
  const scaled = imageToPreview(state.crop, previewScale());
  el.overlay.style.left = `${scaled.x}px`;
  el.overlay.style.top = `${scaled.y}px`;
  el.overlay.style.width = `${scaled.w}px`;
  el.overlay.style.height = `${scaled.h}px`;
  el.overlay.hidden = state.image === null;
}

function syncControls() {
  el.submitBtn.disabled = !canSubmit(state);
}

function setImage(blob: Blob, filename: string, source: "webcam" | "upload") {
  const url = URL.createObjectURL(blob);
  const probe = new Image();
  probe.onload = () => {
    state = withImage(state, blob, filename, source, probe.naturalWidth, probe.naturalHeight);
    el.preview.src = url;
    el.preview.hidden = false;
    el.video.hidden = true;
    el.result.hidden = true;
    clearBanner();
    // layout settles after the preview has its displayed size
    requestAnimationFrame(() => {
      syncOverlay();
      syncControls();
    });
  };
  probe.src = url;
}

async function startWebcam() {
  try {
    const stream = await navigator.mediaDevices.getUserMedia({ video: true });
    el.video.srcObject = stream;
    el.video.hidden = false;
    await el.video.play();
    el.captureBtn.disabled = false;
  } catch {
    showBanner("Webcam unavailable — upload a JPEG or PNG instead.");
  }
}

function captureFrame() {
  const canvas = document.createElement("canvas");
  canvas.width = el.video.videoWidth;
  canvas.height = el.video.videoHeight;
  canvas.getContext("2d")!.drawImage(el.video, 0, 0);
  canvas.toBlob((blob) => {
    if (blob) setImage(blob, "webcam.png", "webcam");
  }, "image/png");
}

function onFileChosen() {
  const file = el.fileInput.files?.[0];
  if (!file) return;
  if (!isAcceptedUpload(file)) {
    showBanner("Only JPEG and PNG files are supported.");
    return;
  }
  setImage(file, file.name, "upload");
}

// ---- crop-box drag handling ------------------------------------------------

let drag: { handle: DragHandle; startX: number; startY: number; startBox: CropBox } | null = null;

el.overlay.addEventListener("pointerdown", (event) => {
  const target = event.target as HTMLElement;
  const handle = (target.dataset.handle ?? "move") as DragHandle;
  drag = { handle, startX: event.clientX, startY: event.clientY, startBox: state.crop };
  el.overlay.setPointerCapture(event.pointerId);
  event.preventDefault();
});

el.overlay.addEventListener("pointermove", (event) => {
  if (!drag) return;
  const scale = previewScale();
  state = {
    ...state,
    crop: applyDrag(
      drag.startBox,
      drag.handle,
      (event.clientX - drag.startX) / scale,
      (event.clientY - drag.startY) / scale,
      state.imageWidth,
      state.imageHeight
    ),
  };
  syncOverlay();
});

el.overlay.addEventListener("pointerup", () => {
  drag = null;
});

// ---- submission ------------------------------------------------------------

async function submit() {
  const image = state.image;
  if (!canSubmit(state) || !image) return;
  state = beginSubmission(state);
  const submissionId = state.submissionId;
  syncControls();
  clearBanner();
  try {
    const response = await classifyImage(API_BASE, {
      image,
      filename: state.filename,
      crop: previewToImage(
        imageToPreview(state.crop, previewScale()),
        previewScale(),
        state.imageWidth,
        state.imageHeight
      ),
      consent: el.consent.checked,
      source: state.source,
    });
    if (!isCurrent(state, submissionId)) return; // superseded
    state = { ...state, status: "result" };
    const view = buildResultView(response);
    el.result.innerHTML = "";
    const headline = document.createElement("h2");
    headline.textContent = view.headline;
    const othersTitle = document.createElement("p");
    othersTitle.textContent = "Other emotions detected:";
    const list = document.createElement("ul");
    for (const line of view.others) {
      const item = document.createElement("li");
      item.textContent = line;
      list.appendChild(item);
    }
    const stored = document.createElement("p");
    stored.textContent = view.storedText;
    el.result.append(headline, othersTitle, list, stored);
    el.result.hidden = false;
  } catch (error) {
    if (!isCurrent(state, submissionId)) return;
    state = { ...state, status: "error" };
    showBanner(error instanceof ApiError ? error.message : "Something went wrong.", true);
  } finally {
    syncControls();
  }
}

el.fileInput.addEventListener("change", onFileChosen);
el.captureBtn.addEventListener("click", captureFrame);
el.submitBtn.addEventListener("click", submit);
el.banner.addEventListener("click", () => {
  if (el.banner.dataset.retry === "yes") void submit();
});
window.addEventListener("resize", syncOverlay);

void startWebcam();
syncControls();
