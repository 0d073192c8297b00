export interface CropBox {
  x: number;
  y: number;
  w: number;
  h: number;
}

export function fullImageBox(imageWidth: number, imageHeight: number): CropBox {
  return { x: 0, y: 0, w: imageWidth, h: imageHeight };
}

/** Clamp a box so it stays inside the image with at least a 1x1 extent. */
export function clampBox(box: CropBox, imageWidth: number, imageHeight: number): CropBox {
  const w = Math.min(Math.max(1, Math.round(box.w)), imageWidth);
  const h = Math.min(Math.max(1, Math.round(box.h)), imageHeight);
  const x = Math.min(Math.max(0, Math.round(box.x)), imageWidth - w);
  const y = Math.min(Math.max(0, Math.round(box.y)), imageHeight - h);
  return { x, y, w, h };
}

/**
 * Convert an overlay box drawn in preview (CSS) pixels into original-image
 * pixel coordinates. `scale` is previewWidth / imageWidth, so a preview
 * shown at 50% has scale 0.5 and a 100-px overlay maps to 200 image pixels.
 */
export function previewToImage(
  box: CropBox,
  scale: number,
  imageWidth: number,
  imageHeight: number
): CropBox {
  if (!(scale > 0)) throw new Error(`invalid preview scale ${scale}`);
  return clampBox(
    {
      x: box.x / scale,
      y: box.y / scale,
      w: box.w / scale,
      h: box.h / scale,
    },
    imageWidth,
    imageHeight
  );
}

export function imageToPreview(box: CropBox, scale: number): CropBox {
  return {
    x: box.x * scale,
    y: box.y * scale,
    w: box.w * scale,
    h: box.h * scale,
  };
}

export type DragHandle = "move" | "nw" | "ne" | "sw" | "se";

/** Apply a drag gesture (in image pixels) to a box and clamp the result. */
export function applyDrag(
  box: CropBox,
  handle: DragHandle,
  dx: number,
  dy: number,
  imageWidth: number,
  imageHeight: number
): CropBox {
  let { x, y, w, h } = box;
  if (handle === "move") {
    x += dx;
    y += dy;
  } else {
    if (handle === "nw" || handle === "sw") {
      x += dx;
      w -= dx;
    } else {
      w += dx;
    }
    if (handle === "nw" || handle === "ne") {
      y += dy;
      h -= dy;
    } else {
      h += dy;
    }
  }
  return clampBox({ x, y, w, h }, imageWidth, imageHeight);
}
