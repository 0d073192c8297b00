"""Image ingestion: decode, optional crop box, bilinear resize to 224x224,
normalize to [0,1]. One shared pipeline for the trainer, evaluator, and
service."""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import DecodeError, ShapeError
from .model import INPUT_HEIGHT, INPUT_WIDTH

PNG_MAGIC = b"\x89PNG\r\n\x1a\n"
JPEG_MAGIC = b"\xff\xd8\xff"


@dataclass
class RgbImage:
    """8-bit RGB pixels as a (height, width, 3) uint8 array."""

    pixels: np.ndarray

    def __post_init__(self):
        if self.pixels.ndim != 3 or self.pixels.shape[2] != 3 or self.pixels.dtype != np.uint8:
            raise ShapeError(f"pixels must be (H, W, 3) uint8, got {self.pixels.shape} {self.pixels.dtype}")

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]


@dataclass(frozen=True)
class CropBox:
    """Axis-aligned crop rectangle: top-left offset plus positive extents."""

    x: int
    y: int
    w: int
    h: int

    def __post_init__(self):
        if self.w <= 0 or self.h <= 0:
            raise ValueError(f"crop extents must be positive, got {self.w}x{self.h}")


def sniff_format(data: bytes) -> str | None:
    """Returns 'png' or 'jpeg' if the byte stream carries those magics."""
    if data.startswith(PNG_MAGIC):
        return "png"
    if data.startswith(JPEG_MAGIC):
        return "jpeg"
    return None


def decode_image(data: bytes) -> RgbImage:
    """Decode a JPEG or PNG byte stream to 8-bit RGB.

    Alpha is composited over white; grayscale is expanded to three equal
    channels.
    """
    if sniff_format(data) is None:
        raise DecodeError("stream is neither JPEG nor PNG")
    try:
        img = Image.open(io.BytesIO(data))
        img.load()
    except (UnidentifiedImageError, OSError, ValueError) as exc:
        raise DecodeError(f"image decode failed: {exc}") from exc
    if img.mode in ("RGBA", "LA", "PA") or (img.mode == "P" and "transparency" in img.info):
        rgba = img.convert("RGBA")
        background = Image.new("RGBA", rgba.size, (255, 255, 255, 255))
        img = Image.alpha_composite(background, rgba)
    rgb = img.convert("RGB")
    return RgbImage(np.asarray(rgb, dtype=np.uint8).copy())


def crop_and_resize(image: RgbImage, box: CropBox | None = None) -> RgbImage:
    """Crop (clamped to image bounds) then bilinear-resize to 224x224.

    With no box the whole image is used. A box entirely outside the image
    is rejected.
    """
    pixels = image.pixels
    if box is not None:
        x0 = max(0, min(box.x, image.width))
        y0 = max(0, min(box.y, image.height))
        x1 = max(0, min(box.x + box.w, image.width))
        y1 = max(0, min(box.y + box.h, image.height))
        if x1 <= x0 or y1 <= y0:
            raise ValueError(
                f"crop box ({box.x},{box.y},{box.w},{box.h}) lies outside the "
                f"{image.width}x{image.height} image"
            )
        pixels = pixels[y0:y1, x0:x1]
    return RgbImage(_bilinear_resize(pixels, INPUT_HEIGHT, INPUT_WIDTH))


def _bilinear_resize(pixels: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resampling with half-pixel-centered sample coordinates."""
    in_h, in_w = pixels.shape[:2]
    if (in_h, in_w) == (out_h, out_w):
        return pixels.copy()
    sy = in_h / out_h
    sx = in_w / out_w
    ys = (np.arange(out_h) + 0.5) * sy - 0.5
    xs = (np.arange(out_w) + 0.5) * sx - 0.5
    y0 = np.clip(np.floor(ys), 0, in_h - 1).astype(np.intp)
    x0 = np.clip(np.floor(xs), 0, in_w - 1).astype(np.intp)
    y1 = np.minimum(y0 + 1, in_h - 1)
    x1 = np.minimum(x0 + 1, in_w - 1)
    wy = np.clip(ys - y0, 0.0, 1.0)[:, None, None]
    wx = np.clip(xs - x0, 0.0, 1.0)[None, :, None]

    p = pixels.astype(np.float64)
    top = p[y0][:, x0] * (1 - wx) + p[y0][:, x1] * wx
    bottom = p[y1][:, x0] * (1 - wx) + p[y1][:, x1] * wx
    out = top * (1 - wy) + bottom * wy
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)


def to_input_tensor(image: RgbImage) -> np.ndarray:
    """Map an exact 224x224 RGB image to a float32 tensor in [0,1]."""
    if (image.height, image.width) != (INPUT_HEIGHT, INPUT_WIDTH):
        raise ShapeError(
            f"expected {INPUT_HEIGHT}x{INPUT_WIDTH} geometry, got {image.height}x{image.width}"
        )
    return image.pixels.astype(np.float32) / np.float32(255.0)


def pipeline(data: bytes, box: CropBox | None = None) -> np.ndarray:
    """decode -> crop_and_resize -> to_input_tensor."""
    return to_input_tensor(crop_and_resize(decode_image(data), box))
