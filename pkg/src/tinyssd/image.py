"""PPM (P6) image ingestion, bilinear resizing, network input preprocessing,
and detection-box rendering."""

from __future__ import annotations

import numpy as np

from .errors import FormatError, ShapeError
from .tensor import Tensor

INPUT_SIZE = 300
# Per-channel means subtracted after the RGB -> BGR swap.
BGR_MEANS = (104.0, 117.0, 123.0)


def _read_ppm_tokens(raw: bytes, path):
    """Yield (token, offset) for the three header fields after the magic,
    skipping whitespace and # comments."""
    pos = 2
    found = 0
    while found < 3:
        while pos < len(raw) and raw[pos:pos + 1].isspace():
            pos += 1
        if pos < len(raw) and raw[pos:pos + 1] == b"#":
            while pos < len(raw) and raw[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos:pos + 1].isspace():
            pos += 1
        if pos == start:
            raise FormatError(f"{path}: truncated header at byte {start}")
        yield raw[start:pos], start
        found += 1
    # exactly one whitespace byte separates the header from the pixel data
    yield None, pos + 1


def read_ppm(path) -> np.ndarray:
    """Read a binary P6 image into an (h, w, 3) uint8 array."""
    with open(path, "rb") as f:
        raw = f.read()
    if raw[:2] != b"P6":
        raise FormatError(f"{path}: not a P6 PPM (magic {raw[:2]!r} at byte 0)")
    fields = []
    for token, offset in _read_ppm_tokens(raw, path):
        if token is None:
            data_start = offset
            break
        try:
            fields.append(int(token))
        except ValueError:
            raise FormatError(f"{path}: non-numeric header field {token!r} at byte {offset}") from None
    width, height, maxval = fields
    if width < 1 or height < 1:
        raise FormatError(f"{path}: non-positive image size {width}x{height}")
    if maxval != 255:
        raise FormatError(f"{path}: only 8-bit PPM supported, maxval {maxval}")
    need = width * height * 3
    data = raw[data_start:]
    if len(data) < need:
        raise FormatError(
            f"{path}: pixel data ends at byte {len(raw)}, expected {data_start + need}"
        )
    return np.frombuffer(data, dtype=np.uint8, count=need).reshape(height, width, 3).copy()


def write_ppm(path, pixels: np.ndarray) -> None:
    pixels = np.asarray(pixels)
    if pixels.ndim != 3 or pixels.shape[2] != 3:
        raise ShapeError(f"PPM writer needs (h, w, 3) pixels, got {pixels.shape}")
    h, w, _ = pixels.shape
    with open(path, "wb") as f:
        f.write(f"P6\n{w} {h}\n255\n".encode())
        f.write(np.clip(pixels, 0, 255).astype(np.uint8).tobytes())


def bilinear_resize(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Pixel-center-aligned bilinear resampling; identity when sizes match."""
    img = np.asarray(img, dtype=np.float64)
    in_h, in_w = img.shape[:2]
    ys = (np.arange(out_h) + 0.5) * (in_h / out_h) - 0.5
    xs = (np.arange(out_w) + 0.5) * (in_w / out_w) - 0.5
    y0 = np.floor(ys).astype(np.int64)
    x0 = np.floor(xs).astype(np.int64)
    fy = ys - y0
    fx = xs - x0
    y0c = np.clip(y0, 0, in_h - 1)
    y1c = np.clip(y0 + 1, 0, in_h - 1)
    x0c = np.clip(x0, 0, in_w - 1)
    x1c = np.clip(x0 + 1, 0, in_w - 1)
    if img.ndim == 3:
        fy = fy[:, None, None]
        fx = fx[None, :, None]
    else:
        fy = fy[:, None]
        fx = fx[None, :]
    top = img[y0c][:, x0c] * (1 - fx) + img[y0c][:, x1c] * fx
    bottom = img[y1c][:, x0c] * (1 - fx) + img[y1c][:, x1c] * fx
    return top * (1 - fy) + bottom * fy


def preprocess_image(pixels: np.ndarray) -> Tensor:
    """RGB 8-bit pixels of any size -> 1x3x300x300 network input.

    Bilinear resize, RGB -> BGR channel swap, per-channel mean subtraction.
    """
    pixels = np.asarray(pixels)
    if pixels.ndim != 3 or pixels.shape[2] != 3:
        raise ShapeError(f"expected (h, w, 3) RGB pixels, got {pixels.shape}")
    resized = bilinear_resize(pixels.astype(np.float64), INPUT_SIZE, INPUT_SIZE)
    bgr = resized[:, :, ::-1] - np.asarray(BGR_MEANS)
    return Tensor(bgr.transpose(2, 0, 1)[None].astype(np.float32))


# One fixed RGB color per VOC class id (1..20), cycling a 10-color palette.
_PALETTE = (
    (230, 25, 75), (60, 180, 75), (255, 225, 25), (0, 130, 200), (245, 130, 48),
    (145, 30, 180), (70, 240, 240), (240, 50, 230), (210, 245, 60), (170, 110, 40),
)


def annotate(pixels: np.ndarray, detections) -> np.ndarray:
    """Burn 2-pixel box outlines into a copy of the image."""
    out = np.asarray(pixels).copy()
    h, w = out.shape[:2]
    for det in detections:
        color = _PALETTE[(det.class_id - 1) % len(_PALETTE)]
        x0 = int(round(det.box[0] * (w - 1)))
        y0 = int(round(det.box[1] * (h - 1)))
        x1 = int(round(det.box[2] * (w - 1)))
        y1 = int(round(det.box[3] * (h - 1)))
        for t in range(2):
            xa, ya = max(x0 + t, 0), max(y0 + t, 0)
            xb, yb = min(x1 - t, w - 1), min(y1 - t, h - 1)
            if xb < xa or yb < ya:
                break
            out[ya, xa:xb + 1] = color
            out[yb, xa:xb + 1] = color
            out[ya:yb + 1, xa] = color
            out[ya:yb + 1, xb] = color
    return out
