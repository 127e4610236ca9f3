"""Images, patches and keypoint geometry.

Images and feature maps are plain float64 arrays of shape (height, width,
channels). Image values live in [0, 1].
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, NamedTuple, Optional, Sequence

import numpy as np
from PIL import Image as PILImage, UnidentifiedImageError

# luminance weights used whenever a color patch must become gray
LUMA = np.array([0.299, 0.587, 0.114])

DEFAULT_SIDE = 51


class RasterError(ValueError):
    pass


class Keypoint(NamedTuple):
    x: float
    y: float
    scale: float = 1.0
    rotation: float = 0.0


@dataclass(frozen=True)
class Patch:
    pixels: np.ndarray
    source: Optional[Keypoint] = None
    image_id: str = ""

    @property
    def side(self) -> int:
        return self.pixels.shape[0]


def as_image(values) -> np.ndarray:
    """Coerce to a (h, w, c) float array; 2-D input becomes single channel."""
    img = np.asarray(values, dtype=np.float64)
    if img.ndim == 2:
        img = img[:, :, None]
    if img.ndim != 3 or img.shape[2] not in (1, 3):
        raise ValueError(f"expected (h, w) or (h, w, 1|3) array, got shape {img.shape}")
    if img.shape[0] < 1 or img.shape[1] < 1:
        raise ValueError("image must be at least 1x1")
    return img


def load_image(path) -> np.ndarray:
    path = Path(path)
    try:
        with PILImage.open(path) as im:
            im.load()
            mode = im.mode
            if mode in ("P", "RGBA", "CMYK", "YCbCr"):
                im = im.convert("RGB")
            elif mode == "LA":
                im = im.convert("L")
            elif mode == "1":
                im = im.convert("L")
            if im.mode not in ("L", "RGB"):
                raise RasterError(f"{path}: unsupported or corrupt raster (mode {mode})")
            arr = np.asarray(im, dtype=np.uint8)
    except (OSError, UnidentifiedImageError, SyntaxError) as exc:
        raise RasterError(f"{path}: unsupported or corrupt raster ({exc})") from exc
    return as_image(arr.astype(np.float64) / 255.0)


def save_image(path, image: np.ndarray) -> None:
    img = as_image(image)
    data = np.rint(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)
    if data.shape[2] == 1:
        data = data[:, :, 0]
    PILImage.fromarray(data).save(Path(path))


def to_gray(image: np.ndarray) -> np.ndarray:
    img = as_image(image)
    if img.shape[2] == 1:
        return img[:, :, 0]
    return img @ LUMA


def _window_offsets(side: int, scale: float, rotation: float):
    half = (side - 1) / 2.0
    grid = (np.arange(side, dtype=np.float64) - half) * scale
    dx, dy = np.meshgrid(grid, grid)
    c, s = math.cos(rotation), math.sin(rotation)
    return c * dx - s * dy, s * dx + c * dy


def bilinear_clamped(image: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Sample at real coordinates; coordinates outside the image snap to its border."""
    h, w = image.shape[:2]
    xs = np.clip(xs, 0.0, w - 1.0)
    ys = np.clip(ys, 0.0, h - 1.0)
    x0 = np.minimum(np.floor(xs).astype(np.intp), w - 1)
    y0 = np.minimum(np.floor(ys).astype(np.intp), h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = (xs - x0)[..., None]
    fy = (ys - y0)[..., None]
    top = image[y0, x0] * (1.0 - fx) + image[y0, x1] * fx
    bottom = image[y1, x0] * (1.0 - fx) + image[y1, x1] * fx
    return top * (1.0 - fy) + bottom * fy


def extract_patch(image: np.ndarray, keypoint: Keypoint, side: int = DEFAULT_SIDE,
                  image_id: str = "") -> Patch:
    """Resample the scaled and rotated window around ``keypoint`` to side x side.

    ``keypoint.scale`` is the spacing, in image pixels, between adjacent patch
    samples, so scale 1 with an integer center is a plain crop.
    """
    img = as_image(image)
    if side < 3 or side % 2 == 0:
        raise ValueError(f"patch side must be odd and >= 3, got {side}")
    if not keypoint.scale > 0:
        raise ValueError(f"keypoint scale must be positive, got {keypoint.scale}")
    h, w = img.shape[:2]
    ox, oy = _window_offsets(side, keypoint.scale, keypoint.rotation)
    xs = keypoint.x + ox
    ys = keypoint.y + oy
    if xs.max() < 0 or xs.min() > w - 1 or ys.max() < 0 or ys.min() > h - 1:
        raise ValueError(f"extraction window around {keypoint} lies outside the {w}x{h} image")
    pixels = bilinear_clamped(img, xs, ys)
    pixels.setflags(write=False)
    return Patch(pixels=pixels, source=keypoint, image_id=image_id)


def dense_keypoints(image: np.ndarray, stride: int = 8, scales: Sequence[float] = (1.0,),
                    side: int = DEFAULT_SIDE) -> list[Keypoint]:
    """Regular grid of keypoints whose whole sampling window fits in the image.

    Sorted by (scale, y, x).
    """
    if stride < 1:
        raise ValueError("stride must be >= 1")
    img = as_image(image)
    h, w = img.shape[:2]
    out = []
    for scale in sorted(set(float(s) for s in scales)):
        if scale <= 0:
            raise ValueError(f"scales must be positive, got {scale}")
        half = (side - 1) / 2.0 * scale
        ys = [y for y in range(0, h, stride) if y - half >= 0 and y + half <= h - 1]
        xs = [x for x in range(0, w, stride) if x - half >= 0 and x + half <= w - 1]
        out.extend(Keypoint(float(x), float(y), scale, 0.0) for y in ys for x in xs)
    return out


def read_keypoints(path) -> list[Keypoint]:
    """One keypoint per line: ``x y scale rotation``; blank lines and # comments skipped."""
    kps = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 4:
            raise ValueError(f"{path}:{lineno}: expected 'x y scale rotation', got {line!r}")
        x, y, scale, rot = map(float, parts)
        if scale <= 0:
            raise ValueError(f"{path}:{lineno}: scale must be positive")
        kps.append(Keypoint(x, y, scale, rot))
    return kps


def write_keypoints(path, keypoints: Iterable[Keypoint]) -> None:
    lines = [f"{k.x!r} {k.y!r} {k.scale!r} {k.rotation!r}" for k in keypoints]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")
