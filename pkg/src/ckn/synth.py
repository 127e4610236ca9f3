"""Synthetic patch-retrieval benchmark: textured bases and jittered copies."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .maps import Keypoint, extract_patch, load_image, save_image
from .retrieval import ManifestEntry, write_manifest


@dataclass(frozen=True)
class SyntheticBenchSpec:
    n_bases: int = 50
    n_copies: int = 10
    max_shift: float = 2.0
    max_rotation: float = math.radians(5.0)
    max_scale: float = 0.0
    max_brightness: float = 0.1
    side: int = 51
    spacing: int = 4
    seed: int = 0

    def __post_init__(self):
        if self.n_bases < 1 or self.n_copies < 1:
            raise ValueError("need at least one base and one copy")
        for name in ("max_shift", "max_rotation", "max_scale", "max_brightness"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.spacing < 1:
            raise ValueError("spacing must be >= 1")
        if self.max_scale >= 1:
            raise ValueError("max_scale must be < 1")

    @property
    def base_size(self) -> int:
        return 2 * self.side + 1


def _smooth_noise(rng, size: int, cell: int) -> np.ndarray:
    """Value noise: coarse random grid upsampled bilinearly to size x size x 3."""
    n = size // cell + 2
    coarse = rng.random((n, n, 3))
    t = np.arange(size) / cell
    i = np.floor(t).astype(int)
    f = (t - i)[:, None]
    rows = coarse[i] * (1 - f[..., None]) + coarse[i + 1] * f[..., None]
    g = (t - i)[None, :, None]
    return rows[:, i] * (1 - g) + rows[:, i + 1] * g


def make_scene(rng: np.random.Generator, height: int, width: int) -> np.ndarray:
    """Procedural RGB texture: multi-scale value noise plus oriented edges and bars."""
    size = max(height, width)
    img = (0.35 * _smooth_noise(rng, size, 24) + 0.25 * _smooth_noise(rng, size, 6)
           + 0.15 * _smooth_noise(rng, size, 2))[:height, :width]
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    n_edges = max(3, int(height * width / 900))
    for _ in range(n_edges):
        theta = rng.uniform(0, 2 * np.pi)
        cx, cy = rng.uniform(0, width), rng.uniform(0, height)
        dist = (xx - cx) * np.cos(theta) + (yy - cy) * np.sin(theta)
        along = -(xx - cx) * np.sin(theta) + (yy - cy) * np.cos(theta)
        reach = rng.uniform(8, 40)
        envelope = np.exp(-(along / reach) ** 2 - ((dist) / (2 * reach)) ** 2)
        if rng.random() < 0.5:
            shape = np.tanh(dist / 1.0)
        else:
            shape = np.exp(-(dist / rng.uniform(1.0, 3.0)) ** 2)
        color = rng.uniform(-0.35, 0.35, size=3)
        img = img + (envelope * shape)[..., None] * color
    img = img - img.min()
    return np.clip(img / max(img.max(), 1e-12), 0.0, 1.0)


def make_base(rng: np.random.Generator, size: int) -> np.ndarray:
    return make_scene(rng, size, size)


def jitter_keypoint(rng, center: float, spec: SyntheticBenchSpec) -> tuple[Keypoint, float]:
    r = spec.max_shift * math.sqrt(rng.random())
    phi = rng.uniform(0, 2 * np.pi)
    rot = rng.uniform(-spec.max_rotation, spec.max_rotation)
    scale = 1.0 + rng.uniform(-spec.max_scale, spec.max_scale)
    bright = 1.0 + rng.uniform(-spec.max_brightness, spec.max_brightness)
    return Keypoint(center + r * math.cos(phi), center + r * math.sin(phi), scale, rot), bright


def make_dataset(out_dir, spec: SyntheticBenchSpec) -> list[ManifestEntry]:
    """Write bases/, patches/ and manifest.tsv; the first copy of each class is its query.

    Bases are windows of one shared scene centered ``spec.spacing`` pixels
    apart, so neighbouring classes overlap and look alike.
    """
    out = Path(out_dir)
    (out / "bases").mkdir(parents=True, exist_ok=True)
    (out / "patches").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(spec.seed)
    size = spec.base_size
    half = size // 2
    cols = math.ceil(math.sqrt(spec.n_bases))
    rows = math.ceil(spec.n_bases / cols)
    scene = make_scene(rng, 2 * half + spec.spacing * (rows - 1) + 1,
                       2 * half + spec.spacing * (cols - 1) + 1)
    center = float(half)
    entries = []
    for c in range(spec.n_bases):
        r, q = divmod(c, cols)
        y0, x0 = r * spec.spacing, q * spec.spacing
        base = scene[y0:y0 + size, x0:x0 + size]
        save_image(out / "bases" / f"c{c:04d}.png", base)
        for j in range(spec.n_copies):
            kp, bright = jitter_keypoint(rng, center, spec)
            px = np.clip(extract_patch(base, kp, spec.side).pixels * bright, 0.0, 1.0)
            rel = f"patches/c{c:04d}_{j:03d}.png"
            save_image(out / rel, px)
            entries.append(ManifestEntry(rel, f"c{c:04d}", "query" if j == 0 else "target"))
    write_manifest(out / "manifest.tsv", entries)
    return entries


def load_patches(manifest_path, entries=None) -> list[np.ndarray]:
    """Load every patch named in a manifest; paths are relative to the manifest."""
    from .retrieval import read_manifest
    root = Path(manifest_path).parent
    entries = entries if entries is not None else read_manifest(manifest_path)
    return [load_image(root / e.path) for e in entries]


def translation_curve(encode, bases: Sequence[np.ndarray], magnitudes: Sequence[float],
                      side: int = 51, seed: int = 0) -> list[tuple[float, float]]:
    """Mean l2 distance between the centered patch descriptor and shifted ones.

    Each base gets one random direction; every magnitude shifts along it.
    """
    rng = np.random.default_rng(seed)
    sums = np.zeros(len(magnitudes))
    for base in bases:
        c = (base.shape[0] - 1) / 2.0
        ref = encode(extract_patch(base, Keypoint(c, c), side).pixels)
        phi = rng.uniform(0, 2 * np.pi)
        for k, t in enumerate(magnitudes):
            kp = Keypoint(c + t * math.cos(phi), c + t * math.sin(phi))
            sums[k] += np.linalg.norm(encode(extract_patch(base, kp, side).pixels) - ref)
    return [(float(t), float(s / len(bases))) for t, s in zip(magnitudes, sums)]


def write_curve_csv(path, curve, label: str = "translation_px") -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow([label, "mean_distance"])
        for t, d in curve:
            w.writerow([repr(t), repr(d)])
