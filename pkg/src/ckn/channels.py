"""Initial (layer-0) maps for the three CKN input types."""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .maps import Patch, as_image, to_gray

EIG_FLOOR = 1e-8


class InputType(enum.IntEnum):
    RAW = 0
    WHITE = 1
    GRAD = 2

    @classmethod
    def parse(cls, name) -> "InputType":
        if isinstance(name, InputType):
            return name
        try:
            return cls[str(name).strip().upper()]
        except KeyError:
            raise ValueError(f"unknown input type {name!r}; expected raw, white or grad") from None


def _pixels(patch) -> np.ndarray:
    return as_image(patch.pixels if isinstance(patch, Patch) else patch)


def to_raw_map(patch) -> np.ndarray:
    img = _pixels(patch)
    if img.shape[2] != 3:
        raise ValueError("raw input requires an RGB patch")
    return img.copy()


def to_grad_map(patch) -> np.ndarray:
    """(Gx, Gy) of the gray patch: centered differences, one-sided at borders."""
    gray = to_gray(_pixels(patch))
    h, w = gray.shape
    gx = np.gradient(gray, axis=1) if w > 1 else np.zeros_like(gray)
    gy = np.gradient(gray, axis=0) if h > 1 else np.zeros_like(gray)
    return np.stack([gx, gy], axis=-1)


def subpatch_matrix(fmap: np.ndarray, side: int) -> np.ndarray:
    """All valid side x side sub-patches as rows, shape (h', w', side*side*c).

    Each row is laid out (dy, dx, channel) in C order.
    """
    h, w, c = fmap.shape
    if side < 1 or side > h or side > w:
        raise ValueError(f"sub-patch side {side} does not fit a {h}x{w} map")
    win = np.lib.stride_tricks.sliding_window_view(fmap, (side, side), axis=(0, 1))
    # sliding_window_view puts the window axes last: (h', w', c, side, side)
    win = win.transpose(0, 1, 3, 4, 2)
    return win.reshape(h - side + 1, w - side + 1, side * side * c)


def remove_mean_color(rows: np.ndarray, channels: int) -> np.ndarray:
    shaped = rows.reshape(rows.shape[:-1] + (-1, channels))
    return (shaped - shaped.mean(axis=-2, keepdims=True)).reshape(rows.shape)


@dataclass(frozen=True)
class WhitenModel:
    """Uncentered PCA whitening of mean-color-removed sub-patches.

    ``basis`` columns are eigenvectors; ``scales`` are 1/sqrt(eigenvalue).
    """
    basis: np.ndarray
    scales: np.ndarray
    channels: int
    subpatch_side: int
    remove_mean: bool = True
    source: str = "per-map"

    @property
    def dim(self) -> int:
        return self.basis.shape[0]

    def transform(self, rows: np.ndarray) -> np.ndarray:
        if self.remove_mean:
            rows = remove_mean_color(rows, self.channels)
        return (rows @ self.basis) * self.scales


def _fit_rows(rows: np.ndarray, channels: int, side: int, source: str) -> WhitenModel:
    dim = rows.shape[1]
    centered = remove_mean_color(rows, channels)
    cov = centered.T @ centered / centered.shape[0]
    evals, evecs = np.linalg.eigh(cov)
    if evals.max() <= EIG_FLOOR:
        return WhitenModel(np.eye(dim), np.ones(dim), channels, side, True, source)
    order = np.argsort(evals)[::-1]
    evals, evecs = evals[order], evecs[:, order]
    scales = 1.0 / np.sqrt(np.maximum(evals, EIG_FLOOR))
    return WhitenModel(evecs, scales, channels, side, True, source)


def whiten_fit(fmap: np.ndarray, subpatch_side: int) -> WhitenModel:
    """Fit whitening on every sub-patch of one layer-0 map."""
    fmap = np.asarray(fmap, dtype=np.float64)
    if subpatch_side < 2:
        raise ValueError("whitening sub-patch side must be >= 2")
    c = fmap.shape[2]
    rows = subpatch_matrix(fmap, subpatch_side).reshape(-1, subpatch_side * subpatch_side * c)
    if rows.shape[0] < rows.shape[1]:
        raise ValueError(f"map yields {rows.shape[0]} sub-patches, need at least {rows.shape[1]}")
    return _fit_rows(rows, c, subpatch_side, "per-map")


def whiten_fit_global(fmaps, subpatch_side: int) -> WhitenModel:
    """One whitening model shared by many maps (faster, not the default)."""
    rows = [subpatch_matrix(np.asarray(m, dtype=np.float64), subpatch_side).reshape(
        -1, subpatch_side * subpatch_side * m.shape[2]) for m in fmaps]
    if not rows:
        raise ValueError("no maps to fit whitening on")
    c = np.asarray(fmaps[0]).shape[2]
    return _fit_rows(np.concatenate(rows), c, subpatch_side, "global")


def whiten_apply(fmap: np.ndarray, model: WhitenModel, subpatch_side: int, z) -> np.ndarray:
    """Centered and whitened sub-patch whose top-left corner is ``z = (row, col)``."""
    fmap = np.asarray(fmap, dtype=np.float64)
    if subpatch_side != model.subpatch_side:
        raise ValueError("sub-patch side differs from the fitted model")
    i, j = z
    h, w = fmap.shape[:2]
    if not (0 <= i <= h - subpatch_side and 0 <= j <= w - subpatch_side):
        raise ValueError(f"sub-patch location {z} is outside the valid {h - subpatch_side + 1}x"
                         f"{w - subpatch_side + 1} grid")
    row = fmap[i:i + subpatch_side, j:j + subpatch_side].reshape(1, -1)
    return model.transform(row)[0]


def whitened_subpatches(fmap: np.ndarray, model: WhitenModel) -> np.ndarray:
    rows = subpatch_matrix(np.asarray(fmap, dtype=np.float64), model.subpatch_side)
    return model.transform(rows)
