"""Forward encoding of patches through a trained layer stack."""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .channels import (InputType, WhitenModel, subpatch_matrix, to_grad_map, to_raw_map,
                       whiten_fit)
from .maps import Patch, as_image
from .trainer import LayerParams

# (subpatch, subsample, filters) per layer, for 51x51 inputs
REFERENCE_ARCHITECTURES = {
    InputType.RAW: [(5, 5, 512)],
    InputType.WHITE: [(3, 3, 128), (2, 2, 512)],
    InputType.GRAD: [(1, 3, 16), (4, 2, 1024)],
}
REFERENCE_DIMS = {InputType.RAW: 41472, InputType.WHITE: 32768, InputType.GRAD: 50176}


@dataclass(frozen=True)
class CknModel:
    input_type: InputType
    layers: tuple
    input_side: int = 51
    whiten: Optional[WhitenModel] = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "input_type", InputType.parse(self.input_type))
        object.__setattr__(self, "layers", tuple(self.layers))
        if not self.layers:
            raise ValueError("a model needs at least one layer")
        first = {InputType.RAW: 3, InputType.WHITE: 3, InputType.GRAD: 2}[self.input_type]
        if self.layers[0].in_channels != first:
            raise ValueError(f"first layer expects {self.layers[0].in_channels} channels, "
                             f"{self.input_type.name} input provides {first}")
        if self.input_type is InputType.GRAD and self.layers[0].subpatch != 1:
            raise ValueError("the analytic gradient layer uses 1x1 sub-patches")
        for k in range(1, len(self.layers)):
            if self.layers[k].in_channels != self.layers[k - 1].p:
                raise ValueError(f"layer {k + 1} expects {self.layers[k].in_channels} channels, "
                                 f"layer {k} produces {self.layers[k - 1].p}")

    @property
    def architecture(self) -> list[tuple[int, int, int]]:
        return [(l.subpatch, l.subsample, l.p) for l in self.layers]

    @property
    def output_shape(self) -> tuple[int, int, int]:
        return output_shape(self.input_side, self.architecture)

    @property
    def dim(self) -> int:
        h, w, c = self.output_shape
        return h * w * c


def pooled_size(n: int, subsample: int) -> int:
    """Number of pooling centers floor(s/2), floor(s/2)+s, ... below n."""
    start = subsample // 2
    return 0 if n <= start else (n - start + subsample - 1) // subsample


def output_shape(side: int, architecture: Sequence[tuple[int, int, int]]):
    n = side
    p = None
    for e, s, p in architecture:
        n = pooled_size(n - e + 1, s)
    return n, n, p


def pooling_matrix(n: int, subsample: int, beta: float) -> np.ndarray:
    """Rows are unnormalized 1-D Gaussian weights exp(-d^2/beta^2), truncated at ceil(2 beta)."""
    centers = subsample // 2 + subsample * np.arange(pooled_size(n, subsample))
    d = np.arange(n)[None, :] - centers[:, None]
    P = np.exp(-(d * d) / (beta * beta))
    P[np.abs(d) > math.ceil(2.0 * beta)] = 0.0
    return P


def gaussian_pool(fmap: np.ndarray, subsample: int, beta: float) -> np.ndarray:
    """Separable Gaussian pooling of an (h, w, c) map, sampled every ``subsample`` cells."""
    Py = pooling_matrix(fmap.shape[0], subsample, beta)
    Px = pooling_matrix(fmap.shape[1], subsample, beta)
    tmp = np.tensordot(Py, fmap, axes=(1, 0))
    return np.ascontiguousarray(np.tensordot(Px, tmp, axes=(1, 1)).transpose(1, 0, 2))


def intermediate_map(rows: np.ndarray, params: LayerParams) -> np.ndarray:
    """||P|| exp(W^T P/||P|| + b) for each row P (zero where P = 0)."""
    norms = np.linalg.norm(rows, axis=-1, keepdims=True)
    safe = np.where(norms > 0, norms, 1.0)
    W = params.W.astype(np.float64)
    b = params.b.astype(np.float64)
    return np.where(norms > 0, norms * np.exp((rows / safe) @ W + b), 0.0)


def encode_layer(fmap: np.ndarray, params: LayerParams, transform=None) -> np.ndarray:
    """Sub-patches, contrast normalization, exponential features, Gaussian pooling.

    ``transform`` optionally maps raw sub-patch rows to the layer input (whitening).
    """
    fmap = np.asarray(fmap, dtype=np.float64)
    if fmap.ndim != 3 or fmap.shape[2] != params.in_channels:
        raise ValueError(f"map with shape {fmap.shape} does not match a layer expecting "
                         f"{params.in_channels} channels")
    rows = subpatch_matrix(fmap, params.subpatch)
    if transform is not None:
        rows = transform(rows)
    if rows.shape[-1] != params.q:
        raise ValueError(f"sub-patch dimension {rows.shape[-1]} != layer input {params.q}")
    return gaussian_pool(intermediate_map(rows, params), params.subsample, params.beta)


def grad_alpha(p1: int) -> float:
    """Width making adjacent orientation bins overlap: distance between neighbouring bin centers."""
    t = 2.0 * math.pi / p1
    return math.sqrt((1.0 - math.cos(t)) ** 2 + math.sin(t) ** 2)


def grad_orientations(p1: int) -> np.ndarray:
    return 2.0 * np.pi * np.arange(1, p1 + 1) / p1


def grad_layer_params(p1: int = 16, subsample: int = 3, beta: Optional[float] = None
                      ) -> LayerParams:
    """The analytic orientation layer written as exponential features."""
    a = grad_alpha(p1)
    th = grad_orientations(p1)
    W = np.vstack([np.cos(th), np.sin(th)]) / (a * a)
    b = np.full(p1, -1.0 / (a * a))
    return LayerParams(W=W, b=b, alpha=a, subpatch=1, subsample=subsample,
                       beta=float(subsample if beta is None else beta), in_channels=2)


def grad_soft_bins(grad_map: np.ndarray, p1: int, alpha1: Optional[float] = None) -> np.ndarray:
    """Pre-pooling orientation responses rho * exp(-|u_theta_j - u|^2 / (2 alpha1^2))."""
    g = np.asarray(grad_map, dtype=np.float64)
    if g.ndim != 3 or g.shape[2] != 2:
        raise ValueError(f"gradient map must have 2 channels, got shape {g.shape}")
    if p1 < 2:
        raise ValueError("need at least 2 orientations")
    a = grad_alpha(p1) if alpha1 is None else alpha1
    rho = np.hypot(g[..., 0], g[..., 1])
    safe = np.where(rho > 0, rho, 1.0)
    c = g[..., 0] / safe
    s = g[..., 1] / safe
    th = grad_orientations(p1)
    d2 = (np.cos(th) - c[..., None]) ** 2 + (np.sin(th) - s[..., None]) ** 2
    out = rho[..., None] * np.exp(-d2 / (2.0 * a * a))
    out[rho == 0] = 0.0
    return out


def grad_first_layer(grad_map: np.ndarray, p1: int = 16, alpha1: Optional[float] = None,
                     subsample: int = 3, beta: Optional[float] = None) -> np.ndarray:
    bins = grad_soft_bins(grad_map, p1, alpha1)
    return gaussian_pool(bins, subsample, float(subsample if beta is None else beta))


def _pixels(patch) -> np.ndarray:
    return as_image(patch.pixels if isinstance(patch, Patch) else patch)


def input_map(patch, input_type) -> np.ndarray:
    """Layer-0 map for a patch; ``input_type`` may also be a CknModel."""
    itype = input_type.input_type if isinstance(input_type, CknModel) else InputType.parse(input_type)
    if itype is InputType.GRAD:
        return to_grad_map(patch)
    return to_raw_map(patch)


def encode_map(m0: np.ndarray, model: CknModel) -> np.ndarray:
    """Run all layers on a layer-0 map; returns the final (h, w, p) map."""
    layers = model.layers
    if model.input_type is InputType.GRAD:
        first = layers[0]
        fmap = grad_first_layer(m0, first.p, first.alpha, first.subsample, first.beta)
    elif model.input_type is InputType.WHITE:
        wm = model.whiten or whiten_fit(m0, layers[0].subpatch)
        fmap = encode_layer(m0, layers[0], transform=wm.transform)
    else:
        fmap = encode_layer(m0, layers[0])
    for params in layers[1:]:
        fmap = encode_layer(fmap, params)
    return fmap


def encode_patch(patch, model: CknModel) -> np.ndarray:
    """Flat descriptor, channel-major: all channels of one cell, then the next cell."""
    px = _pixels(patch)
    if px.shape[0] != model.input_side or px.shape[1] != model.input_side:
        raise ValueError(f"patch is {px.shape[0]}x{px.shape[1]}, model expects "
                         f"{model.input_side}x{model.input_side}")
    return encode_map(input_map(px, model), model).ravel()


def default_threads() -> int:
    return max(1, int(os.environ.get("CKN_THREADS", "1")))


def encode_batch(patches, model: CknModel, threads: Optional[int] = None) -> np.ndarray:
    """Encode many patches; row order follows input order for any thread count."""
    patches = list(patches)
    threads = threads or default_threads()
    if threads == 1 or len(patches) < 2:
        rows = [encode_patch(p, model) for p in patches]
    else:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            rows = list(ex.map(lambda p: encode_patch(p, model), patches))
    if not rows:
        return np.zeros((0, model.dim))
    return np.vstack(rows)
