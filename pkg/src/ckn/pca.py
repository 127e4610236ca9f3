"""PCA projection with optional full or semi whitening."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MODES = ("none", "semi", "full")
SV_FLOOR = 1e-8


@dataclass(frozen=True)
class PcaModel:
    """Projection x -> L (x - mean).

    ``singular_values`` are those of the centered fit matrix; ``stds`` are
    singular_values / sqrt(n), the per-component standard deviations used for
    whitening so that full whitening yields unit covariance.
    """
    L: np.ndarray
    mean: np.ndarray
    singular_values: np.ndarray
    mode: str
    n_samples: int

    @property
    def in_dim(self) -> int:
        return self.L.shape[1]

    @property
    def out_dim(self) -> int:
        return self.L.shape[0]

    @property
    def stds(self) -> np.ndarray:
        return self.singular_values / np.sqrt(self.n_samples)

    def apply(self, X) -> np.ndarray:
        return pca_apply(X, self)


def pca_fit(X, dim: int = 1024, mode: str = "semi") -> PcaModel:
    X = np.asarray(X, dtype=np.float64)
    if mode not in MODES:
        raise ValueError(f"unknown whitening mode {mode!r}; expected one of {MODES}")
    if X.ndim != 2:
        raise ValueError("expected a 2-D matrix of row vectors")
    n, d = X.shape
    if dim < 1 or dim > d:
        raise ValueError(f"target dimension {dim} must be in [1, {d}]")
    if n < dim:
        raise ValueError(f"need at least {dim} samples to fit a {dim}-dim PCA, got {n}")
    mean = X.mean(axis=0)
    _, S, Vt = np.linalg.svd(X - mean, full_matrices=False)
    # svd sign convention is implementation-defined; pin it for reproducible files
    signs = np.sign(Vt[np.arange(Vt.shape[0]), np.argmax(np.abs(Vt), axis=1)])
    Vt = Vt * signs[:, None]
    S = S[:dim]
    V = Vt[:dim]
    D = S / np.sqrt(n)
    # relative floor; degenerate (constant) data falls back to unit scales
    D = np.maximum(D, SV_FLOOR * D[0]) if D[0] > 0 else np.ones_like(D)
    if mode == "full":
        L = V / D[:, None]
    elif mode == "semi":
        L = V / np.sqrt(D)[:, None]
    else:
        L = V.copy()
    return PcaModel(L=L, mean=mean, singular_values=S, mode=mode, n_samples=n)


def pca_apply(X, model: PcaModel) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.shape[-1] != model.in_dim:
        raise ValueError(f"vector dimension {X.shape[-1]} != PCA input dimension {model.in_dim}")
    return (X - model.mean) @ model.L.T


descriptor_pca_fit = pca_fit
descriptor_pca_apply = pca_apply
