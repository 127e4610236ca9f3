"""k-means vocabularies and VLAD aggregation."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .pca import PcaModel, pca_apply, pca_fit

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Codebook:
    centroids: np.ndarray
    seed: int = 0
    inertia_history: tuple = ()

    @property
    def k(self) -> int:
        return self.centroids.shape[0]

    @property
    def dim(self) -> int:
        return self.centroids.shape[1]


@dataclass(frozen=True)
class VladVector:
    values: np.ndarray
    state: str = "power+l2"
    empty: bool = False


def sq_distances(X: np.ndarray, C: np.ndarray) -> np.ndarray:
    d = (X * X).sum(axis=1)[:, None] - 2.0 * X @ C.T + (C * C).sum(axis=1)[None, :]
    return np.maximum(d, 0.0)


def assign(X: np.ndarray, C: np.ndarray) -> np.ndarray:
    """Nearest centroid per row; argmin keeps the lowest index on ties."""
    return np.argmin(sq_distances(X, C), axis=1)


def _kmeanspp(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = X.shape[0]
    idx = [int(rng.integers(n))]
    d = sq_distances(X, X[idx])[:, 0]
    for _ in range(1, k):
        total = d.sum()
        if total <= 0:
            break
        nxt = int(rng.choice(n, p=d / total))
        idx.append(nxt)
        d = np.minimum(d, sq_distances(X, X[nxt:nxt + 1])[:, 0])
    return X[idx].copy()


def kmeans_fit(X, k: int = 256, seed: int = 0, max_iters: int = 100, tol: float = 1e-6
               ) -> Codebook:
    """Lloyd iterations from k-means++ seeding."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("expected a non-empty 2-D matrix of descriptors")
    n_distinct = np.unique(X, axis=0).shape[0]
    if n_distinct < k:
        raise ValueError(f"k-means needs at least {k} distinct points, got {n_distinct}")
    rng = np.random.default_rng(seed)
    C = _kmeanspp(X, k, rng)
    history = []
    prev = None
    for _ in range(max_iters):
        labels = assign(X, C)
        d = ((X - C[labels]) ** 2).sum(axis=1)
        inertia = float(d.sum())
        history.append(inertia)
        if prev is not None and abs(prev - inertia) <= tol * max(prev, 1e-300):
            break
        prev = inertia
        newC = np.zeros_like(C)
        counts = np.bincount(labels, minlength=k)
        np.add.at(newC, labels, X)
        taken = set()
        for c in range(k):
            if counts[c]:
                newC[c] /= counts[c]
                continue
            # re-seed an empty cluster from the point farthest from its centroid
            order = np.argsort(-d, kind="stable")
            far = next(i for i in order if int(i) not in taken)
            taken.add(int(far))
            newC[c] = X[far]
            d[far] = 0.0
        C = newC
    labels = assign(X, C)
    final = float(((X - C[labels]) ** 2).sum())
    if not history or final != history[-1]:
        history.append(final)
    return Codebook(centroids=C, seed=seed, inertia_history=tuple(history))


def inertia(X, codebook: Codebook) -> float:
    X = np.asarray(X, dtype=np.float64)
    labels = assign(X, codebook.centroids)
    return float(((X - codebook.centroids[labels]) ** 2).sum())


def vlad_residuals(X, codebook: Codebook) -> np.ndarray:
    """Per-centroid summed residuals (k, d), before any normalization.

    Rows are summed in a canonical (lexicographic) order so the result does
    not depend on the order descriptors are given in.
    """
    X = np.asarray(X, dtype=np.float64).reshape(-1, codebook.dim)
    C = codebook.centroids
    out = np.zeros_like(C)
    if X.shape[0] == 0:
        return out
    X = X[np.lexsort(X.T[::-1])]
    labels = assign(X, C)
    for c in np.unique(labels):
        out[c] = (X[labels == c] - C[c]).sum(axis=0)
    return out


def vlad_encode(X, codebook: Codebook) -> VladVector:
    """Residual sums, signed square root, then l2 normalization."""
    X = np.asarray(X, dtype=np.float64)
    if X.size and (X.ndim != 2 or X.shape[1] != codebook.dim):
        raise ValueError(f"descriptor dimension {X.shape[-1]} != codebook dimension {codebook.dim}")
    v = vlad_residuals(X, codebook).ravel()
    empty = X.shape[0] == 0 if X.ndim == 2 else X.size == 0
    if empty:
        log.warning("empty descriptor set: VLAD is the zero vector")
        return VladVector(values=v, state="power+l2", empty=True)
    v = np.sign(v) * np.sqrt(np.abs(v))
    nrm = np.linalg.norm(v)
    if nrm > 0:
        v = v / nrm
    return VladVector(values=v, state="power+l2", empty=False)


def vlad_pca_fit(vlads, dim: int = 4096, mode: str = "full") -> PcaModel:
    return pca_fit(vlads, dim=dim, mode=mode)


def vlad_pca_apply(vlad, model: PcaModel) -> np.ndarray:
    """Project then re-l2-normalize each row (rows with zero norm are left at zero)."""
    Y = np.atleast_2d(pca_apply(vlad, model))
    n = np.linalg.norm(Y, axis=1, keepdims=True)
    Y = np.where(n > 0, Y / np.where(n > 0, n, 1.0), 0.0)
    return Y[0] if np.ndim(vlad) == 1 else Y
