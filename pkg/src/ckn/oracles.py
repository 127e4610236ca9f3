"""Slow reference computations used to audit the fast paths.

Nothing here calls into the encoder or trainer internals; the loops are
written out directly.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np


@dataclass(frozen=True)
class OracleReport:
    quantity: str
    exact: float
    approx: float
    abs_error: float
    rel_error: float
    n_samples: Optional[int] = None
    seed: Optional[int] = None
    extra: Optional[dict] = None

    @classmethod
    def build(cls, quantity, exact, approx, **kw) -> "OracleReport":
        exact, approx = float(exact), float(approx)
        err = abs(approx - exact)
        rel = err / abs(exact) if exact != 0 else (0.0 if err == 0 else math.inf)
        return cls(quantity, exact, approx, err, rel, **kw)

    def to_dict(self) -> dict:
        return {k: v for k, v in asdict(self).items() if v is not None}


def exact_match_kernel(M, Mp, e: int, alpha: float, beta: float) -> float:
    """Double sum over all sub-patch location pairs of the two maps.

    Each pair contributes exp(-|z - z'|^2 / (2 beta^2)) |P| |P'| exp(-|P~ - P~'|^2 / (2 alpha^2)).
    """
    M = np.asarray(M, dtype=np.float64)
    Mp = np.asarray(Mp, dtype=np.float64)
    if M.shape != Mp.shape:
        raise ValueError("maps must have equal shapes")
    h, w = M.shape[:2]
    locs = [(i, j) for i in range(h - e + 1) for j in range(w - e + 1)]
    A = [M[i:i + e, j:j + e].ravel() for i, j in locs]
    B = [Mp[i:i + e, j:j + e].ravel() for i, j in locs]
    total = 0.0
    for (zi, zj), P in zip(locs, A):
        nP = math.sqrt(float(P @ P))
        if nP == 0.0:
            continue
        for (yi, yj), Q in zip(locs, B):
            nQ = math.sqrt(float(Q @ Q))
            if nQ == 0.0:
                continue
            diff = P / nP - Q / nQ
            spatial = math.exp(-((zi - yi) ** 2 + (zj - yj) ** 2) / (2.0 * beta * beta))
            total += spatial * nP * nQ * math.exp(-float(diff @ diff) / (2.0 * alpha * alpha))
    return total


def mc_gaussian_estimate(x, xp, alpha: float, n_samples: int = 1_000_000, seed: int = 0,
                         chunk: int = 200_000) -> tuple[float, float]:
    """Monte Carlo estimate of exp(-|x - x'|^2 / (2 alpha^2)) for unit x, x'.

    Draws v ~ N(0, alpha^2/4 I) and averages s(v.x) s(v.x') with
    s(u) = exp(-1/alpha^2 + 2u/alpha^2). Returns (estimate, standard error).
    """
    x = np.asarray(x, dtype=np.float64)
    xp = np.asarray(xp, dtype=np.float64)
    rng = np.random.default_rng(seed)
    a2 = alpha * alpha
    total = 0.0
    total_sq = 0.0
    done = 0
    while done < n_samples:
        m = min(chunk, n_samples - done)
        V = rng.standard_normal((m, x.size)) * (alpha / 2.0)
        vals = np.exp(-2.0 / a2 + 2.0 * (V @ (x + xp)) / a2)
        total += vals.sum()
        total_sq += (vals * vals).sum()
        done += m
    mean = total / n_samples
    var = max(total_sq / n_samples - mean * mean, 0.0)
    return float(mean), float(math.sqrt(var / n_samples))


def exact_gaussian(x, xp, alpha: float) -> float:
    d = np.asarray(x, dtype=np.float64) - np.asarray(xp, dtype=np.float64)
    return math.exp(-float(d @ d) / (2.0 * alpha * alpha))


def encoder_vs_kernel(model, pairs, beta: Optional[float] = None) -> OracleReport:
    """Compare <encode(M), encode(M')> with the exact one-layer match kernel.

    ``model`` is a one-layer CknModel-like object whose layer is applied to the
    raw maps; ``pairs`` is a sequence of (M, M') arrays.
    """
    from .encoder import encode_layer

    layer = model.layers[0] if hasattr(model, "layers") else model
    if hasattr(model, "layers") and len(model.layers) != 1:
        raise ValueError("the exact kernel oracle only covers one-layer models")
    b = layer.beta if beta is None else beta
    exact, approx = [], []
    for M, Mp in pairs:
        exact.append(exact_match_kernel(M, Mp, layer.subpatch, layer.alpha, b))
        approx.append(float(np.sum(encode_layer(M, layer) * encode_layer(Mp, layer))))
    exact = np.array(exact)
    approx = np.array(approx)
    corr = float(np.corrcoef(exact, approx)[0, 1]) if len(exact) > 1 else float("nan")
    # inner products carry an extra pooling constant; compare after a least-squares scale
    scale = float(exact @ approx / (approx @ approx)) if approx.any() else 0.0
    rel = np.abs(scale * approx - exact) / np.where(exact != 0, np.abs(exact), 1.0)
    return OracleReport.build("encoder-vs-match-kernel", exact.mean(), scale * approx.mean(),
                              n_samples=len(exact),
                              extra={"correlation": corr, "mean_rel_error": float(rel.mean()),
                                     "scale": scale})


def naive_vlad(X, C) -> np.ndarray:
    """Per-point loop VLAD (residual sums only, no normalization)."""
    X = np.asarray(X, dtype=np.float64)
    C = np.asarray(C, dtype=np.float64)
    out = np.zeros_like(C)
    for x in X:
        best, best_d = 0, math.inf
        for i, c in enumerate(C):
            d = float(((x - c) ** 2).sum())
            if d < best_d:
                best, best_d = i, d
        out[best] += x - C[best]
    return out.ravel()


def naive_rank(query, database, ids) -> list:
    dists = [(float(((np.asarray(v) - np.asarray(query)) ** 2).sum()), i)
             for v, i in zip(database, ids)]
    return [i for _, i in sorted(dists)]
