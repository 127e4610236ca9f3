"""Unsupervised layer training: fit exponential features to a Gaussian kernel.

For unit-norm x, x' the layer approximates

    exp(-|x - x'|^2 / (2 alpha^2)) ~ sum_j exp(w_j.x + b_j) exp(w_j.x' + b_j)

and (W, b) are learned by preconditioned minibatch SGD on the squared
residual over sampled pairs.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np


log = logging.getLogger(__name__)

EXP_CLAMP = 30.0
ZERO_NORM = 1e-8


class TrainingDiverged(RuntimeError):
    pass


class NoInformativePatches(ValueError):
    pass


@dataclass(frozen=True)
class LayerParams:
    """One layer. W is (q, p) with q = subpatch**2 * in_channels; stored in float32."""
    W: np.ndarray
    b: np.ndarray
    alpha: float
    subpatch: int
    subsample: int
    beta: float
    in_channels: int

    def __post_init__(self):
        W = np.ascontiguousarray(self.W, dtype=np.float32)
        b = np.ascontiguousarray(np.ravel(self.b), dtype=np.float32)
        if W.ndim != 2 or W.shape[1] != b.shape[0]:
            raise ValueError(f"W {W.shape} and b {b.shape} do not agree")
        if W.shape[0] != self.subpatch * self.subpatch * self.in_channels:
            raise ValueError(f"W has {W.shape[0]} rows, expected "
                             f"{self.subpatch}^2 * {self.in_channels}")
        if not (np.all(np.isfinite(W)) and np.all(np.isfinite(b))):
            raise ValueError("layer parameters must be finite")
        if not (self.alpha > 0 and self.beta > 0 and self.subsample >= 1 and W.shape[1] >= 1):
            raise ValueError("need alpha > 0, beta > 0, subsample >= 1 and p >= 1")
        W.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "b", b)

    @property
    def q(self) -> int:
        return self.W.shape[0]

    @property
    def p(self) -> int:
        return self.W.shape[1]


@dataclass(frozen=True)
class TrainPairSet:
    vectors: np.ndarray
    seed: int

    def __len__(self):
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def draw_pairs(self, rng: np.random.Generator, n: int):
        i = rng.integers(0, len(self), size=n)
        j = rng.integers(0, len(self), size=n)
        return self.vectors[i], self.vectors[j]


@dataclass(frozen=True)
class Preconditioner:
    R: np.ndarray
    tau: float
    G: np.ndarray
    U: np.ndarray
    eigvals: np.ndarray


@dataclass
class SgdConfig:
    iterations: int = 300_000
    batch_size: int = 1000
    lr_candidates: Sequence[float] = tuple(2.0 ** (-k / 2) for k in range(41))
    probe_iterations: int = 1000
    check_every: int = 1000
    decay_every: int = 50_000
    validation_pairs: int = 10_000
    backtrack_factor: float = 1.5
    max_backtracks: int = 30
    seed: int = 0

    def __post_init__(self):
        for name in ("iterations", "batch_size", "probe_iterations", "check_every",
                     "decay_every", "validation_pairs"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if len(self.lr_candidates) == 0:
            raise ValueError("learning-rate candidate set is empty")


@dataclass
class TrainResult:
    params: LayerParams
    Z: np.ndarray
    preconditioner: Preconditioner
    lr: float
    init_objective: float
    final_objective: float
    history: list = field(default_factory=list)


def gaussian_kernel(x: np.ndarray, xp: np.ndarray, alpha: float) -> np.ndarray:
    d2 = np.sum((np.asarray(x) - np.asarray(xp)) ** 2, axis=-1)
    return np.exp(-d2 / (2.0 * alpha * alpha))


# -- pair sampling -----------------------------------------------------------

def sample_pairs(maps, n: int, subpatch_side: int, seed: int = 0,
                 transform: Optional[Callable[[int, np.ndarray], np.ndarray]] = None
                 ) -> TrainPairSet:
    """Draw ``n`` contrast-normalized sub-patches uniformly over (map, location).

    ``transform(map_index, rows)`` optionally preprocesses raw sub-patch rows
    (used for whitened input). Zero-norm candidates are rejected and redrawn.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    maps = [np.asarray(m, dtype=np.float64) for m in maps]
    if not maps:
        raise NoInformativePatches("no maps to sample from")
    grids = []
    for m in maps:
        h, w = m.shape[:2]
        grids.append((h - subpatch_side + 1, w - subpatch_side + 1))
        if grids[-1][0] < 1 or grids[-1][1] < 1:
            raise ValueError(f"sub-patch side {subpatch_side} does not fit map of shape {m.shape}")
    counts = np.array([a * b for a, b in grids])
    cum = np.concatenate([[0], np.cumsum(counts)])
    total = int(cum[-1])

    def fetch(flat_idx: np.ndarray) -> np.ndarray:
        which = np.searchsorted(cum, flat_idx, side="right") - 1
        rows = []
        for k in np.unique(which):
            sel = flat_idx[which == k] - cum[k]
            gi, gj = np.divmod(sel, grids[k][1])
            win = np.lib.stride_tricks.sliding_window_view(
                maps[k], (subpatch_side, subpatch_side), axis=(0, 1))
            block = win[gi, gj].transpose(0, 2, 3, 1).reshape(sel.size, -1)
            if transform is not None:
                block = transform(int(k), block)
            rows.append((np.nonzero(which == k)[0], block))
        dim = rows[0][1].shape[1]
        out = np.empty((flat_idx.size, dim))
        for pos, block in rows:
            out[pos] = block
        return out

    rng = np.random.default_rng(seed)
    kept: list[np.ndarray] = []
    have = 0
    checked_all = False
    while have < n:
        draw = rng.integers(0, total, size=max(2 * (n - have), 64))
        vecs = fetch(draw)
        norms = np.linalg.norm(vecs, axis=1)
        good = norms > ZERO_NORM
        if not good.any() and not checked_all:
            checked_all = True
            allv = np.linalg.norm(fetch(np.arange(total)), axis=1)
            if not (allv > ZERO_NORM).any():
                raise NoInformativePatches("no informative patches: every candidate sub-patch "
                                           "has zero norm")
        vecs = vecs[good] / norms[good, None]
        kept.append(vecs[: n - have])
        have += kept[-1].shape[0]
    return TrainPairSet(np.concatenate(kept), seed)


# -- preconditioning ---------------------------------------------------------

def augment(x: np.ndarray) -> np.ndarray:
    x = np.atleast_2d(x)
    return np.hstack([x, np.ones((x.shape[0], 1))])


def fit_preconditioner(pool, tau: Optional[float] = None) -> Preconditioner:
    """Whitening preconditioner from the uncentered covariance G of [x, 1].

    R = U (Delta + tau I)^(-1/2) U^T, so that R [x, 1] has covariance
    Delta / (Delta + tau): exactly the identity for tau = 0 and invertible G.
    """
    X = pool.vectors if isinstance(pool, TrainPairSet) else np.asarray(pool, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("pool must be a non-empty 2-D array")
    if not np.all(np.isfinite(X)):
        raise ValueError("pool contains non-finite values")
    Xt = augment(X)
    G = Xt.T @ Xt / Xt.shape[0]
    G = 0.5 * (G + G.T)
    evals, U = np.linalg.eigh(G)
    evals = np.maximum(evals, 0.0)
    if tau is None:
        tau = float(evals.mean())
    if tau == 0 and evals.min() <= 0:
        raise ValueError("tau = 0 needs an invertible covariance")
    R = (U / np.sqrt(evals + tau)) @ U.T
    R = 0.5 * (R + R.T)
    return Preconditioner(R=R, tau=float(tau), G=G, U=U, eigvals=evals)


def params_from_z(Z: np.ndarray, R: np.ndarray):
    """Undo the change of variables: [W^T, b^T] = Z^T R."""
    WB = R @ Z
    return WB[:-1], WB[-1]


# -- objective ---------------------------------------------------------------

def _model_terms(Z, Y, Yp):
    E = Y @ Z
    Ep = Yp @ Z
    mask = E < EXP_CLAMP
    maskp = Ep < EXP_CLAMP
    A = np.exp(np.minimum(E, EXP_CLAMP))
    Ap = np.exp(np.minimum(Ep, EXP_CLAMP))
    clamped = E.size + Ep.size - int(mask.sum()) - int(maskp.sum())
    return A * Ap, mask, maskp, clamped


def objective(Z: np.ndarray, x: np.ndarray, xp: np.ndarray, alpha: float, R: np.ndarray,
              return_clamped: bool = False):
    """Sum over pairs of [k(x, x') - sum_j exp(z_j.R[x,1]) exp(z_j.R[x',1])]^2."""
    Y = augment(x) @ R
    Yp = augment(xp) @ R
    AA, _, _, clamped = _model_terms(Z, Y, Yp)
    r = gaussian_kernel(x, xp, alpha) - AA.sum(axis=1)
    val = float(r @ r)
    return (val, clamped) if return_clamped else val


def _loss_grad(Z, Y, Yp, target):
    AA, mask, maskp, clamped = _model_terms(Z, Y, Yp)
    r = target - AA.sum(axis=1)
    S = r[:, None] * AA
    grad = -2.0 * (Y.T @ (S * mask) + Yp.T @ (S * maskp))
    return float(r @ r), grad, clamped


def objective_and_grad(Z: np.ndarray, x: np.ndarray, xp: np.ndarray, alpha: float,
                       R: np.ndarray):
    """Objective (sum over pairs), its gradient in Z, and the clamped-exponent count."""
    return _loss_grad(Z, augment(x) @ R, augment(xp) @ R, gaussian_kernel(x, xp, alpha))


# -- SGD ---------------------------------------------------------------------

GRAD_SCALE = "sum"


def _run_sgd(Z, X, Y, alpha, lr, iters, cfg, rng, start_iter=0):
    """Minibatch SGD on the objective summed over each batch.

    X holds the unit-norm pool and Y = R [X, 1] its preconditioned rows.
    Returns Z and the number of steps that hit the exponent clamp.
    """
    n = X.shape[0]
    scale = 1.0 / cfg.batch_size if GRAD_SCALE == "mean" else 1.0
    bad_steps = 0
    for it in range(iters):
        i = rng.integers(0, n, size=cfg.batch_size)
        j = rng.integers(0, n, size=cfg.batch_size)
        target = gaussian_kernel(X[i], X[j], alpha)
        _, g, clamped = _loss_grad(Z, Y[i], Y[j], target)
        if clamped:
            bad_steps += 1
        k = (start_iter + it) // cfg.decay_every
        Z = Z - (lr * scale / math.sqrt(2.0) ** k) * g
    return Z, bad_steps


def _split_pool(pool: TrainPairSet, n_val_pairs: int, rng):
    n = len(pool)
    n_val = min(2 * n_val_pairs, n // 5)
    if n_val < 2:
        raise ValueError(f"pool of {n} vectors is too small to hold out validation pairs")
    perm = rng.permutation(n)
    val = pool.vectors[perm[:n_val]]
    train = TrainPairSet(pool.vectors[perm[n_val:]], pool.seed)
    half = n_val // 2
    return train, val[:half], val[half:2 * half]


INIT = "random-features"


def initial_z(kind, q, p, alpha, R, rng):
    if kind == "z-normal":
        return rng.standard_normal((q + 1, p))
    if kind == "wb-normal":
        WB = rng.standard_normal((q + 1, p))
    elif kind == "random-features":
        WB = np.vstack([rng.standard_normal((q, p)) / alpha,
                        np.full((1, p), -1.0 / alpha**2 - 0.5 * math.log(p))])
    else:
        raise ValueError(kind)
    return np.linalg.solve(R, WB)


def train_layer(pool: TrainPairSet, p: int, alpha: float, cfg: Optional[SgdConfig] = None,
                *, subpatch: Optional[int] = None, subsample: int = 1,
                beta: Optional[float] = None, in_channels: Optional[int] = None
                ) -> TrainResult:
    """Learn p exponential features approximating the Gaussian kernel of width alpha."""
    cfg = cfg or SgdConfig()
    if p < 1 or not alpha > 0:
        raise ValueError("need p >= 1 and alpha > 0")
    q = pool.dim
    if subpatch is None:
        subpatch, in_channels = 1, q
    if in_channels is None:
        in_channels = q // (subpatch * subpatch)
    beta = float(subsample if beta is None else beta)
    rng = np.random.default_rng(cfg.seed)
    train, xv, xvp = _split_pool(pool, cfg.validation_pairs, rng)
    pre = fit_preconditioner(train)
    R = pre.R
    Xtr = train.vectors
    Ytr = augment(Xtr) @ R

    def val_obj(Z):
        v, clamped = objective(Z, xv, xvp, alpha, R, return_clamped=True)
        return v if math.isfinite(v) else math.inf

    Z0 = initial_z(INIT, q, p, alpha, R, rng)
    init_obj = val_obj(Z0)

    # learning-rate probe: same start and same minibatch stream for every candidate
    probe_seed = int(rng.integers(2**63))
    best_lr, best_probe = None, math.inf
    for lr in cfg.lr_candidates:
        with np.errstate(all="ignore"):
            Zp, bad = _run_sgd(Z0, Xtr, Ytr, alpha, lr, cfg.probe_iterations, cfg,
                               np.random.default_rng(probe_seed))
            v = val_obj(Zp) if np.all(np.isfinite(Zp)) else math.inf
        if bad > 0.01 * cfg.probe_iterations:
            v = math.inf
        log.debug("lr probe %.3g -> %.6g", lr, v)
        if v < best_probe:
            best_lr, best_probe = lr, v
    if best_lr is None:
        raise TrainingDiverged("training diverged: no learning-rate candidate gave a finite "
                               "validation objective")

    lr = best_lr
    Z, best_Z, best_v = Z0, Z0, init_obj
    history = [(0, init_obj, lr)]
    done = 0
    backtracks = 0
    while done < cfg.iterations:
        steps = min(cfg.check_every, cfg.iterations - done)
        with np.errstate(all="ignore"):
            Zn, bad = _run_sgd(Z, Xtr, Ytr, alpha, lr, steps, cfg, rng, start_iter=done)
            v = val_obj(Zn) if np.all(np.isfinite(Zn)) else math.inf
        persistent_clamp = bad > 0.01 * steps
        if not math.isfinite(v) or v > cfg.backtrack_factor * best_v or persistent_clamp:
            backtracks += 1
            if backtracks > cfg.max_backtracks:
                why = "persistent exponent clamping" if persistent_clamp else "objective blow-up"
                raise TrainingDiverged(f"training diverged after {backtracks - 1} backtracking "
                                       f"retries ({why}, last validation objective {v})")
            Z = best_Z
            lr *= 0.5
            history.append((done, best_v, lr))
            continue
        backtracks = 0
        Z = Zn
        done += steps
        if v < best_v:
            best_Z, best_v = Zn, v
        history.append((done, best_v, lr))

    W, b = params_from_z(best_Z, R)
    params = LayerParams(W=W, b=b, alpha=alpha, subpatch=subpatch, subsample=subsample,
                         beta=beta, in_channels=in_channels)
    return TrainResult(params=params, Z=best_Z, preconditioner=pre, lr=best_lr,
                       init_objective=init_obj, final_objective=best_v, history=history)


def approx_kernel(params: LayerParams, x, xp) -> float:
    """<psi(x), psi(x')> with psi(x) = exp(W^T x + b)."""
    x = np.asarray(x, dtype=np.float64)
    xp = np.asarray(xp, dtype=np.float64)
    if x.shape != (params.q,) or xp.shape != (params.q,):
        raise ValueError(f"expected vectors of dimension {params.q}, got {x.shape} and {xp.shape}")
    W = params.W.astype(np.float64)
    b = params.b.astype(np.float64)
    return float(np.exp(x @ W + b) @ np.exp(xp @ W + b))


def feature_map(params: LayerParams, X) -> np.ndarray:
    W = params.W.astype(np.float64)
    b = params.b.astype(np.float64)
    return np.exp(np.asarray(X, dtype=np.float64) @ W + b)
