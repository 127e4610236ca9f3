"""Little-endian binary containers for models, vectors, codebooks and PCA.

CKNM  model:       magic, u32 version, u32 input type, u32 layer count,
                   per layer u32 q, p, e, s, f64 alpha, beta, f32 W (q x p), f32 b (p)
CKND  vectors:     magic, u32 version, u32 count, u32 dim, f32 count x dim
CKNC  codebook:    magic, u32 k, u32 d, f32 k x d
CKNP  PCA:         magic, u32 version, u32 mode, u32 d, u32 d', u64 n,
                   f64 mean (d), f64 singular values (d'), f64 L (d' x d)
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .aggregation import Codebook
from .channels import InputType
from .encoder import CknModel
from .pca import MODES, PcaModel
from .trainer import LayerParams

VERSION = 1


class FormatError(ValueError):
    pass


class _Reader:
    def __init__(self, path):
        self.path = Path(path)
        try:
            self.buf = self.path.read_bytes()
        except OSError as exc:
            raise FormatError(f"{self.path}: cannot read ({exc})") from exc
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise FormatError(f"{self.path}: truncated file")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def magic(self, expected: bytes):
        got = self.take(4) if len(self.buf) >= 4 else self.buf
        if got != expected:
            raise FormatError(f"{self.path}: bad magic {got!r}, expected {expected!r}")

    def unpack(self, fmt: str):
        size = struct.calcsize(fmt)
        return struct.unpack(fmt, self.take(size))

    def array(self, dtype: str, count: int) -> np.ndarray:
        item = np.dtype(dtype).itemsize
        return np.frombuffer(self.take(item * count), dtype=dtype).copy()

    def done(self):
        if self.pos != len(self.buf):
            raise FormatError(f"{self.path}: {len(self.buf) - self.pos} trailing bytes")


def _version(r: _Reader):
    (v,) = r.unpack("<I")
    if v != VERSION:
        raise FormatError(f"{r.path}: unsupported version {v}")


def write_model(path, model: CknModel) -> None:
    out = [b"CKNM", struct.pack("<III", VERSION, int(model.input_type), len(model.layers))]
    for l in model.layers:
        out.append(struct.pack("<IIIIdd", l.q, l.p, l.subpatch, l.subsample, l.alpha, l.beta))
        out.append(np.ascontiguousarray(l.W, dtype="<f4").tobytes())
        out.append(np.ascontiguousarray(l.b, dtype="<f4").tobytes())
    Path(path).write_bytes(b"".join(out))


def read_model(path) -> CknModel:
    r = _Reader(path)
    r.magic(b"CKNM")
    _version(r)
    tag, n_layers = r.unpack("<II")
    try:
        itype = InputType(tag)
    except ValueError:
        raise FormatError(f"{r.path}: unknown input type tag {tag}") from None
    layers = []
    for _ in range(n_layers):
        q, p, e, s, alpha, beta = r.unpack("<IIIIdd")
        if e == 0 or q % (e * e):
            raise FormatError(f"{r.path}: inconsistent layer header q={q}, e={e}")
        W = r.array("<f4", q * p).reshape(q, p)
        b = r.array("<f4", p)
        layers.append(LayerParams(W=W, b=b, alpha=alpha, subpatch=e, subsample=s, beta=beta,
                                  in_channels=q // (e * e)))
    r.done()
    try:
        return CknModel(input_type=itype, layers=layers)
    except ValueError as exc:
        raise FormatError(f"{r.path}: {exc}") from exc


def write_vectors(path, X) -> None:
    X = np.asarray(X)
    if X.ndim != 2:
        raise ValueError("expected a 2-D array of vectors")
    head = b"CKND" + struct.pack("<III", VERSION, X.shape[0], X.shape[1])
    Path(path).write_bytes(head + np.ascontiguousarray(X, dtype="<f4").tobytes())


def read_vectors(path) -> np.ndarray:
    r = _Reader(path)
    r.magic(b"CKND")
    _version(r)
    count, dim = r.unpack("<II")
    X = r.array("<f4", count * dim).reshape(count, dim)
    r.done()
    return X


def write_codebook(path, cb: Codebook) -> None:
    C = cb.centroids
    head = b"CKNC" + struct.pack("<II", C.shape[0], C.shape[1])
    Path(path).write_bytes(head + np.ascontiguousarray(C, dtype="<f4").tobytes())


def read_codebook(path) -> Codebook:
    r = _Reader(path)
    r.magic(b"CKNC")
    k, d = r.unpack("<II")
    C = r.array("<f4", k * d).reshape(k, d).astype(np.float64)
    r.done()
    return Codebook(centroids=C)


def write_pca(path, m: PcaModel) -> None:
    out = [b"CKNP", struct.pack("<IIIIQ", VERSION, MODES.index(m.mode), m.in_dim, m.out_dim,
                                m.n_samples)]
    for a in (m.mean, m.singular_values, m.L):
        out.append(np.ascontiguousarray(a, dtype="<f8").tobytes())
    Path(path).write_bytes(b"".join(out))


def read_pca(path) -> PcaModel:
    r = _Reader(path)
    r.magic(b"CKNP")
    _version(r)
    mode, d, dp, n = r.unpack("<IIIQ")
    if mode >= len(MODES):
        raise FormatError(f"{r.path}: unknown whitening mode {mode}")
    mean = r.array("<f8", d)
    S = r.array("<f8", dp)
    L = r.array("<f8", dp * d).reshape(dp, d)
    r.done()
    return PcaModel(L=L, mean=mean, singular_values=S, mode=MODES[mode], n_samples=int(n))
