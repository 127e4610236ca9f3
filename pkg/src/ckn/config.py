"""Pipeline configuration: INI-style ``key = value`` sections.

Example::

    [model]
    input = grad

    [layer2]
    filters = 512

    [sgd]
    iterations = 20000

Missing ``[layerN]`` sections fall back to the reference architecture of the
input type; unknown sections or keys are rejected.
"""
from __future__ import annotations

import configparser
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

from .channels import InputType
from .encoder import REFERENCE_ARCHITECTURES
from .trainer import SgdConfig

DEFAULT_ALPHA = 0.5


@dataclass
class LayerSpec:
    subpatch: int
    subsample: int
    filters: int
    alpha: float = DEFAULT_ALPHA
    beta: Optional[float] = None

    @property
    def pooling(self) -> float:
        return float(self.subsample if self.beta is None else self.beta)


@dataclass
class PipelineConfig:
    input_type: InputType = InputType.GRAD
    side: int = 51
    layers: list = field(default_factory=list)
    sgd: SgdConfig = field(default_factory=SgdConfig)
    train_patches: int = 100_000
    pool_size: int = 1_000_000
    whiten: str = "per-map"
    pca_mode: Optional[str] = None
    pca_dim: int = 1024
    vocab_k: int = 256
    seed: int = 0

    def __post_init__(self):
        self.input_type = InputType.parse(self.input_type)
        if not self.layers:
            self.layers = [LayerSpec(e, s, p) for e, s, p in REFERENCE_ARCHITECTURES[self.input_type]]
        if self.pca_mode is None:
            # semi whitening suits gradient and whitened inputs, full whitening raw input
            self.pca_mode = "full" if self.input_type is InputType.RAW else "semi"
        if self.whiten not in ("per-map", "global"):
            raise ValueError("whiten must be per-map or global")
        if self.input_type is InputType.GRAD and self.layers[0].subpatch != 1:
            raise ValueError("gradient input uses a 1x1 first layer")
        for l in self.layers:
            if min(l.subpatch, l.subsample, l.filters) < 1 or not l.alpha > 0:
                raise ValueError(f"invalid layer {l}")

    @property
    def architecture(self):
        return [(l.subpatch, l.subsample, l.filters) for l in self.layers]


_SCHEMA = {
    "model": {"input": str, "side": int},
    "train": {"patches": int, "pool": int, "seed": int, "whiten": str},
    "sgd": {"iterations": int, "batch": int, "probe_iterations": int, "check_every": int,
            "decay_every": int, "validation_pairs": int, "lr_candidates": str, "seed": int,
            "max_backtracks": int},
    "pca": {"mode": str, "dim": int},
    "vocab": {"k": int},
    "layer": {"subpatch": int, "subsample": int, "filters": int, "alpha": float, "beta": float},
}
_SGD_KEYS = {"iterations": "iterations", "batch": "batch_size",
             "probe_iterations": "probe_iterations", "check_every": "check_every",
             "decay_every": "decay_every", "validation_pairs": "validation_pairs",
             "seed": "seed", "max_backtracks": "max_backtracks"}


def _lr_candidates(text: str) -> tuple:
    vals = tuple(float(eval_power(t)) for t in text.split(",") if t.strip())
    if not vals:
        raise ValueError("lr_candidates is empty")
    return vals


def eval_power(token: str) -> float:
    """Parse ``0.5`` or ``2^-3.5`` style numbers."""
    token = token.strip()
    if "^" in token:
        base, exp = token.split("^", 1)
        return float(base) ** float(exp)
    return float(token)


def parse_config(text: str) -> PipelineConfig:
    cp = configparser.ConfigParser(interpolation=None, default_section="__none__")
    cp.optionxform = str
    cp.read_string(text)
    typed: dict = {}
    for section in cp.sections():
        kind = "layer" if section.startswith("layer") and section[5:].isdigit() else section
        if kind not in _SCHEMA:
            raise ValueError(f"unknown config section [{section}]")
        values = {}
        for key, raw in cp.items(section):
            if key not in _SCHEMA[kind]:
                raise ValueError(f"unknown key {key!r} in [{section}]")
            try:
                values[key] = _SCHEMA[kind][key](raw.strip())
            except ValueError:
                raise ValueError(f"bad value for {key} in [{section}]: {raw!r}") from None
        typed[section] = values

    model = typed.get("model", {})
    itype = InputType.parse(model.get("input", "grad"))
    ref = REFERENCE_ARCHITECTURES[itype]
    layer_ids = sorted(int(s[5:]) for s in typed if s.startswith("layer"))
    n_layers = max([len(ref)] + layer_ids)
    if layer_ids and layer_ids[0] < 1:
        raise ValueError("layers are numbered from 1")
    layers = []
    for k in range(1, n_layers + 1):
        vals = typed.get(f"layer{k}", {})
        base = ref[k - 1] if k <= len(ref) else None
        if base is None and not {"subpatch", "subsample", "filters"} <= vals.keys():
            raise ValueError(f"[layer{k}] is beyond the reference architecture and must set "
                             "subpatch, subsample and filters")
        e, s, p = base if base else (0, 0, 0)
        layers.append(LayerSpec(subpatch=vals.get("subpatch", e), subsample=vals.get("subsample", s),
                                filters=vals.get("filters", p),
                                alpha=vals.get("alpha", DEFAULT_ALPHA), beta=vals.get("beta")))

    sgd = SgdConfig()
    s_vals = typed.get("sgd", {})
    kw = {_SGD_KEYS[k]: v for k, v in s_vals.items() if k in _SGD_KEYS}
    if "lr_candidates" in s_vals:
        kw["lr_candidates"] = _lr_candidates(s_vals["lr_candidates"])
    sgd = replace(sgd, **kw)

    train = typed.get("train", {})
    pca = typed.get("pca", {})
    return PipelineConfig(
        input_type=itype, side=model.get("side", 51), layers=layers, sgd=sgd,
        train_patches=train.get("patches", 100_000), pool_size=train.get("pool", 1_000_000),
        whiten=train.get("whiten", "per-map"), pca_mode=pca.get("mode"),
        pca_dim=pca.get("dim", 1024), vocab_k=typed.get("vocab", {}).get("k", 256),
        seed=train.get("seed", 0))


def load_config(path) -> PipelineConfig:
    return parse_config(Path(path).read_text(encoding="utf-8"))
