"""Layer-wise training of a full CKN from a set of patches."""
from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np

from .channels import InputType, whiten_fit, whiten_fit_global
from .config import PipelineConfig
from .encoder import CknModel, encode_layer, grad_first_layer, grad_layer_params, input_map
from .trainer import LayerParams, sample_pairs, train_layer

log = logging.getLogger(__name__)


@dataclass
class LayerReport:
    index: int
    analytic: bool
    init_objective: float = float("nan")
    final_objective: float = float("nan")
    lr: float = float("nan")
    pool_size: int = 0


def train_model(patches, cfg: PipelineConfig):
    """Train every layer in order; returns (CknModel, [LayerReport])."""
    patches = list(patches)
    if not patches:
        raise ValueError("no training patches")
    rng = np.random.default_rng(cfg.seed)
    if len(patches) > cfg.train_patches:
        keep = np.sort(rng.choice(len(patches), cfg.train_patches, replace=False))
        patches = [patches[i] for i in keep]
    maps = [input_map(p, cfg.input_type) for p in patches]

    global_white = None
    if cfg.input_type is InputType.WHITE and cfg.whiten == "global":
        global_white = whiten_fit_global(maps, cfg.layers[0].subpatch)

    layers: list[LayerParams] = []
    reports = []
    for k, spec in enumerate(cfg.layers):
        if k == 0 and cfg.input_type is InputType.GRAD:
            params = grad_layer_params(spec.filters, spec.subsample, spec.pooling)
            reports.append(LayerReport(1, analytic=True))
            log.info("layer 1: analytic orientation layer with %d bins", spec.filters)
        else:
            transform = None
            if k == 0 and cfg.input_type is InputType.WHITE:
                transform = _white_transform(maps, spec.subpatch, global_white)
            pool = sample_pairs(maps, cfg.pool_size, spec.subpatch, seed=cfg.seed + 1000 * (k + 1),
                                transform=transform)
            sgd = replace(cfg.sgd, seed=cfg.sgd.seed + k)
            res = train_layer(pool, spec.filters, spec.alpha, sgd, subpatch=spec.subpatch,
                              subsample=spec.subsample, beta=spec.pooling,
                              in_channels=maps[0].shape[2])
            params = res.params
            reports.append(LayerReport(k + 1, False, res.init_objective, res.final_objective,
                                       res.lr, len(pool)))
            log.info("layer %d: validation objective %.6g (init %.6g, lr %.3g)", k + 1,
                     res.final_objective, res.init_objective, res.lr)
        layers.append(params)
        if k + 1 < len(cfg.layers):
            maps = [_apply_layer(m, params, k, cfg, global_white) for m in maps]
    model = CknModel(cfg.input_type, layers, input_side=cfg.side, whiten=global_white)
    return model, reports


def _white_transform(maps, side, global_white):
    if global_white is not None:
        return lambda k, rows: global_white.transform(rows)
    cache = {}

    def transform(k, rows):
        if k not in cache:
            cache[k] = whiten_fit(maps[k], side)
        return cache[k].transform(rows)
    return transform


def _apply_layer(m, params, k, cfg, global_white):
    if k == 0 and cfg.input_type is InputType.GRAD:
        return grad_first_layer(m, params.p, params.alpha, params.subsample, params.beta)
    if k == 0 and cfg.input_type is InputType.WHITE:
        wm = global_white or whiten_fit(m, params.subpatch)
        return encode_layer(m, params, transform=wm.transform)
    return encode_layer(m, params)
