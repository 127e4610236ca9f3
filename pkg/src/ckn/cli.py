"""``ckn`` command line: train, encode, vocab, vlad, pca, eval, oracle, synth."""
from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import fileio
from .aggregation import kmeans_fit, vlad_encode
from .config import PipelineConfig, load_config
from .encoder import encode_batch, encode_patch
from .maps import dense_keypoints, extract_patch, load_image, read_keypoints
from .oracles import (OracleReport, encoder_vs_kernel, exact_gaussian, mc_gaussian_estimate)
from .pca import pca_apply, pca_fit
from .retrieval import read_manifest, recall4, retrieval_map

log = logging.getLogger("ckn")


class CliError(Exception):
    pass


def _threads(args) -> int:
    return args.threads or int(os.environ.get("CKN_THREADS", "1") or 1)


def _manifest_root(path) -> Path:
    return Path(path).resolve().parent


# -- commands ----------------------------------------------------------------

def cmd_train(args):
    cfg = load_config(args.config) if args.config else PipelineConfig()
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed, sgd=replace(cfg.sgd, seed=args.seed))
    entries = read_manifest(args.manifest)
    if not entries:
        raise CliError(f"{args.manifest}: manifest is empty")
    root = _manifest_root(args.manifest)
    patches = [load_image(root / e.path) for e in entries]
    from .pipeline import train_model
    model, reports = train_model(patches, cfg)
    fileio.write_model(args.out, model)
    for r in reports:
        if r.analytic:
            print(f"layer {r.index}: analytic")
        else:
            print(f"layer {r.index}: validation objective {r.final_objective:.6g} "
                  f"(init {r.init_objective:.6g}, lr {r.lr:.4g})")
    print(f"wrote {args.out} (descriptor dim {model.dim})")


def _image_patches(args, model):
    """Dense or imported keypoints on every image; yields (owner, patch pixels)."""
    entries = read_manifest(args.manifest)
    root = _manifest_root(args.manifest)
    scales = [float(s) for s in args.scales.split(",") if s.strip()]
    for e in entries:
        img = load_image(root / e.path)
        if args.keypoints_dir:
            kp_path = Path(args.keypoints_dir) / (Path(e.path).name + ".kp")
            kps = read_keypoints(kp_path) if kp_path.exists() else []
        else:
            kps = dense_keypoints(img, args.stride, scales, side=model.input_side)
        for kp in kps:
            try:
                yield e.path, extract_patch(img, kp, model.input_side).pixels
            except ValueError:
                log.warning("%s: skipping keypoint %s outside the image", e.path, kp)


def cmd_encode(args):
    model = fileio.read_model(args.model)
    if args.images:
        owners, patches = [], []
        for owner, px in _image_patches(args, model):
            owners.append(owner)
            patches.append(px)
        D = encode_batch(patches, model, _threads(args))
        if args.owners is None:
            raise CliError("--images needs --owners to record which image each descriptor is from")
        Path(args.owners).write_text("".join(o + "\n" for o in owners), encoding="utf-8")
    else:
        entries = read_manifest(args.manifest)
        root = _manifest_root(args.manifest)
        patches = [load_image(root / e.path) for e in entries]
        D = encode_batch(patches, model, _threads(args))
    if args.pca:
        D = pca_apply(D, fileio.read_pca(args.pca))
    fileio.write_vectors(args.out, D.reshape(len(D), -1) if len(D) else np.zeros((0, model.dim)))
    print(f"wrote {args.out}: {D.shape[0]} x {D.shape[1] if D.ndim == 2 else model.dim}")


def cmd_pca(args):
    X = fileio.read_vectors(args.descriptors).astype(np.float64)
    if args.action == "fit":
        m = pca_fit(X, args.dim, args.mode)
        fileio.write_pca(args.out, m)
        print(f"wrote {args.out}: {m.out_dim} x {m.in_dim}, mode {m.mode}")
    else:
        m = fileio.read_pca(args.model)
        Y = pca_apply(X, m)
        if args.renormalize:
            n = np.linalg.norm(Y, axis=1, keepdims=True)
            Y = np.where(n > 0, Y / np.where(n > 0, n, 1.0), 0.0)
        fileio.write_vectors(args.out, Y)
        print(f"wrote {args.out}: {Y.shape[0]} x {Y.shape[1]}")


def cmd_vocab(args):
    X = fileio.read_vectors(args.descriptors).astype(np.float64)
    cb = kmeans_fit(X, args.k, seed=args.seed, max_iters=args.max_iters)
    fileio.write_codebook(args.out, cb)
    print(f"wrote {args.out}: k={cb.k}, d={cb.dim}, inertia {cb.inertia_history[-1]:.6g}")


def cmd_vlad(args):
    X = fileio.read_vectors(args.descriptors).astype(np.float64)
    owners = Path(args.owners).read_text(encoding="utf-8").splitlines()
    if len(owners) != X.shape[0]:
        raise CliError(f"{args.owners}: {len(owners)} owners for {X.shape[0]} descriptors")
    cb = fileio.read_codebook(args.codebook)
    entries = read_manifest(args.manifest)
    rows = []
    by_owner: dict[str, list[int]] = {}
    for i, o in enumerate(owners):
        by_owner.setdefault(o, []).append(i)
    unknown = sorted(set(by_owner) - {e.path for e in entries})
    if unknown:
        raise CliError(f"descriptors reference images missing from the manifest: {unknown[:10]}")
    for e in entries:
        idx = by_owner.get(e.path, [])
        if not idx:
            print(f"warning: {e.path} has no descriptors; writing a zero VLAD", file=sys.stderr)
        rows.append(vlad_encode(X[idx].reshape(len(idx), cb.dim), cb).values)
    fileio.write_vectors(args.out, np.vstack(rows) if rows else np.zeros((0, cb.k * cb.dim)))
    print(f"wrote {args.out}: {len(rows)} x {cb.k * cb.dim}")


def cmd_eval(args):
    if args.kind == "robustness":
        return _eval_robustness(args)
    X = fileio.read_vectors(args.vectors).astype(np.float64)
    entries = read_manifest(args.manifest)
    if args.kind == "ukb":
        if X.shape[0] != len(entries):
            raise CliError(f"{X.shape[0]} vectors for {len(entries)} manifest entries")
        score = recall4(X, [e.label for e in entries])
        if args.report:
            Path(args.report).write_text(json.dumps({"protocol": "4 x recall@4, query included",
                                                     "recall4": score}) + "\n")
        print(f"recall4={score:.6f}")
        return
    protocol = ("patch retrieval, label relevance, self-match excluded" if args.kind == "patches"
                else "image retrieval, group relevance, self-match excluded")
    rep = retrieval_map(X, entries, _threads(args), protocol=protocol)
    if args.report:
        Path(args.report).write_text(rep.to_jsonl(), encoding="utf-8")
    if rep.skipped:
        print(f"skipped {len(rep.skipped)} queries without relevant items", file=sys.stderr)
    print(f"mAP={rep.mean_ap:.6f}")


def _eval_robustness(args):
    from .synth import translation_curve, write_curve_csv
    model = fileio.read_model(args.model)
    bases_dir = Path(args.dataset) / "bases"
    paths = sorted(bases_dir.glob("*.png"))
    if not paths:
        raise CliError(f"{bases_dir}: no base images")
    bases = [load_image(p) for p in paths[: args.limit]]
    mags = [float(t) for t in args.magnitudes.split(",")]
    curve = translation_curve(lambda px: encode_patch(px, model), bases, mags,
                              side=model.input_side, seed=args.seed)
    write_curve_csv(args.out, curve)
    for t, d in curve:
        print(f"{t:g}\t{d:.6g}")


def cmd_oracle(args):
    rng = np.random.default_rng(args.seed)
    if args.kind == "gaussian":
        x = rng.standard_normal(args.dim)
        x /= np.linalg.norm(x)
        y = rng.standard_normal(args.dim)
        y = y - (y @ x) * x
        y /= np.linalg.norm(y)
        xp = args.cos * x + math.sqrt(max(0.0, 1 - args.cos ** 2)) * y
        est, se = mc_gaussian_estimate(x, xp, args.alpha, args.samples, args.seed)
        rep = OracleReport.build("mc-gaussian", exact_gaussian(x, xp, args.alpha), est,
                                 n_samples=args.samples, seed=args.seed,
                                 extra={"standard_error": se})
    else:
        model = fileio.read_model(args.model)
        layer = model.layers[0]
        if len(model.layers) != 1:
            raise CliError("the exact kernel oracle needs a one-layer model")
        c = layer.in_channels
        pairs = [(rng.standard_normal((args.map_size, args.map_size, c)),
                  rng.standard_normal((args.map_size, args.map_size, c)))
                 for _ in range(args.pairs)]
        rep = replace(encoder_vs_kernel(model, pairs), seed=args.seed)
    print(json.dumps(rep.to_dict(), sort_keys=True))


def cmd_synth(args):
    from .synth import SyntheticBenchSpec, make_dataset
    spec = SyntheticBenchSpec(n_bases=args.bases, n_copies=args.copies, max_shift=args.max_shift,
                              max_rotation=math.radians(args.max_rotation_deg),
                              max_scale=args.max_scale, max_brightness=args.brightness,
                              side=args.side, spacing=args.spacing, seed=args.seed)
    try:
        entries = make_dataset(args.out, spec)
    except OSError as exc:
        raise CliError(f"{args.out}: cannot write dataset ({exc})") from exc
    n_classes = len({e.label for e in entries})
    print(f"wrote {args.out}/manifest.tsv: {len(entries)} patches, {n_classes} classes")


# -- parser ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ckn", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, seed=True, threads=False):
        if seed:
            sp.add_argument("--seed", type=int, default=0)
        if threads:
            sp.add_argument("--threads", type=int, default=None,
                            help="worker threads (default: $CKN_THREADS or 1)")

    sp = sub.add_parser("train", help="train a CKN layer by layer")
    sp.add_argument("--config")
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--seed", type=int, default=None)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("encode", help="encode patches (or dense image patches) to descriptors")
    sp.add_argument("--model", required=True)
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--pca", help="optional PCA model applied to every descriptor")
    sp.add_argument("--images", action="store_true",
                    help="manifest lists full images; sample keypoints on each")
    sp.add_argument("--owners", help="with --images: write the image of each descriptor here")
    sp.add_argument("--stride", type=int, default=8)
    sp.add_argument("--scales", default="1")
    sp.add_argument("--keypoints-dir", help="read <image name>.kp keypoint files instead of a grid")
    common(sp, threads=True)
    sp.set_defaults(func=cmd_encode)

    sp = sub.add_parser("vocab", help="k-means vocabulary")
    sp.add_argument("--descriptors", required=True)
    sp.add_argument("--k", type=int, default=256)
    sp.add_argument("--max-iters", type=int, default=100)
    sp.add_argument("--out", required=True)
    common(sp)
    sp.set_defaults(func=cmd_vocab)

    sp = sub.add_parser("vlad", help="aggregate per-image descriptors into VLAD vectors")
    sp.add_argument("--descriptors", required=True)
    sp.add_argument("--owners", required=True)
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--codebook", required=True)
    sp.add_argument("--out", required=True)
    common(sp)
    sp.set_defaults(func=cmd_vlad)

    sp = sub.add_parser("pca", help="fit or apply PCA with optional whitening")
    psub = sp.add_subparsers(dest="action", required=True)
    f = psub.add_parser("fit")
    f.add_argument("--descriptors", required=True)
    f.add_argument("--mode", choices=("none", "semi", "full"), default="semi")
    f.add_argument("--dim", type=int, default=1024)
    f.add_argument("--out", required=True)
    common(f)
    a = psub.add_parser("apply")
    a.add_argument("--model", required=True)
    a.add_argument("--descriptors", required=True)
    a.add_argument("--out", required=True)
    a.add_argument("--renormalize", action="store_true", help="l2-normalize after projection")
    common(a)
    sp.set_defaults(func=cmd_pca)

    sp = sub.add_parser("eval", help="retrieval metrics and robustness curves")
    sp.add_argument("kind", choices=("patches", "images", "ukb", "robustness"))
    sp.add_argument("--vectors", help="CKND file aligned with the manifest")
    sp.add_argument("--manifest")
    sp.add_argument("--report", help="JSON-lines report path")
    sp.add_argument("--model", help="robustness: CKNM model")
    sp.add_argument("--dataset", help="robustness: directory written by 'ckn synth'")
    sp.add_argument("--magnitudes", default="0,1,2,3,4")
    sp.add_argument("--limit", type=int, default=None, help="robustness: max number of bases")
    sp.add_argument("--out", help="robustness: CSV output")
    common(sp, threads=True)
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("oracle", help="brute-force reference checks (JSON on stdout)")
    sp.add_argument("kind", choices=("kernel", "gaussian"))
    sp.add_argument("--model", help="kernel: one-layer CKNM model")
    sp.add_argument("--pairs", type=int, default=200)
    sp.add_argument("--map-size", type=int, default=6)
    sp.add_argument("--alpha", type=float, default=1.0)
    sp.add_argument("--dim", type=int, default=3)
    sp.add_argument("--cos", type=float, default=0.0, help="gaussian: cosine between x and x'")
    sp.add_argument("--samples", type=int, default=1_000_000)
    common(sp)
    sp.set_defaults(func=cmd_oracle)

    sp = sub.add_parser("synth", help="generate a synthetic patch-retrieval benchmark")
    sp.add_argument("--out", required=True)
    sp.add_argument("--bases", type=int, default=50)
    sp.add_argument("--copies", type=int, default=10)
    sp.add_argument("--max-shift", type=float, default=2.0)
    sp.add_argument("--max-rotation-deg", type=float, default=5.0)
    sp.add_argument("--max-scale", type=float, default=0.0)
    sp.add_argument("--brightness", type=float, default=0.1)
    sp.add_argument("--spacing", type=int, default=4)
    sp.add_argument("--side", type=int, default=51)
    common(sp)
    sp.set_defaults(func=cmd_synth)
    return p


def _check_args(parser, args):
    if args.command == "eval":
        if args.kind == "robustness":
            missing = [f for f in ("model", "dataset", "out") if getattr(args, f) is None]
        else:
            missing = [f for f in ("vectors", "manifest") if getattr(args, f) is None]
        if missing:
            parser.error(f"eval {args.kind} requires " + ", ".join("--" + m for m in missing))
    if args.command == "oracle" and args.kind == "kernel" and not args.model:
        parser.error("oracle kernel requires --model")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _check_args(parser, args)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (CliError, ValueError, OSError, RuntimeError) as exc:
        print(f"ckn {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
