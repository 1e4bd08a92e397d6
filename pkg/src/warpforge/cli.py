"""Synthesize face-warp datasets, inspect flows and score predictions.

Subcommands: synth, mask, unwarp, overlay, loss, eval, augment, corrupt,
demo-corpus. Log verbosity comes from the WARPFORGE_LOG environment variable.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

from . import augment as aug
from .flow import ConsistencyConfig, consistency_mask, invert_flow
from .io import (read_flo, read_image, read_manifest, read_msk, read_scores, write_image,
                 write_msk)
from .losses import LossConfig, total_loss
from .metrics import MetricConfig
from .pipeline import (IMAGE_SUFFIXES, EvalBundle, benchmark_synthesis, evaluate,
                       generate_dataset, render_overlay, render_undo)
from .synth import SynthConfig, derive_seed

log = logging.getLogger("warpforge")


def _load_config(path):
    if not path:
        return {}
    with open(path) as fh:
        return json.load(fh)


def _synth_config(args, conf) -> SynthConfig:
    cfg = SynthConfig.from_dict(conf.get("synth", {}))
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if getattr(args, "max_disp", None) is not None:
        cfg = replace(cfg, max_displacement=args.max_disp)
    return cfg


def _metric_config(args, conf) -> MetricConfig:
    cfg = MetricConfig(**conf.get("metrics", {}))
    if args.iou_tau is not None:
        cfg = replace(cfg, iou_threshold=args.iou_tau)
    if args.acc_threshold is not None:
        cfg = replace(cfg, accuracy_threshold=args.acc_threshold)
    return cfg


def _consistency_config(args, conf) -> ConsistencyConfig:
    d = dict(conf.get("consistency", {}))
    for key in ("epsilon", "tau", "blur_sigma"):
        if getattr(args, key, None) is not None:
            d[key] = getattr(args, key)
    return ConsistencyConfig(**d)


def _emit(obj, out=None):
    text = json.dumps(obj, indent=2, sort_keys=True)
    if out:
        Path(out).write_text(text + "\n")
    else:
        print(text)


def cmd_synth(args, conf):
    cfg = _synth_config(args, conf)
    if args.benchmark:
        result = benchmark_synthesis(args.benchmark, args.bench_size, args.workers, cfg,
                                     _consistency_config(args, conf))
        _emit(result)
        return 0
    if not (args.images and args.landmarks and args.out):
        raise SystemExit("synth needs --images, --landmarks and --out (or --benchmark N)")
    reps = args.reps if args.reps is not None else conf.get("reps", 6)
    entries = generate_dataset(args.images, args.landmarks, args.out, cfg, reps=reps,
                               workers=args.workers,
                               consistency=_consistency_config(args, conf))
    n_fake = sum(e["label"] == "fake" for e in entries)
    print(f"{len(entries) - n_fake} real + {n_fake} fake entries -> {Path(args.out) / 'manifest.jsonl'}")
    return 0


def cmd_mask(args, conf):
    u_om = read_flo(args.forward)
    if args.backward:
        u_mo = read_flo(args.backward)
    else:
        u_mo, residual = invert_flow(u_om, args.iters)
        log.info("numeric inverse: mean residual %.3g px", residual.mean())
    mask = consistency_mask(u_om, u_mo, _consistency_config(args, conf))
    write_msk(args.out, mask)
    print(f"mean mask {mask.mean():.4f} -> {args.out}")
    return 0


def cmd_unwarp(args, conf):
    render_undo(read_image(args.image), read_flo(args.flow), args.out)
    return 0


def cmd_overlay(args, conf):
    max_disp = args.max_disp if args.max_disp is not None else 5.0
    render_overlay(read_image(args.image), read_flo(args.flow), args.out, max_disp)
    return 0


def cmd_loss(args, conf):
    lc = conf.get("loss", {})
    cfg = LossConfig(**lc)
    if args.strides:
        cfg = replace(cfg, strides=tuple(args.strides))
    mask = read_msk(args.mask) if args.mask else None
    lv = total_loss(read_image(args.modified), read_flo(args.pred), read_flo(args.gt), mask,
                    read_image(args.original), cfg, grad=False)
    _emit({"epe": lv.components["epe"], "ms": lv.components["ms"], "rec": lv.components["rec"],
           "total": lv.value,
           "lambdas": {"epe": cfg.lambda_epe, "ms": cfg.lambda_ms, "rec": cfg.lambda_rec},
           "strides": list(cfg.strides)})
    return 0


def cmd_eval(args, conf):
    manifest = read_manifest(args.manifest)
    root = Path(args.root) if args.root else Path(args.manifest).parent
    scores = None
    if args.scores:
        scores = {k: v[0] for k, v in read_scores(args.scores).items()}
    flow_paths = None
    if args.flows:
        flow_paths = {p.stem: str(p) for p in Path(args.flows).glob("*.flo")}
    report = evaluate(manifest, EvalBundle(scores=scores, flow_paths=flow_paths), root,
                      _metric_config(args, conf))
    if not args.per_entry and "localization" in report:
        report["localization"].pop("entries", None)
    _emit(report, args.out)
    return 0


def _images_in(directory):
    return sorted(p for p in Path(directory).iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)


def cmd_augment(args, conf):
    spec_d = _load_config(args.spec)
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    for path in _images_in(args.input):
        d = dict(spec_d)
        if args.per_image_seed:
            d["seed"] = derive_seed(d.get("seed", 0), path.stem)
        spec = aug.AugmentSpec.from_dict(d)
        write_image(out / (path.stem + ".png"), aug.apply_augment(read_image(path), spec))
    return 0


def cmd_corrupt(args, conf):
    out = Path(args.output)
    for path in _images_in(args.input):
        img = read_image(path)
        for q in args.jpeg or ():
            d = out / f"jpeg_q{q}"
            d.mkdir(parents=True, exist_ok=True)
            write_image(d / (path.stem + ".png"), aug.jpeg_cycle(img, q))
        for s in args.blur or ():
            d = out / f"blur_s{s:g}"
            d.mkdir(parents=True, exist_ok=True)
            write_image(d / (path.stem + ".png"), aug.blur(img, s))
    return 0


def cmd_demo_corpus(args, conf):
    from .faces import write_demo_corpus

    path = write_demo_corpus(args.out, args.count, args.size, args.seed or 0)
    print(f"{args.count} images, landmarks in {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file with synth/consistency/metrics/loss sections")
    common.add_argument("--seed", type=int, default=None)

    p = argparse.ArgumentParser(prog="warpforge", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", parents=[common], help="generate a warped-face dataset")
    s.add_argument("--images", help="directory of original images")
    s.add_argument("--landmarks", help="landmark JSON (list of mesh records)")
    s.add_argument("--out", help="output dataset directory")
    s.add_argument("--reps", type=int, default=None, help="warped copies per image (default 6)")
    s.add_argument("--max-disp", type=float, default=None, help="max displacement px (default 5)")
    s.add_argument("--workers", type=int, default=None, help="worker processes (default: all cores)")
    s.add_argument("--benchmark", type=int, default=0, metavar="N",
                   help="time N in-memory syntheses and report triples/second")
    s.add_argument("--bench-size", type=int, default=256)
    s.set_defaults(func=cmd_synth)

    m = sub.add_parser("mask", parents=[common], help="consistency mask from a flow pair")
    m.add_argument("--forward", required=True, help="original->modified .flo")
    m.add_argument("--backward", help="modified->original .flo (default: numeric inverse)")
    m.add_argument("--out", required=True, help="output MSK1 file")
    m.add_argument("--epsilon", type=float)
    m.add_argument("--tau", type=float)
    m.add_argument("--blur-sigma", dest="blur_sigma", type=float)
    m.add_argument("--iters", type=int, default=20)
    m.set_defaults(func=cmd_mask)

    u = sub.add_parser("unwarp", parents=[common], help="undo a warp with a flow")
    u.add_argument("--image", required=True)
    u.add_argument("--flow", required=True)
    u.add_argument("--out", required=True)
    u.set_defaults(func=cmd_unwarp)

    o = sub.add_parser("overlay", parents=[common], help="flow-magnitude heat overlay")
    o.add_argument("--image", required=True)
    o.add_argument("--flow", required=True)
    o.add_argument("--out", required=True)
    o.add_argument("--max-disp", type=float, default=None, help="magnitude mapped to full heat")
    o.set_defaults(func=cmd_overlay)

    lo = sub.add_parser("loss", parents=[common], help="evaluate the training losses")
    lo.add_argument("--pred", required=True)
    lo.add_argument("--gt", required=True)
    lo.add_argument("--mask")
    lo.add_argument("--modified", required=True)
    lo.add_argument("--original", required=True)
    lo.add_argument("--strides", type=int, nargs="+")
    lo.set_defaults(func=cmd_loss)

    e = sub.add_parser("eval", parents=[common], help="score predictions against a manifest")
    e.add_argument("--manifest", required=True)
    e.add_argument("--root", help="dataset root (default: manifest directory)")
    e.add_argument("--scores", help="CSV id,score,label")
    e.add_argument("--flows", help="directory of <id>.flo predictions")
    e.add_argument("--iou-tau", type=float, default=None)
    e.add_argument("--acc-threshold", type=float, default=None)
    e.add_argument("--per-entry", action="store_true", help="keep per-entry localization rows")
    e.add_argument("--out", help="write the JSON report here instead of stdout")
    e.set_defaults(func=cmd_eval)

    a = sub.add_parser("augment", parents=[common], help="apply an augmentation spec")
    a.add_argument("--spec", required=True, help="AugmentSpec JSON")
    a.add_argument("--input", required=True)
    a.add_argument("--output", required=True)
    a.add_argument("--per-image-seed", action="store_true",
                   help="derive each image's seed from the AugmentSpec seed and its name")
    a.set_defaults(func=cmd_augment)

    c = sub.add_parser("corrupt", parents=[common], help="JPEG / blur robustness variants")
    c.add_argument("--input", required=True)
    c.add_argument("--output", required=True)
    c.add_argument("--jpeg", type=int, nargs="*", help="JPEG qualities")
    c.add_argument("--blur", type=float, nargs="*", help="Gaussian blur sigmas")
    c.set_defaults(func=cmd_corrupt)

    d = sub.add_parser("demo-corpus", parents=[common], help="render synthetic faces + landmarks")
    d.add_argument("--out", required=True)
    d.add_argument("--count", type=int, default=20)
    d.add_argument("--size", type=int, default=256)
    d.set_defaults(func=cmd_demo_corpus)
    return p


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("WARPFORGE_LOG", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    return args.func(args, _load_config(args.config))


if __name__ == "__main__":
    sys.exit(main())
