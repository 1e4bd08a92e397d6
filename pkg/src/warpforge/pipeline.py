"""Dataset generation, evaluation harness and visualizations."""

from __future__ import annotations

import json
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from .augment import luma
from .flow import (FLOW_CUTOFF, ConsistencyConfig, consistency_mask, flow_magnitude,
                   warp_image)
from .io import (read_flo, read_image, read_landmarks, read_msk, write_flo, write_image,
                 write_manifest, write_msk)
from .metrics import (MetricConfig, ScoredSample, accuracy, average_precision,
                      best_threshold_accuracy, delta_psnr, epe_metric, iou_at_threshold,
                      two_afc)
from .synth import SynthConfig, _synthesize, derive_seed

log = logging.getLogger(__name__)

__all__ = [
    "IMAGE_SUFFIXES",
    "DEFAULT_SPLITS",
    "assign_split",
    "generate_dataset",
    "balanced_iteration_weights",
    "EvalBundle",
    "evaluate",
    "overlay_weights",
    "render_overlay",
    "render_undo",
    "benchmark_synthesis",
]

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")
DEFAULT_SPLITS = {"train": 0.8, "val": 0.1, "test": 0.1}


def assign_split(image_id: str, splits: Dict[str, float] = DEFAULT_SPLITS) -> str:
    """Split from a hash of the image id; stable as the corpus grows."""
    u = derive_seed(0, "split", image_id) / 2.0 ** 64
    total = sum(splits.values())
    acc = 0.0
    for name, frac in splits.items():
        acc += frac / total
        if u < acc:
            return name
    return list(splits)[-1]


def _process_image(task):
    image_path, mesh, image_id, out_dir, cfg, reps, split, ccfg = task
    out_dir = Path(out_dir)
    img = read_image(image_path)
    orig_rel = f"originals/{image_id}.png"
    write_image(out_dir / orig_rel, img)
    # work from the stored original so evaluation sees the same pixels
    img = read_image(out_dir / orig_rel)
    entries = [{
        "id": image_id, "image_id": image_id, "label": "real", "split": split,
        "original_path": orig_rel, "warped_path": None, "flow_path": None, "mask_path": None,
        "params": None, "seed": None, "augment_spec": None,
    }]
    for rep in range(reps):
        fid = f"{image_id}_r{rep}"
        seed = derive_seed(cfg.seed, image_id, rep)
        warped, gt_flow, params, backward = _synthesize(img, mesh, seed, cfg)
        mask = consistency_mask(gt_flow, backward, ccfg)
        rel = {k: f"{k}/{fid}.{ext}" for k, ext in
               (("warped", "png"), ("flows", "flo"), ("masks", "msk"))}
        write_image(out_dir / rel["warped"], warped)
        write_flo(out_dir / rel["flows"], gt_flow)
        write_msk(out_dir / rel["masks"], mask)
        entries.append({
            "id": fid, "image_id": image_id, "label": "fake", "split": split,
            "original_path": orig_rel, "warped_path": rel["warped"],
            "flow_path": rel["flows"], "mask_path": rel["masks"],
            "params": params.to_dict(), "seed": seed, "augment_spec": None,
        })
    return entries


def generate_dataset(image_dir, landmarks_file, out_dir, cfg: SynthConfig = SynthConfig(),
                     reps: int = 6, splits: Dict[str, float] = DEFAULT_SPLITS,
                     workers: Optional[int] = None,
                     consistency: ConsistencyConfig = ConsistencyConfig()) -> List[dict]:
    """Synthesize ``reps`` warped copies of every landmarked image.

    Writes originals, warped PNGs, ground-truth .flo flows and MSK1
    consistency masks under ``out_dir`` together with ``manifest.jsonl``
    (sorted by id, paths relative to ``out_dir``) and ``meta.json``.
    Images without landmarks are skipped with a warning.
    """
    image_dir, out_dir = Path(image_dir), Path(out_dir)
    meshes = read_landmarks(landmarks_file)
    for sub in ("originals", "warped", "flows", "masks"):
        (out_dir / sub).mkdir(parents=True, exist_ok=True)

    tasks = []
    for path in sorted(p for p in image_dir.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES):
        image_id = path.stem
        mesh = meshes.get(image_id)
        if mesh is None:
            log.warning("no landmarks for %s; skipped", path.name)
            continue
        tasks.append((str(path), mesh, image_id, str(out_dir), cfg, reps,
                      assign_split(image_id, splits), consistency))

    workers = workers or os.cpu_count() or 1
    if workers == 1 or len(tasks) <= 1:
        results = [_process_image(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_process_image, tasks))

    entries = sorted((e for r in results for e in r), key=lambda e: e["id"])
    write_manifest(out_dir / "manifest.jsonl", entries)
    meta = {
        "synth_config": cfg.to_dict(),
        "consistency": {"epsilon": consistency.epsilon, "tau": consistency.tau,
                        "blur_sigma": consistency.blur_sigma},
        "reps": reps,
        "splits": splits,
        "flow_convention": "U maps original to warped: warped(p + U(p)) ~ original(p)",
        "flow_classes": {"cutoff": FLOW_CUTOFF,
                         "index": "(round(dx) + 5) * 11 + (round(dy) + 5), ties away from zero"},
    }
    (out_dir / "meta.json").write_text(json.dumps(meta, indent=1, sort_keys=True) + "\n")
    log.info("wrote %d entries for %d images to %s", len(entries), len(tasks), out_dir)
    return entries


def balanced_iteration_weights(manifest: Sequence[dict]) -> List[float]:
    """Per-entry sampling weights equalising the expected label frequencies."""
    labels = [e["label"] for e in manifest]
    n_real, n_fake = labels.count("real"), labels.count("fake")
    if n_real == 0 or n_fake == 0:
        raise ValueError("manifest needs both real and fake entries")
    w_real = n_fake / n_real
    return [w_real if lab == "real" else 1.0 for lab in labels]


@dataclass
class EvalBundle:
    """External predictions: manipulation scores and/or predicted flow files."""

    scores: Optional[Dict[str, float]] = None
    flow_paths: Optional[Dict[str, str]] = None
    flows: Optional[Dict[str, np.ndarray]] = field(default=None, repr=False)

    def predicted_flow(self, entry_id):
        if self.flows is not None and entry_id in self.flows:
            return self.flows[entry_id]
        if self.flow_paths is not None and entry_id in self.flow_paths:
            return read_flo(self.flow_paths[entry_id])
        return None

    def flow_ids(self):
        ids = set()
        if self.flows:
            ids |= set(self.flows)
        if self.flow_paths:
            ids |= set(self.flow_paths)
        return ids


def _classification_report(manifest, scores, cfg):
    samples = [ScoredSample(e["id"], float(scores[e["id"]]), e["label"])
               for e in manifest if e["id"] in scores]
    missing = len(manifest) - len(samples)
    if missing:
        log.warning("%d manifest entries have no score", missing)
    if not samples:
        return None
    total, orig, mod = accuracy(samples, cfg)
    report = {
        "n_real": sum(not s.is_fake for s in samples),
        "n_fake": sum(s.is_fake for s in samples),
        "accuracy": {"threshold": cfg.accuracy_threshold, "total": total, "orig": orig, "mod": mod},
    }
    t, (bt, bo, bm) = best_threshold_accuracy(samples)
    report["accuracy_best_threshold"] = {"threshold": t, "total": bt, "orig": bo, "mod": bm}
    try:
        report["ap"] = 100.0 * average_precision(samples)
    except ValueError:
        log.warning("AP skipped: scores cover a single class")
    by_id = {s.id: s for s in samples}
    pairs = []
    for e in manifest:
        if e["label"] == "fake" and e["id"] in by_id and e["image_id"] in by_id:
            pairs.append((by_id[e["image_id"]].score, by_id[e["id"]].score))
    if pairs:
        report["2afc"] = 100.0 * two_afc(pairs)
        report["n_pairs"] = len(pairs)
    return report


def _localization_report(manifest, root, bundle, cfg):
    rows = []
    for e in manifest:
        if e["label"] != "fake":
            continue
        pred = bundle.predicted_flow(e["id"])
        if pred is None:
            continue
        gt = read_flo(root / e["flow_path"])
        if pred.shape != gt.shape:
            raise ValueError(f"{e['id']}: predicted flow {pred.shape} vs ground truth {gt.shape}")
        mask = read_msk(root / e["mask_path"]) if e.get("mask_path") else None
        original = read_image(root / e["original_path"])
        warped = read_image(root / e["warped_path"])
        unwarped = warp_image(warped, pred)
        rows.append({
            "id": e["id"],
            "epe": epe_metric(pred, gt),
            "epe_masked": epe_metric(pred, gt, mask) if mask is not None else None,
            "iou": iou_at_threshold(pred, gt, cfg.iou_threshold),
            "gt_region_px": int(np.count_nonzero(flow_magnitude(gt) >= cfg.iou_threshold)),
            "delta_psnr": delta_psnr(original, warped, unwarped, cfg),
        })
    if not rows:
        return None

    def mean(key):
        vals = [r[key] for r in rows if r[key] is not None]
        return float(np.mean(vals)) if vals else None

    return {
        "n": len(rows),
        "epe": mean("epe"),
        "epe_masked": mean("epe_masked"),
        "iou_tau": cfg.iou_threshold,
        "iou": mean("iou"),
        "delta_psnr": mean("delta_psnr"),
        "entries": rows,
    }


def evaluate(manifest: Sequence[dict], bundle: EvalBundle, root=".",
             cfg: MetricConfig = MetricConfig()) -> dict:
    """Score external predictions against a generated dataset.

    Returns a report with a ``classification`` section (accuracy total/orig/mod,
    AP and 2AFC, in percent) and a ``localization`` section (EPE, IOU at
    ``cfg.iou_threshold``, delta PSNR, averaged over fakes). A section whose
    predictions are absent is omitted with a warning.
    """
    root = Path(root)
    known = {e["id"] for e in manifest}
    unknown = (set(bundle.scores or ()) | bundle.flow_ids()) - known
    if unknown:
        raise ValueError(f"predictions for ids not in the manifest: {sorted(unknown)[:5]}")

    report = {"metric_config": {"iou_threshold": cfg.iou_threshold, "psnr_cap": cfg.psnr_cap,
                                "accuracy_threshold": cfg.accuracy_threshold}}
    if bundle.scores:
        cls = _classification_report(manifest, bundle.scores, cfg)
        if cls is not None:
            report["classification"] = cls
    else:
        log.warning("no scores supplied; classification section omitted")
    if bundle.flow_ids():
        loc = _localization_report(manifest, root, bundle, cfg)
        if loc is not None:
            report["localization"] = loc
        else:
            log.warning("no predicted flows for fake entries; localization section omitted")
    else:
        log.warning("no predicted flows supplied; localization section omitted")
    return report


def _heat(w):
    # black-red-yellow-white ramp
    return np.stack([np.clip(3 * w, 0, 1), np.clip(3 * w - 1, 0, 1), np.clip(3 * w - 2, 0, 1)], -1)


def overlay_weights(flow, max_displacement: float = float(FLOW_CUTOFF)) -> np.ndarray:
    """Flow magnitude normalised to [0, 1] on the fixed scale 0..max_displacement."""
    return np.clip(flow_magnitude(flow) / max_displacement, 0.0, 1.0)


def render_overlay(img, flow, out_path=None, max_displacement: float = float(FLOW_CUTOFF),
                   opacity: float = 0.8) -> np.ndarray:
    """Flow magnitude as a heat map blended over a grayscale copy of ``img``.

    The heat colour and its opacity both follow the magnitude on the fixed
    scale 0..max_displacement px, so renders are comparable across images and
    zero flow leaves the grayscale image untouched.
    """
    img = np.asarray(img, dtype=np.float64)
    flow = np.asarray(flow, dtype=np.float64)
    if img.shape[:2] != flow.shape[:2]:
        raise ValueError(f"image {img.shape[:2]} and flow {flow.shape[:2]} differ")
    gray = luma(img) if img.ndim == 3 else img
    base = np.repeat(gray[..., None], 3, axis=-1)
    w = overlay_weights(flow, max_displacement)
    a = (opacity * w)[..., None]
    out = (1.0 - a) * base + a * _heat(w)
    if out_path is not None:
        write_image(out_path, out)
    return out


def render_undo(modified, flow, out_path=None) -> np.ndarray:
    """Resample ``modified`` along ``flow``; writes a PNG when ``out_path`` is given."""
    out = np.clip(warp_image(modified, flow), 0.0, 1.0)
    if out_path is not None:
        write_image(out_path, out)
    return out


def _bench_worker(args):
    from .faces import render_face

    start, count, size, cfg, ccfg = args
    img, mesh = render_face(start, size)
    for i in range(count):
        _, gt, _, back = _synthesize(img, mesh, derive_seed(cfg.seed, "bench", start + i), cfg)
        consistency_mask(gt, back, ccfg)
    return count


def benchmark_synthesis(n: int = 200, size: int = 256, workers: Optional[int] = None,
                        cfg: SynthConfig = SynthConfig(),
                        consistency: ConsistencyConfig = ConsistencyConfig()) -> dict:
    """Time in-memory synthesis of ``n`` triples plus masks (no file I/O)."""
    workers = workers or os.cpu_count() or 1
    per = math.ceil(n / workers)
    jobs = [(w * per, min(per, n - w * per), size, cfg, consistency)
            for w in range(workers) if n - w * per > 0]
    t0 = time.perf_counter()
    if workers == 1:
        done = sum(_bench_worker(j) for j in jobs)
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            done = sum(pool.map(_bench_worker, jobs))
    dt = time.perf_counter() - t0
    return {"triples": done, "seconds": dt, "triples_per_second": done / dt,
            "workers": workers, "size": size}
