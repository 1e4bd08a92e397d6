"""Detection and localization metrics.

Classification: accuracy per class, average precision, two-alternative
forced choice. Localization: endpoint error, IOU of thresholded flow
magnitudes, and PSNR gain of the unwarped image.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, List, Sequence, Tuple

import numpy as np

from .flow import flow_magnitude, warp_image, _check_flow

__all__ = [
    "ScoredSample",
    "MetricConfig",
    "psnr",
    "delta_psnr",
    "epe_metric",
    "iou_at_threshold",
    "average_precision",
    "two_afc",
    "accuracy",
    "best_threshold_accuracy",
    "psnr_scale_sweep",
]


@dataclass(frozen=True)
class ScoredSample:
    id: str
    score: float
    label: str  # "real" or "fake"

    def __post_init__(self):
        if not math.isfinite(self.score):
            raise ValueError(f"score for {self.id!r} is not finite")
        if self.label not in ("real", "fake"):
            raise ValueError(f"label must be 'real' or 'fake', got {self.label!r}")

    @property
    def is_fake(self) -> bool:
        return self.label == "fake"


@dataclass(frozen=True)
class MetricConfig:
    iou_threshold: float = 3.0
    psnr_peak: float = 1.0
    psnr_cap: float = 99.0
    accuracy_threshold: float = 0.5

    def __post_init__(self):
        if not self.iou_threshold > 0:
            raise ValueError("iou_threshold must be > 0")
        if not self.psnr_cap > 0:
            raise ValueError("psnr_cap must be > 0")


def _same_shape(a, b, what):
    if a.shape != b.shape:
        raise ValueError(f"{what}: shape mismatch {a.shape} vs {b.shape}")


def psnr(a, b, cfg: MetricConfig = MetricConfig()) -> float:
    """``10 log10(peak^2 / MSE)`` in dB, capped at ``cfg.psnr_cap``."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    _same_shape(a, b, "psnr")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return float(cfg.psnr_cap)
    return float(min(10.0 * math.log10(cfg.psnr_peak ** 2 / mse), cfg.psnr_cap))


def delta_psnr(original, modified, unwarped, cfg: MetricConfig = MetricConfig()) -> float:
    return psnr(original, unwarped, cfg) - psnr(original, modified, cfg)


def epe_metric(pred, gt, mask=None) -> float:
    """Mean endpoint error; with ``mask``, the mask-weighted variant."""
    pred = _check_flow(pred, "pred")
    gt = _check_flow(gt, "gt")
    _same_shape(pred, gt, "epe_metric")
    err = np.hypot(pred[..., 0] - gt[..., 0], pred[..., 1] - gt[..., 1])
    if mask is None:
        return float(err.mean())
    return float((np.asarray(mask) * err).mean())


def iou_at_threshold(pred, gt, tau: float = 3.0) -> float:
    """IOU of the regions where flow magnitude is at least ``tau``.

    Two empty regions count as a perfect match.
    """
    if not tau > 0:
        raise ValueError("tau must be > 0")
    pred = _check_flow(pred, "pred")
    gt = _check_flow(gt, "gt")
    _same_shape(pred, gt, "iou_at_threshold")
    a = flow_magnitude(gt) >= tau
    b = flow_magnitude(pred) >= tau
    union = np.count_nonzero(a | b)
    if union == 0:
        return 1.0
    return np.count_nonzero(a & b) / union


def _as_arrays(samples: Iterable[ScoredSample]):
    samples = list(samples)
    scores = np.array([s.score for s in samples], dtype=np.float64)
    fake = np.array([s.is_fake for s in samples], dtype=bool)
    return scores, fake


def average_precision(samples: Sequence[ScoredSample]) -> float:
    """Mean precision at the rank of each fake, fakes being the positives.

    Ranking is by descending score; equal scores keep their input order
    (stable sort), so tied samples listed earlier rank higher.
    """
    scores, fake = _as_arrays(samples)
    if not fake.any() or fake.all():
        raise ValueError("average precision needs at least one real and one fake sample")
    order = np.argsort(-scores, kind="stable")
    hits = fake[order]
    tp = np.cumsum(hits)
    ranks = np.flatnonzero(hits) + 1
    # fsum keeps the result independent of summation order
    return math.fsum(int(t) / int(r) for t, r in zip(tp[hits], ranks)) / int(hits.sum())


def two_afc(pairs: Sequence[Tuple[float, float]]) -> float:
    """Fraction of (real_score, fake_score) pairs won by the fake; ties score 0.5."""
    if len(pairs) == 0:
        raise ValueError("two_afc needs at least one pair")
    arr = np.asarray(pairs, dtype=np.float64).reshape(-1, 2)
    real, fake = arr[:, 0], arr[:, 1]
    wins = int(np.count_nonzero(fake > real))
    ties = int(np.count_nonzero(fake == real))
    return (wins + 0.5 * ties) / len(arr)


def accuracy(samples: Sequence[ScoredSample], cfg: MetricConfig = MetricConfig()):
    """(total, orig, mod) accuracy in percent at ``cfg.accuracy_threshold``.

    A sample is called fake when its score exceeds the threshold. A class
    with no samples gets NaN.
    """
    return _accuracy_at(*_as_arrays(samples), cfg.accuracy_threshold)


def _accuracy_at(scores, fake, threshold):
    if len(scores) == 0:
        raise ValueError("accuracy needs at least one sample")
    correct = (scores > threshold) == fake

    def pct(sel):
        n = int(np.count_nonzero(sel))
        return 100.0 * int(np.count_nonzero(correct & sel)) / n if n else float("nan")

    return pct(np.ones_like(fake)), pct(~fake), pct(fake)


def best_threshold_accuracy(samples: Sequence[ScoredSample]):
    """Threshold maximising total accuracy, with the accuracies it achieves.

    Candidates are the midpoints between distinct sorted scores plus one
    below the minimum, which covers every distinct split.
    """
    scores, fake = _as_arrays(samples)
    u = np.unique(scores)
    candidates = np.concatenate([[u[0] - 1.0], 0.5 * (u[1:] + u[:-1]), [u[-1]]])
    best = None
    for t in candidates:
        acc = _accuracy_at(scores, fake, t)
        if best is None or acc[0] > best[1][0]:
            best = (float(t), acc)
    return best


def psnr_scale_sweep(original, modified, flow, scales: Sequence[float],
                     cfg: MetricConfig = MetricConfig()) -> List[Tuple[float, float]]:
    """PSNR of ``warp_image(modified, k * flow)`` against ``original`` for each k."""
    if len(scales) == 0:
        raise ValueError("scales must be non-empty")
    flow = _check_flow(flow)
    out = []
    for k in scales:
        unwarped = warp_image(modified, float(k) * flow)
        out.append((float(k), psnr(original, unwarped, cfg)))
    return out
