"""Flow-prediction losses with analytic gradients.

Each loss returns a :class:`LossValue` holding the scalar and its gradient
with respect to the predicted flow, so the losses can be checked and used
without an autodiff framework. Pass ``grad=False`` for a cheaper value-only
evaluation; the returned ``grad`` is then None.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence

import numpy as np

from .flow import _check_flow, _pixel_grid, bilinear_sample_field

__all__ = [
    "LossConfig",
    "LossValue",
    "epe_loss",
    "multiscale_loss",
    "reconstruction_loss",
    "weighted_total",
    "total_loss",
]


@dataclass(frozen=True)
class LossConfig:
    lambda_epe: float = 1.5
    lambda_ms: float = 15.0
    lambda_rec: float = 1.0
    strides: Sequence[int] = (2, 8, 32, 64)

    def __post_init__(self):
        if min(self.lambda_epe, self.lambda_ms, self.lambda_rec) < 0:
            raise ValueError("loss weights must be non-negative")
        if not self.strides or min(self.strides) < 1:
            raise ValueError("strides must be positive")


@dataclass
class LossValue:
    value: float
    grad: Optional[np.ndarray]
    components: Dict[str, float] = field(default_factory=dict)


def _prepare(pred, gt, mask):
    pred = _check_flow(pred, "pred")
    gt = _check_flow(gt, "gt")
    if pred.shape != gt.shape:
        raise ValueError(f"pred {pred.shape[:2]} and gt {gt.shape[:2]} differ")
    if mask is None:
        mask = np.ones(pred.shape[:2])
    mask = np.asarray(mask, dtype=np.float64)
    if mask.shape != pred.shape[:2]:
        raise ValueError(f"mask {mask.shape} does not match flow {pred.shape[:2]}")
    return pred, gt, mask


def _masked_norm_mean(diff, mask, grad=True):
    """mean_p |mask(p) * diff(p)| and its gradient with respect to ``diff``."""
    r = mask[..., None] * diff
    n = np.hypot(r[..., 0], r[..., 1])
    count = n.size
    if not grad:
        return float(n.sum()) / count, None
    # d|M d| / dd = M^2 d / |M d|, zero where the norm vanishes
    scale = np.divide(mask, n * count, out=np.zeros_like(n), where=n > 0)
    return float(n.sum()) / count, scale[..., None] * r


def epe_loss(pred, gt, mask=None, grad: bool = True) -> LossValue:
    """Mean masked endpoint error ``mean_p |M(p) (pred(p) - gt(p))|``."""
    pred, gt, mask = _prepare(pred, gt, mask)
    value, g = _masked_norm_mean(pred - gt, mask, grad)
    return LossValue(value, g, {"epe": value})


def multiscale_loss(pred, gt, mask=None, cfg: LossConfig = LossConfig(),
                    grad: bool = True) -> LossValue:
    """Masked endpoint error between flow gradients, summed over strides and axes.

    At stride ``s`` both flows and the mask are subsampled on the
    ``[::s, ::s]`` lattice; differences are taken between lattice neighbours
    and the mask is read at the first point of each pair.
    """
    pred, gt, mask = _prepare(pred, gt, mask)
    h, w = pred.shape[:2]
    if max(cfg.strides) >= min(h, w):
        raise ValueError(f"stride {max(cfg.strides)} too large for a {h}x{w} flow")
    total = 0.0
    gfull = np.zeros_like(pred) if grad else None
    for s in cfg.strides:
        sub = pred[::s, ::s] - gt[::s, ::s]
        msub = mask[::s, ::s]
        vh, gh = _masked_norm_mean(sub[:, 1:] - sub[:, :-1], msub[:, :-1], grad)
        vv, gv = _masked_norm_mean(sub[1:, :] - sub[:-1, :], msub[:-1, :], grad)
        total += vh + vv
        if grad:
            gsub = np.zeros_like(sub)
            gsub[:, 1:] += gh
            gsub[:, :-1] -= gh
            gsub[1:, :] += gv
            gsub[:-1, :] -= gv
            gfull[::s, ::s] += gsub
    return LossValue(total, gfull, {"ms": total})


def reconstruction_loss(modified, pred, original, grad: bool = True) -> LossValue:
    """Mean absolute error between ``warp_image(modified, pred)`` and ``original``.

    The gradient flows through the bilinear weights. The l1 subgradient at a
    zero residual is 0, and clamped sample coordinates contribute nothing.
    """
    pred = _check_flow(pred, "pred")
    modified = np.asarray(modified, dtype=np.float64)
    original = np.asarray(original, dtype=np.float64)
    if modified.shape != original.shape:
        raise ValueError(f"modified {modified.shape} and original {original.shape} differ")
    if modified.shape[:2] != pred.shape[:2]:
        raise ValueError(f"image {modified.shape[:2]} and flow {pred.shape[:2]} differ")
    if modified.ndim == 2:
        modified = modified[..., None]
        original = original[..., None]
    xs, ys = _pixel_grid(*pred.shape[:2])
    xs = xs + pred[..., 0]
    ys = ys + pred[..., 1]
    if not grad:
        value = float(np.abs(bilinear_sample_field(modified, xs, ys) - original).mean())
        return LossValue(value, None, {"rec": value})
    out, d_dx, d_dy = bilinear_sample_field(modified, xs, ys, with_grad=True)
    resid = out - original
    value = float(np.abs(resid).mean())
    sgn = np.sign(resid) / resid.size
    g = np.stack([(sgn * d_dx).sum(axis=-1), (sgn * d_dy).sum(axis=-1)], axis=-1)
    return LossValue(value, g, {"rec": value})


def weighted_total(epe: float, ms: float, rec: float, cfg: LossConfig = LossConfig()) -> float:
    return cfg.lambda_epe * epe + cfg.lambda_ms * ms + cfg.lambda_rec * rec


def total_loss(modified, pred, gt, mask, original, cfg: LossConfig = LossConfig(),
               grad: bool = True) -> LossValue:
    """Weighted sum of the endpoint, multiscale and reconstruction losses."""
    e = epe_loss(pred, gt, mask, grad)
    m = multiscale_loss(pred, gt, mask, cfg, grad)
    r = reconstruction_loss(modified, pred, original, grad)
    value = weighted_total(e.value, m.value, r.value, cfg)
    g = None
    if grad:
        g = cfg.lambda_epe * e.grad + cfg.lambda_ms * m.grad + cfg.lambda_rec * r.grad
    comps = {"epe": e.value, "ms": m.value, "rec": r.value, "total": value}
    return LossValue(value, g, comps)
