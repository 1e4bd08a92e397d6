"""Flow-field and raster primitives.

Conventions used throughout the package:

* images are float arrays of shape (H, W) or (H, W, C) with samples in [0, 1];
* flows are float arrays of shape (H, W, 2) holding (dx, dy) in pixels;
* a flow ``U`` from image A to image B means that B sampled at ``p + U(p)``
  shows what A shows at ``p``, so ``warp_image(B, U)`` approximates A.

Resampling is bilinear with edge clamping.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np
from scipy import ndimage

__all__ = [
    "NUM_FLOW_CLASSES",
    "FLOW_CUTOFF",
    "ConsistencyConfig",
    "sample_bilinear",
    "bilinear_sample_field",
    "warp_image",
    "warp_flow",
    "invert_flow",
    "consistency_mask",
    "gaussian_kernel",
    "gaussian_blur",
    "flow_gradient",
    "discretize_flow",
    "undiscretize",
    "flow_magnitude",
]

FLOW_CUTOFF = 5
NUM_FLOW_CLASSES = (2 * FLOW_CUTOFF + 1) ** 2


def _check_flow(flow: np.ndarray, name: str = "flow") -> np.ndarray:
    flow = np.asarray(flow, dtype=np.float64)
    if flow.ndim != 3 or flow.shape[2] != 2:
        raise ValueError(f"{name} must have shape (H, W, 2), got {flow.shape}")
    return flow


def _check_same_grid(a: np.ndarray, b: np.ndarray, what: str) -> None:
    if a.shape[:2] != b.shape[:2]:
        raise ValueError(f"{what}: dimension mismatch {a.shape[:2]} vs {b.shape[:2]}")


def _corners(xs, ys, width, height):
    # Clamp to the valid sample range, then pick the cell whose top-left
    # texel is floor(x), floor(y); the last row/column reuse the previous cell.
    xc = np.clip(xs, 0.0, width - 1.0)
    yc = np.clip(ys, 0.0, height - 1.0)
    x0 = np.floor(xc).astype(np.intp)
    y0 = np.floor(yc).astype(np.intp)
    if width > 1:
        np.minimum(x0, width - 2, out=x0)
        x1 = x0 + 1
    else:
        x1 = x0
    if height > 1:
        np.minimum(y0, height - 2, out=y0)
        y1 = y0 + 1
    else:
        y1 = y0
    fx = xc - x0
    fy = yc - y0
    return x0, x1, y0, y1, fx, fy


@numba.njit(cache=True)
def _sample_kernel(img, xs, ys):  # pragma: no cover - compiled
    height, width, nch = img.shape
    n = xs.size
    out = np.empty((n, nch))
    for i in range(n):
        x = min(max(xs[i], 0.0), width - 1.0)
        y = min(max(ys[i], 0.0), height - 1.0)
        x0 = int(np.floor(x))
        y0 = int(np.floor(y))
        if width > 1:
            x0 = min(x0, width - 2)
            x1 = x0 + 1
        else:
            x1 = x0
        if height > 1:
            y0 = min(y0, height - 2)
            y1 = y0 + 1
        else:
            y1 = y0
        fx = x - x0
        fy = y - y0
        gx = 1.0 - fx
        gy = 1.0 - fy
        for c in range(nch):
            out[i, c] = (gx * gy * img[y0, x0, c] + fx * gy * img[y0, x1, c]
                         + gx * fy * img[y1, x0, c] + fx * fy * img[y1, x1, c])
    return out


def _bilinear_numpy(img, xs, ys, with_grad):
    height, width = img.shape[:2]
    x0, x1, y0, y1, fx, fy = _corners(xs, ys, width, height)

    flat = img.reshape((height * width,) + img.shape[2:])
    r0 = y0 * width
    r1 = y1 * width
    v00 = flat.take(r0 + x0, axis=0)
    v01 = flat.take(r0 + x1, axis=0)
    v10 = flat.take(r1 + x0, axis=0)
    v11 = flat.take(r1 + x1, axis=0)
    extra = (np.newaxis,) * (img.ndim - 2)
    fxe = fx[(...,) + extra]
    fye = fy[(...,) + extra]
    gx = 1.0 - fxe
    gy = 1.0 - fye
    # weight form keeps lattice samples bit-exact
    out = gx * gy * v00 + fxe * gy * v01 + gx * fye * v10 + fxe * fye * v11
    if not with_grad:
        return out

    inside_x = ((xs >= 0.0) & (xs <= width - 1.0))[(...,) + extra]
    inside_y = ((ys >= 0.0) & (ys <= height - 1.0))[(...,) + extra]
    d_dx = gy * (v01 - v00) + fye * (v11 - v10)
    d_dy = gx * (v10 - v00) + fxe * (v11 - v01)
    if width == 1:
        d_dx = np.zeros_like(d_dx)
    if height == 1:
        d_dy = np.zeros_like(d_dy)
    return out, np.where(inside_x, d_dx, 0.0), np.where(inside_y, d_dy, 0.0)


def bilinear_sample_field(img: np.ndarray, xs: np.ndarray, ys: np.ndarray,
                          with_grad: bool = False, use_jit: bool = True):
    """Sample ``img`` at arbitrary coordinates.

    Parameters
    ----------
    img : ndarray (H, W) or (H, W, C)
    xs, ys : ndarray
        Column and row coordinates, broadcastable to each other.
    with_grad : bool
        Also return the derivatives of the samples with respect to ``xs``
        and ``ys``. Derivatives are zero where a coordinate was clamped.
    use_jit : bool
        Use the compiled kernel for plain sampling. Both paths give
        bit-identical samples; the numpy path is the one that also
        produces derivatives.

    Returns
    -------
    samples, or (samples, d_dx, d_dy)
        Arrays of shape ``xs.shape + img.shape[2:]``.
    """
    img = np.asarray(img, dtype=np.float64)
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    xs, ys = np.broadcast_arrays(xs, ys)
    if with_grad or not use_jit:
        return _bilinear_numpy(img, xs, ys, with_grad)
    img3 = np.ascontiguousarray(img.reshape(img.shape[:2] + (-1,)))
    out = _sample_kernel(img3, np.ascontiguousarray(xs).ravel(), np.ascontiguousarray(ys).ravel())
    return out.reshape(xs.shape + img.shape[2:])


def sample_bilinear(img: np.ndarray, x: float, y: float) -> np.ndarray:
    """Bilinear sample of ``img`` at column ``x``, row ``y`` (edge clamped).

    Returns a 1-D array with one value per channel.
    """
    if not (math.isfinite(x) and math.isfinite(y)):
        raise ValueError(f"non-finite sample coordinate ({x}, {y})")
    img = np.asarray(img, dtype=np.float64)
    out = bilinear_sample_field(img, np.array(x), np.array(y))
    return np.atleast_1d(out)


def _pixel_grid(height: int, width: int):
    ys, xs = np.mgrid[0:height, 0:width]
    return xs.astype(np.float64), ys.astype(np.float64)


def warp_image(img: np.ndarray, flow: np.ndarray) -> np.ndarray:
    """Backward warp: ``out(p) = img(p + flow(p))``."""
    img = np.asarray(img, dtype=np.float64)
    flow = _check_flow(flow)
    _check_same_grid(img, flow, "warp_image")
    xs, ys = _pixel_grid(*flow.shape[:2])
    return bilinear_sample_field(img, xs + flow[..., 0], ys + flow[..., 1])


def warp_flow(flow_to_warp: np.ndarray, by: np.ndarray) -> np.ndarray:
    """Resample the components of ``flow_to_warp`` along ``by``."""
    flow_to_warp = _check_flow(flow_to_warp, "flow_to_warp")
    by = _check_flow(by, "by")
    _check_same_grid(flow_to_warp, by, "warp_flow")
    return warp_image(flow_to_warp, by)


def invert_flow(flow: np.ndarray, max_iters: int = 20, tol: float = 1e-3):
    """Numerically invert a flow field by fixed-point iteration.

    Iterates ``V <- -flow(p + V(p))`` from ``V = 0`` until the largest
    residual ``|V(p) + flow(p + V(p))|`` drops below ``tol`` or ``max_iters``
    iterations have run. Converges when the flow's Jacobian has norm < 1,
    which holds for the smooth few-pixel warps generated in this package.

    Returns
    -------
    inverse : ndarray (H, W, 2)
    residual : ndarray (H, W)
        Per-pixel residual magnitude of the returned inverse. Non-convergence
        is visible here; it is never raised.
    """
    flow = _check_flow(flow)
    if max_iters < 1:
        raise ValueError("max_iters must be >= 1")
    xs, ys = _pixel_grid(*flow.shape[:2])
    back = flow  # flow sampled at p + V_0 with V_0 = 0
    for _ in range(max_iters):
        inverse = -back
        back = bilinear_sample_field(flow, xs + inverse[..., 0], ys + inverse[..., 1])
        residual = np.hypot(inverse[..., 0] + back[..., 0], inverse[..., 1] + back[..., 1])
        if residual.max(initial=0.0) <= tol:
            break
    return inverse, residual


@dataclass(frozen=True)
class ConsistencyConfig:
    """Thresholds of the forward-backward consistency test.

    ``epsilon`` regularises the relative error, ``tau`` is the relative error
    above which a pixel is inconsistent, ``blur_sigma`` softens the result.
    """

    epsilon: float = 0.1
    tau: float = 0.85
    blur_sigma: float = 7.0

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be > 0")
        if not 0 < self.tau < 1:
            raise ValueError("tau must lie in (0, 1)")
        if not self.blur_sigma > 0:
            raise ValueError("blur_sigma must be > 0")


def inconsistent_pixels(u_om: np.ndarray, u_mo: np.ndarray, cfg: ConsistencyConfig | None = None):
    """Hard {0, 1} map of pixels failing the relative consistency test."""
    cfg = cfg or ConsistencyConfig()
    u_om = _check_flow(u_om, "u_om")
    u_mo = _check_flow(u_mo, "u_mo")
    _check_same_grid(u_om, u_mo, "consistency_mask")
    u_mo_in_orig = warp_flow(u_mo, u_om)
    err = np.linalg.norm(u_mo_in_orig + u_om, axis=-1)
    rel = err / (np.linalg.norm(u_om, axis=-1) + cfg.epsilon)
    return (rel > cfg.tau).astype(np.float64)


def consistency_mask(u_om: np.ndarray, u_mo: np.ndarray, cfg: ConsistencyConfig | None = None):
    """Soft forward-backward consistency mask in [0, 1] (1 = consistent).

    ``u_om`` maps original to modified, ``u_mo`` modified to original.
    """
    cfg = cfg or ConsistencyConfig()
    hard = inconsistent_pixels(u_om, u_mo, cfg)
    return np.clip(1.0 - gaussian_blur(hard, cfg.blur_sigma), 0.0, 1.0)


def gaussian_kernel(sigma: float) -> np.ndarray:
    radius = int(math.ceil(3.0 * sigma))
    t = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (t / sigma) ** 2)
    return k / k.sum()


def gaussian_blur(field: np.ndarray, sigma: float, mode: str = "nearest") -> np.ndarray:
    """Separable Gaussian blur over the first two axes.

    The kernel is truncated at ``ceil(3 * sigma)`` and renormalised.
    ``mode`` is the scipy boundary mode; ``"nearest"`` is edge clamping,
    ``"wrap"`` treats the field as periodic.
    """
    if not sigma > 0:
        raise ValueError(f"sigma must be > 0, got {sigma}")
    field = np.asarray(field, dtype=np.float64)
    k = gaussian_kernel(sigma)
    out = ndimage.correlate1d(field, k, axis=0, mode=mode)
    return ndimage.correlate1d(out, k, axis=1, mode=mode)


def flow_gradient(flow: np.ndarray, stride: int, axis: str) -> np.ndarray:
    """Forward differences of a flow on its stride-``stride`` lattice.

    The flow is first subsampled as ``flow[::stride, ::stride]``; differences
    are then taken between neighbouring lattice points, so a horizontal
    result has one column fewer than the decimated grid.

    Parameters
    ----------
    axis : {"horizontal", "vertical", "x", "y"}
    """
    flow = _check_flow(flow)
    stride = int(stride)
    if stride < 1:
        raise ValueError("stride must be positive")
    if stride >= min(flow.shape[:2]):
        raise ValueError(f"stride {stride} too large for a {flow.shape[0]}x{flow.shape[1]} flow")
    sub = flow[::stride, ::stride]
    if axis in ("horizontal", "x"):
        return sub[:, 1:] - sub[:, :-1]
    if axis in ("vertical", "y"):
        return sub[1:, :] - sub[:-1, :]
    raise ValueError(f"unknown axis {axis!r}")


def _round_half_away(x: np.ndarray) -> np.ndarray:
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def discretize_flow(flow: np.ndarray) -> np.ndarray:
    """Map each flow vector to one of 121 integer classes.

    Components are rounded (ties away from zero) and clamped to [-5, 5];
    the class index is ``(u + 5) * 11 + (v + 5)`` with ``u`` from dx and
    ``v`` from dy.
    """
    flow = _check_flow(flow)
    if not np.all(np.isfinite(flow)):
        raise ValueError("flow contains non-finite values")
    q = np.clip(_round_half_away(flow), -FLOW_CUTOFF, FLOW_CUTOFF).astype(np.int64)
    side = 2 * FLOW_CUTOFF + 1
    return (q[..., 0] + FLOW_CUTOFF) * side + (q[..., 1] + FLOW_CUTOFF)


def undiscretize(grid: np.ndarray) -> np.ndarray:
    grid = np.asarray(grid)
    if not np.issubdtype(grid.dtype, np.integer):
        raise ValueError("class grid must be integer-valued")
    if grid.size and (grid.min() < 0 or grid.max() >= NUM_FLOW_CLASSES):
        raise ValueError(f"class ids must lie in [0, {NUM_FLOW_CLASSES - 1}]")
    side = 2 * FLOW_CUTOFF + 1
    u = grid // side - FLOW_CUTOFF
    v = grid % side - FLOW_CUTOFF
    return np.stack([u, v], axis=-1).astype(np.float64)


def flow_magnitude(flow: np.ndarray) -> np.ndarray:
    flow = _check_flow(flow)
    return np.hypot(flow[..., 0], flow[..., 1])
