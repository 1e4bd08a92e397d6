"""Synthetic face warps with exact ground-truth flow.

The 16-parameter vocabulary below is a stand-in for Face-Aware Liquify's
controls: each parameter moves a few control points derived from one or two
landmark groups, and the control-point displacements are spread into a dense
field as a sum of Gaussian bumps.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, fields
from typing import Dict, List, Sequence, Tuple

import numpy as np

from .flow import gaussian_blur, invert_flow, warp_image

__all__ = [
    "PARAM_NAMES",
    "LANDMARK_GROUPS",
    "LandmarkMesh",
    "FalParams",
    "SynthConfig",
    "derive_seed",
    "sample_fal_params",
    "control_displacements",
    "scatter_rbf",
    "params_to_flow",
    "synthesize_example",
    "random_smooth_warp",
    "make_noise_image",
]

PARAM_NAMES = (
    "eye_size_L", "eye_size_R", "eye_height", "eye_width", "eye_tilt", "eye_distance",
    "nose_width", "nose_height",
    "mouth_smile", "mouth_width", "mouth_height", "upper_lip", "lower_lip",
    "forehead_height", "chin_height", "face_width",
)

LANDMARK_GROUPS = ("left_eye", "right_eye", "nose", "mouth", "jaw", "forehead")

# landmark groups each parameter reads, besides both eyes (always needed
# for the inter-ocular distance)
_PARAM_GROUPS = {
    "eye_size_L": ("left_eye",),
    "eye_size_R": ("right_eye",),
    "eye_height": (),
    "eye_width": (),
    "eye_tilt": (),
    "eye_distance": (),
    "nose_width": ("nose",),
    "nose_height": ("nose",),
    "mouth_smile": ("mouth",),
    "mouth_width": ("mouth",),
    "mouth_height": ("mouth",),
    "upper_lip": ("mouth",),
    "lower_lip": ("mouth",),
    "forehead_height": ("forehead",),
    "chin_height": ("jaw",),
    "face_width": ("jaw",),
}


@dataclass
class LandmarkMesh:
    """Facial landmarks in pixel coordinates plus their group labels."""

    points: np.ndarray
    groups: Dict[str, List[int]]
    height: int
    width: int
    image: str | None = None

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64).reshape(-1, 2)
        self.groups = {k: [int(i) for i in v] for k, v in self.groups.items()}
        n = len(self.points)
        for name, idx in self.groups.items():
            if not idx:
                raise ValueError(f"landmark group {name!r} is empty")
            if min(idx) < 0 or max(idx) >= n:
                raise ValueError(f"landmark group {name!r} indexes outside the {n} points")
        if n:
            x, y = self.points[:, 0], self.points[:, 1]
            if x.min() < 0 or y.min() < 0 or x.max() > self.width - 1 or y.max() > self.height - 1:
                raise ValueError("landmarks fall outside the image bounds")

    def group(self, name: str) -> np.ndarray:
        if name not in self.groups:
            raise KeyError(f"landmark group {name!r} missing from mesh")
        return self.points[self.groups[name]]

    def centroid(self, name: str) -> np.ndarray:
        return self.group(name).mean(axis=0)

    def interocular(self) -> float:
        return float(np.linalg.norm(self.centroid("left_eye") - self.centroid("right_eye")))

    def bbox(self, name: str) -> Tuple[float, float, float, float]:
        """(x_min, y_min, x_max, y_max) of one group."""
        g = self.group(name)
        return (g[:, 0].min(), g[:, 1].min(), g[:, 0].max(), g[:, 1].max())

    def to_dict(self) -> dict:
        return {
            "image": self.image,
            "height": self.height,
            "width": self.width,
            "points": self.points.tolist(),
            "groups": self.groups,
        }

    @classmethod
    def from_dict(cls, d: dict, height: int | None = None, width: int | None = None):
        h = d.get("height", height)
        w = d.get("width", width)
        if h is None or w is None:
            raise ValueError("landmark record needs image dimensions")
        return cls(points=d["points"], groups=d["groups"], height=int(h), width=int(w),
                   image=d.get("image"))

    @classmethod
    def from_json(cls, path, height: int | None = None, width: int | None = None):
        with open(path) as fh:
            return cls.from_dict(json.load(fh), height, width)


@dataclass(frozen=True)
class FalParams:
    """Sixteen semantic warp strengths, each in [-1, 1]; 0 means untouched."""

    eye_size_L: float = 0.0
    eye_size_R: float = 0.0
    eye_height: float = 0.0
    eye_width: float = 0.0
    eye_tilt: float = 0.0
    eye_distance: float = 0.0
    nose_width: float = 0.0
    nose_height: float = 0.0
    mouth_smile: float = 0.0
    mouth_width: float = 0.0
    mouth_height: float = 0.0
    upper_lip: float = 0.0
    lower_lip: float = 0.0
    forehead_height: float = 0.0
    chin_height: float = 0.0
    face_width: float = 0.0

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not -1.0 <= v <= 1.0:
                raise ValueError(f"{f.name}={v} outside [-1, 1]")

    def to_dict(self) -> Dict[str, float]:
        return {name: float(getattr(self, name)) for name in PARAM_NAMES}

    @classmethod
    def from_dict(cls, d: dict) -> "FalParams":
        unknown = set(d) - set(PARAM_NAMES)
        if unknown:
            raise ValueError(f"unknown FAL parameters: {sorted(unknown)}")
        return cls(**{k: float(v) for k, v in d.items()})

    def active(self) -> List[str]:
        return [name for name in PARAM_NAMES if getattr(self, name) != 0.0]

    def is_identity(self) -> bool:
        return not self.active()


@dataclass(frozen=True)
class SynthConfig:
    max_displacement: float = 5.0
    active_param_count_range: Tuple[int, int] = (2, 8)
    rbf_sigma_scale: float = 0.6
    seed: int = 0
    invert_iters: int = 20
    invert_tol: float = 1e-3

    def __post_init__(self):
        lo, hi = self.active_param_count_range
        if not self.max_displacement > 0:
            raise ValueError("max_displacement must be > 0")
        if not 0 <= lo <= hi <= len(PARAM_NAMES):
            raise ValueError(f"bad active_param_count_range {self.active_param_count_range}")
        if not self.rbf_sigma_scale > 0:
            raise ValueError("rbf_sigma_scale must be > 0")

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["active_param_count_range"] = list(self.active_param_count_range)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SynthConfig":
        d = dict(d)
        if "active_param_count_range" in d:
            d["active_param_count_range"] = tuple(d["active_param_count_range"])
        return cls(**d)


def derive_seed(global_seed: int, *parts) -> int:
    """Stable 64-bit seed from a global seed and identifying parts.

    Independent of process, hash randomisation and call order, so parallel
    generation reproduces serial generation.
    """
    key = ":".join([str(int(global_seed))] + [str(p) for p in parts])
    return int.from_bytes(hashlib.blake2b(key.encode(), digest_size=8).digest(), "little")


def sample_fal_params(rng_seed: int, cfg: SynthConfig = SynthConfig()) -> FalParams:
    rng = np.random.default_rng(rng_seed)
    lo, hi = cfg.active_param_count_range
    k = int(rng.integers(lo, hi + 1))
    chosen = rng.choice(len(PARAM_NAMES), size=k, replace=False)
    values = rng.uniform(-1.0, 1.0, size=k)
    return FalParams(**{PARAM_NAMES[i]: float(v) for i, v in zip(chosen, values)})


def _extremes(pts: np.ndarray):
    """Leftmost, rightmost, topmost and bottommost points of a group."""
    return (pts[np.argmin(pts[:, 0])], pts[np.argmax(pts[:, 0])],
            pts[np.argmin(pts[:, 1])], pts[np.argmax(pts[:, 1])])


def _unit(v):
    n = np.linalg.norm(v)
    return v / n if n > 0 else np.zeros(2)


def _param_controls(name: str, mesh: LandmarkMesh):
    """Control points and unit-strength displacements for one parameter.

    Displacements are in units of the full-strength amplitude and follow the
    original-to-modified convention (content at the point moves by it).
    Positive values enlarge, raise, widen or open.
    """
    left_c = mesh.centroid("left_eye")
    right_c = mesh.centroid("right_eye")
    mid = 0.5 * (left_c + right_c)
    up = np.array([0.0, -1.0])
    pts: List[np.ndarray] = []
    vecs: List[np.ndarray] = []

    def add(p, v):
        pts.append(np.asarray(p, dtype=np.float64))
        vecs.append(np.asarray(v, dtype=np.float64))

    def outward_x(p, center):
        return np.array([np.sign(p[0] - center[0]) or 1.0, 0.0])

    if name in ("eye_size_L", "eye_size_R"):
        group = "left_eye" if name == "eye_size_L" else "right_eye"
        c = mesh.centroid(group)
        for p in _extremes(mesh.group(group)):
            add(p, _unit(p - c))
    elif name == "eye_height":
        add(left_c, up)
        add(right_c, up)
    elif name == "eye_width":
        for group in ("left_eye", "right_eye"):
            lft, rgt, _, _ = _extremes(mesh.group(group))
            add(lft, [-1.0, 0.0])
            add(rgt, [1.0, 0.0])
    elif name == "eye_tilt":
        for group in ("left_eye", "right_eye"):
            lft, rgt, _, _ = _extremes(mesh.group(group))
            outer, inner = (lft, rgt) if abs(lft[0] - mid[0]) > abs(rgt[0] - mid[0]) else (rgt, lft)
            add(outer, up)
            add(inner, -up)
    elif name == "eye_distance":
        add(left_c, outward_x(left_c, mid))
        add(right_c, outward_x(right_c, mid))
    elif name == "nose_width":
        nose = mesh.group("nose")
        c = nose.mean(axis=0)
        lft, rgt, _, _ = _extremes(nose)
        add(lft, outward_x(lft, c))
        add(rgt, outward_x(rgt, c))
    elif name == "nose_height":
        _, _, _, bottom = _extremes(mesh.group("nose"))
        add(bottom, -up)
    elif name == "mouth_smile":
        lft, rgt, _, _ = _extremes(mesh.group("mouth"))
        c = mesh.centroid("mouth")
        add(lft, up + 0.3 * outward_x(lft, c))
        add(rgt, up + 0.3 * outward_x(rgt, c))
    elif name == "mouth_width":
        lft, rgt, _, _ = _extremes(mesh.group("mouth"))
        c = mesh.centroid("mouth")
        add(lft, outward_x(lft, c))
        add(rgt, outward_x(rgt, c))
    elif name == "mouth_height":
        _, _, top, bottom = _extremes(mesh.group("mouth"))
        add(top, up)
        add(bottom, -up)
    elif name == "upper_lip":
        _, _, top, _ = _extremes(mesh.group("mouth"))
        add(top, up)
    elif name == "lower_lip":
        _, _, _, bottom = _extremes(mesh.group("mouth"))
        add(bottom, -up)
    elif name == "forehead_height":
        add(mesh.centroid("forehead"), up)
    elif name == "chin_height":
        _, _, _, bottom = _extremes(mesh.group("jaw"))
        add(bottom, -up)
    elif name == "face_width":
        jaw = mesh.group("jaw")
        c = jaw.mean(axis=0)
        lft, rgt, _, _ = _extremes(jaw)
        add(lft, outward_x(lft, c))
        add(rgt, outward_x(rgt, c))
    else:
        raise ValueError(f"unknown FAL parameter {name!r}")
    return pts, vecs


def control_displacements(params: FalParams, mesh: LandmarkMesh, cfg: SynthConfig = SynthConfig()):
    """Control points (N, 2) and their displacements (N, 2) in pixels."""
    pts, vecs = [], []
    for name in params.active():
        needed = ("left_eye", "right_eye") + _PARAM_GROUPS[name]
        missing = [g for g in needed if g not in mesh.groups]
        if missing:
            raise ValueError(f"parameter {name} needs landmark groups {missing}")
        amp = getattr(params, name) * cfg.max_displacement
        p, v = _param_controls(name, mesh)
        pts.extend(p)
        vecs.extend(amp * np.asarray(x) for x in v)
    if not pts:
        return np.zeros((0, 2)), np.zeros((0, 2))
    return np.array(pts), np.array(vecs)


def scatter_rbf(points: np.ndarray, vectors: np.ndarray, height: int, width: int,
                sigma: float) -> np.ndarray:
    """Dense field ``sum_i vectors[i] * exp(-|p - points[i]|^2 / (2 sigma^2))``."""
    out = np.zeros((height, width, 2))
    if len(points) == 0:
        return out
    xs = np.arange(width, dtype=np.float64)
    ys = np.arange(height, dtype=np.float64)
    # separable Gaussians: (N, W) and (N, H)
    gx = np.exp(-0.5 * ((xs[None, :] - points[:, 0:1]) / sigma) ** 2)
    gy = np.exp(-0.5 * ((ys[None, :] - points[:, 1:2]) / sigma) ** 2)
    for c in range(2):
        out[..., c] = np.einsum("nh,nw->hw", gy * vectors[:, c:c + 1], gx)
    return out


def params_to_flow(params: FalParams, mesh: LandmarkMesh, cfg: SynthConfig = SynthConfig(),
                   rescale: bool = True) -> np.ndarray:
    """Original-to-modified flow produced by ``params`` on ``mesh``.

    With ``rescale`` the field is scaled down (never up) so that its largest
    vector is at most ``cfg.max_displacement``.
    """
    pts, vecs = control_displacements(params, mesh, cfg)
    if len(pts) == 0:
        return np.zeros((mesh.height, mesh.width, 2))
    sigma = cfg.rbf_sigma_scale * mesh.interocular()
    if not sigma > 0:
        raise ValueError("degenerate mesh: eye centroids coincide")
    flow = scatter_rbf(pts, vecs, mesh.height, mesh.width, sigma)
    if rescale:
        peak = np.hypot(flow[..., 0], flow[..., 1]).max()
        if peak > cfg.max_displacement:
            flow *= cfg.max_displacement / peak
    return flow


def synthesize_example(img: np.ndarray, mesh: LandmarkMesh, rng_seed: int,
                       cfg: SynthConfig = SynthConfig()):
    """Draw a random edit of ``img``.

    Returns ``(warped, gt_flow, params)`` where ``gt_flow`` maps the original
    to the warped image, so ``warp_image(warped, gt_flow)`` approximates
    ``img``. The warped image is rendered with the numeric inverse of
    ``gt_flow``.
    """
    warped, gt_flow, params, _ = _synthesize(img, mesh, rng_seed, cfg)
    return warped, gt_flow, params


def _synthesize(img, mesh, rng_seed, cfg):
    img = np.asarray(img, dtype=np.float64)
    if img.shape[:2] != (mesh.height, mesh.width):
        raise ValueError(f"image {img.shape[:2]} does not match mesh {(mesh.height, mesh.width)}")
    params = sample_fal_params(rng_seed, cfg)
    gt_flow = params_to_flow(params, mesh, cfg)
    if params.is_identity():
        return img.copy(), gt_flow, params, np.zeros_like(gt_flow)
    backward, _ = invert_flow(gt_flow, cfg.invert_iters, cfg.invert_tol)
    warped = np.clip(warp_image(img, backward), 0.0, 1.0)
    return warped, gt_flow, params, backward


def random_smooth_warp(dims: Sequence[int], rng_seed: int, cfg: SynthConfig = SynthConfig(),
                       amplitude: float | None = None) -> np.ndarray:
    """Band-limited random flow, the out-of-domain counterpart of FAL warps.

    White noise per component is blurred with sigma = min(H, W) / 8 and
    scaled so the largest vector has length ``amplitude`` (default and upper
    bound: ``cfg.max_displacement``).
    """
    height, width = int(dims[0]), int(dims[1])
    amp = cfg.max_displacement if amplitude is None else min(float(amplitude), cfg.max_displacement)
    if amp <= 0:
        return np.zeros((height, width, 2))
    rng = np.random.default_rng(rng_seed)
    noise = rng.standard_normal((height, width, 2))
    sigma = min(height, width) / 8.0
    field_ = gaussian_blur(noise, sigma)
    peak = np.hypot(field_[..., 0], field_[..., 1]).max()
    if peak == 0:
        return np.zeros((height, width, 2))
    return field_ * (amp / peak)


def make_noise_image(dims: Sequence[int], rng_seed: int, channels: int = 3) -> np.ndarray:
    """Gaussian noise image (mean 0.5, std 0.15) clamped to [0, 1]."""
    height, width = int(dims[0]), int(dims[1])
    rng = np.random.default_rng(rng_seed)
    shape = (height, width) if channels == 1 else (height, width, channels)
    return np.clip(rng.normal(0.5, 0.15, size=shape), 0.0, 1.0)
