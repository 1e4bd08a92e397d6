"""Robustness augmentations: flip, crop, resize, photometric jitter, JPEG.

Operations run in a fixed order (flip, crop, resize, photometric, JPEG) so
a serialized :class:`AugmentSpec` reproduces its output exactly.
"""

from __future__ import annotations

import io
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np
from PIL import Image

from .flow import gaussian_blur
from .io import to_uint8

__all__ = ["AugmentSpec", "apply_augment", "jpeg_cycle", "blur", "luma"]

_RESAMPLE = {"bilinear": Image.Resampling.BILINEAR, "bicubic": Image.Resampling.BICUBIC}
_LUMA = np.array([0.299, 0.587, 0.114])


@dataclass(frozen=True)
class AugmentSpec:
    """One augmentation recipe.

    ``brightness``, ``contrast`` and ``saturation`` are jitter amplitudes:
    each factor is drawn from ``[1 - a, 1 + a]`` using ``seed``; 0 disables
    the operation. The default spec is the identity.
    """

    jpeg_quality: Optional[int] = None
    resize_factor: Optional[float] = None
    resize_method: str = "bilinear"
    brightness: float = 0.0
    contrast: float = 0.0
    saturation: float = 0.0
    flip: bool = False
    crop_size: Optional[int] = None
    seed: int = 0

    def __post_init__(self):
        if self.jpeg_quality is not None and not 1 <= self.jpeg_quality <= 100:
            raise ValueError(f"jpeg_quality must be in [1, 100], got {self.jpeg_quality}")
        if self.resize_factor is not None and not self.resize_factor > 0:
            raise ValueError("resize_factor must be > 0")
        if self.resize_method not in _RESAMPLE:
            raise ValueError(f"resize_method must be one of {sorted(_RESAMPLE)}")
        for name in ("brightness", "contrast", "saturation"):
            if not 0.0 <= getattr(self, name) < 1.0:
                raise ValueError(f"{name} jitter must lie in [0, 1)")
        if self.crop_size is not None and self.crop_size < 1:
            raise ValueError("crop_size must be positive")

    @classmethod
    def training_default(cls, seed: int, jpeg_quality: Optional[int] = None) -> "AugmentSpec":
        """Flip chosen by seed, +-20% photometric jitter."""
        rng = np.random.default_rng(seed)
        return cls(flip=bool(rng.integers(2)), brightness=0.2, contrast=0.2, saturation=0.2,
                   jpeg_quality=jpeg_quality, seed=seed)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "AugmentSpec":
        return cls(**d)


def luma(img: np.ndarray) -> np.ndarray:
    if img.ndim == 2:
        return img
    return img @ _LUMA


def _resize(img, factor, method):
    h, w = img.shape[:2]
    nh, nw = max(1, int(round(h * factor))), max(1, int(round(w * factor)))
    chans = img[..., None] if img.ndim == 2 else img
    out = np.stack([
        np.asarray(Image.fromarray(np.ascontiguousarray(chans[..., c], dtype=np.float32))
                   .resize((nw, nh), _RESAMPLE[method]), dtype=np.float64)
        for c in range(chans.shape[2])
    ], axis=-1)
    return out[..., 0] if img.ndim == 2 else out


def jpeg_cycle(img: np.ndarray, quality: int) -> np.ndarray:
    """Encode to JPEG at ``quality`` and decode back.

    Encoding uses Pillow's libjpeg with 4:4:4 chroma (no subsampling) and
    8-bit quantisation of the input.
    """
    if not isinstance(quality, (int, np.integer)) or not 1 <= quality <= 100:
        raise ValueError(f"JPEG quality must be an integer in [1, 100], got {quality!r}")
    arr = to_uint8(np.asarray(img))
    buf = io.BytesIO()
    Image.fromarray(arr).save(buf, format="JPEG", quality=int(quality), subsampling=0)
    buf.seek(0)
    with Image.open(buf) as im:
        return np.asarray(im, dtype=np.float64) / 255.0


def blur(img: np.ndarray, sigma: float) -> np.ndarray:
    """Gaussian blur corruption (not part of the training augmentations)."""
    return np.clip(gaussian_blur(img, sigma), 0.0, 1.0)


def apply_augment(img: np.ndarray, spec: AugmentSpec) -> np.ndarray:
    out = np.asarray(img, dtype=np.float64)
    rng = np.random.default_rng(spec.seed)
    # draw everything up front so enabling one op never shifts another's draw
    crop_u = rng.random(2)
    b_f, c_f, s_f = rng.uniform(-1.0, 1.0, size=3)

    if spec.flip:
        out = out[:, ::-1]
    if spec.crop_size is not None:
        h, w = out.shape[:2]
        cs = spec.crop_size
        if cs > min(h, w):
            raise ValueError(f"crop {cs} larger than image {h}x{w}")
        top = int(crop_u[0] * (h - cs + 1))
        left = int(crop_u[1] * (w - cs + 1))
        out = out[top:top + cs, left:left + cs]
    if spec.resize_factor is not None and spec.resize_factor != 1.0:
        out = _resize(out, spec.resize_factor, spec.resize_method)
    if spec.brightness:
        out = out * (1.0 + spec.brightness * b_f)
    if spec.contrast:
        mean = out.mean()
        out = (out - mean) * (1.0 + spec.contrast * c_f) + mean
    if spec.saturation and out.ndim == 3:
        y = luma(out)[..., None]
        out = y + (out - y) * (1.0 + spec.saturation * s_f)
    out = np.clip(out, 0.0, 1.0)
    if spec.jpeg_quality is not None:
        out = jpeg_cycle(out, spec.jpeg_quality)
    return np.ascontiguousarray(out)
