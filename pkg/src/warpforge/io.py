"""Readers and writers for flows, masks, images, manifests and scores."""

from __future__ import annotations

import csv
import json
import struct
from pathlib import Path
from typing import Dict, Iterable, List

import numpy as np
from PIL import Image

from .synth import LandmarkMesh

__all__ = [
    "FormatError",
    "FLO_MAGIC",
    "MSK_MAGIC",
    "read_flo",
    "write_flo",
    "read_msk",
    "write_msk",
    "read_image",
    "write_image",
    "read_manifest",
    "write_manifest",
    "read_scores",
    "read_landmarks",
]

FLO_MAGIC = 202021.25
MSK_MAGIC = b"MSK1"


class FormatError(ValueError):
    """A file does not follow the expected binary or text layout."""


def write_flo(path, flow: np.ndarray) -> None:
    """Middlebury .flo: float32 magic, int32 width, int32 height, (dx, dy) float32."""
    flow = np.asarray(flow)
    if flow.ndim != 3 or flow.shape[2] != 2:
        raise ValueError(f"flow must be (H, W, 2), got {flow.shape}")
    h, w = flow.shape[:2]
    with open(path, "wb") as fh:
        fh.write(struct.pack("<fii", FLO_MAGIC, w, h))
        fh.write(np.ascontiguousarray(flow, dtype="<f4").tobytes())


def read_flo(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) < 12:
        raise FormatError(f"{path}: truncated .flo header")
    magic, w, h = struct.unpack("<fii", data[:12])
    if magic != FLO_MAGIC:
        raise FormatError(f"{path}: bad .flo magic {magic!r}")
    if w <= 0 or h <= 0:
        raise FormatError(f"{path}: bad .flo dimensions {w}x{h}")
    expected = 12 + 4 * 2 * w * h
    if len(data) != expected:
        raise FormatError(f"{path}: expected {expected} bytes for {w}x{h}, got {len(data)}")
    return np.frombuffer(data, dtype="<f4", offset=12).reshape(h, w, 2).astype(np.float32)


def write_msk(path, mask: np.ndarray) -> None:
    """MSK1 mask: ASCII magic, int32 width, int32 height, float32 values."""
    mask = np.asarray(mask)
    if mask.ndim != 2:
        raise ValueError(f"mask must be (H, W), got {mask.shape}")
    h, w = mask.shape
    with open(path, "wb") as fh:
        fh.write(MSK_MAGIC + struct.pack("<ii", w, h))
        fh.write(np.ascontiguousarray(mask, dtype="<f4").tobytes())


def read_msk(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) < 12:
        raise FormatError(f"{path}: truncated mask header")
    if data[:4] != MSK_MAGIC:
        raise FormatError(f"{path}: bad mask magic {data[:4]!r}")
    w, h = struct.unpack("<ii", data[4:12])
    if w <= 0 or h <= 0:
        raise FormatError(f"{path}: bad mask dimensions {w}x{h}")
    expected = 12 + 4 * w * h
    if len(data) != expected:
        raise FormatError(f"{path}: expected {expected} bytes for {w}x{h}, got {len(data)}")
    return np.frombuffer(data, dtype="<f4", offset=12).reshape(h, w).astype(np.float32)


def to_uint8(img: np.ndarray) -> np.ndarray:
    return np.round(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)


def read_image(path) -> np.ndarray:
    """Load an image as float64 in [0, 1]; (H, W) for grayscale, else (H, W, 3)."""
    with Image.open(path) as im:
        if im.mode not in ("L", "RGB"):
            im = im.convert("RGB")
        return np.asarray(im, dtype=np.float64) / 255.0


def write_image(path, img: np.ndarray, quality: int | None = None) -> None:
    """Write PNG (lossless) or JPEG, picked by extension."""
    path = Path(path)
    arr = to_uint8(np.asarray(img))
    if arr.ndim == 3 and arr.shape[2] == 1:
        arr = arr[..., 0]
    im = Image.fromarray(arr)
    if path.suffix.lower() in (".jpg", ".jpeg"):
        im.save(path, format="JPEG", quality=quality or 95, subsampling=0)
    else:
        im.save(path, format="PNG")


def write_manifest(path, entries: Iterable[dict]) -> None:
    with open(path, "w") as fh:
        for entry in entries:
            fh.write(json.dumps(entry, sort_keys=True) + "\n")


def read_manifest(path) -> List[dict]:
    entries = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                entries.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from None
    return entries


def read_scores(path) -> Dict[str, tuple]:
    """CSV with header ``id,score,label``; returns id -> (score, label)."""
    out = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"id", "score"} <= set(reader.fieldnames):
            raise FormatError(f"{path}: expected columns id,score[,label]")
        for row in reader:
            label = (row.get("label") or "").strip() or None
            if label not in (None, "real", "fake"):
                raise FormatError(f"{path}: bad label {label!r} for id {row['id']}")
            out[row["id"]] = (float(row["score"]), label)
    return out


def read_landmarks(path) -> Dict[str, LandmarkMesh]:
    """Landmark meshes keyed by image stem.

    Accepts a JSON list of mesh records, a single record, or JSON lines.
    Records lacking height/width take them from the referenced image.
    """
    path = Path(path)
    text = path.read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError:
        data = [json.loads(line) for line in text.splitlines() if line.strip()]
    if isinstance(data, dict):
        data = [data]
    meshes = {}
    for rec in data:
        image = rec.get("image")
        if not image:
            raise FormatError(f"{path}: landmark record without 'image'")
        if "height" not in rec or "width" not in rec:
            img_path = Path(image) if Path(image).is_absolute() else path.parent / image
            with Image.open(img_path) as im:
                w, h = im.size
            rec = dict(rec, height=h, width=w)
        meshes[Path(image).stem] = LandmarkMesh.from_dict(rec)
    return meshes
