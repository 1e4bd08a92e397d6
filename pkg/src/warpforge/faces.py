"""Procedural portrait-like images with landmark meshes.

Face detection and landmarking are outside this package, so a small
renderer provides textured face-shaped images whose landmarks are known by
construction. Used for the demo corpus and the test suite.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from scipy import ndimage

from .synth import LandmarkMesh

__all__ = ["render_face", "write_demo_corpus"]


def _texture(rng, shape, sigma, amp):
    t = ndimage.gaussian_filter(rng.standard_normal(shape), sigma, mode="wrap")
    t /= t.std() + 1e-12
    return amp * t


def _soft(d, width=1.0):
    # d < 0 inside; anti-aliased inside indicator
    return np.clip(0.5 - d / width, 0.0, 1.0)


def _ellipse_sdf(xs, ys, cx, cy, rx, ry):
    r = np.sqrt(((xs - cx) / rx) ** 2 + ((ys - cy) / ry) ** 2)
    return (r - 1.0) * min(rx, ry)


def _paint(img, alpha, color):
    a = alpha[..., None]
    img *= 1.0 - a
    img += a * np.asarray(color)


def _ellipse_points(cx, cy, rx, ry, n, t0=0.0, t1=2 * np.pi, endpoint=False):
    t = np.linspace(t0, t1, n, endpoint=endpoint)
    return np.stack([cx + rx * np.cos(t), cy + ry * np.sin(t)], axis=1)


def render_face(seed: int, size: int = 256):
    """Render one synthetic portrait.

    Returns
    -------
    img : ndarray (size, size, 3) in [0, 1]
    mesh : LandmarkMesh
        Groups: left_eye, right_eye, nose, mouth, jaw, forehead.
    """
    rng = np.random.default_rng(seed)
    s = float(size)
    ys, xs = np.mgrid[0:size, 0:size].astype(np.float64)

    cx = s * (0.5 + rng.uniform(-0.04, 0.04))
    cy = s * (0.52 + rng.uniform(-0.03, 0.03))
    a = s * rng.uniform(0.27, 0.32)  # face half-width
    b = a * rng.uniform(1.25, 1.4)   # face half-height

    # background: coarse colour blobs plus fine grain
    base = rng.uniform(0.2, 0.8, size=3)
    shared = _texture(rng, (size, size), 10.0, 0.12) + _texture(rng, (size, size), 1.0, 0.05)
    img = np.empty((size, size, 3))
    for c in range(3):
        img[..., c] = base[c] + shared + _texture(rng, (size, size), 6.0, 0.04)

    # hair behind the upper head
    hair_color = rng.uniform(0.05, 0.45) * np.array([1.0, 0.8, 0.6])
    hair = _soft(_ellipse_sdf(xs, ys, cx, cy - 0.18 * b, 1.12 * a, 1.02 * b), 2.0)
    hair *= ys < cy + 0.2 * b
    _paint(img, hair, hair_color)
    img += hair[..., None] * _texture(rng, (size, size), 0.8, 0.06)[..., None]

    # skin with shading and pores
    skin = np.array([0.85, 0.65, 0.52]) * rng.uniform(0.55, 1.1)
    face = _soft(_ellipse_sdf(xs, ys, cx, cy, a, b), 1.5)
    _paint(img, face, np.clip(skin, 0, 1))
    shade = 0.08 * (xs - cx) / a - 0.05 * (ys - cy) / b
    grain = _texture(rng, (size, size), 0.9, 0.035) + _texture(rng, (size, size), 3.0, 0.03)
    img += face[..., None] * (shade + grain)[..., None]

    # eyes
    ex = 0.38 * a * rng.uniform(0.92, 1.08)
    ey = cy - 0.18 * b
    erx, ery = 0.17 * a, 0.075 * b
    eye_pts = {}
    for name, sign in (("left_eye", -1.0), ("right_eye", 1.0)):
        ecx = cx + sign * ex
        sclera = _soft(_ellipse_sdf(xs, ys, ecx, ey, erx, ery), 1.0)
        _paint(img, sclera, [0.92, 0.9, 0.88])
        iris_col = rng.uniform(0.1, 0.5, size=3)
        iris = _soft(_ellipse_sdf(xs, ys, ecx, ey, 0.55 * ery * 1.2, 0.55 * ery * 1.2), 1.0) * sclera
        _paint(img, iris, iris_col)
        pupil = _soft(_ellipse_sdf(xs, ys, ecx, ey, 0.3 * ery, 0.3 * ery), 1.0) * sclera
        _paint(img, pupil, [0.03, 0.03, 0.03])
        brow = _soft(_ellipse_sdf(xs, ys, ecx, ey - 2.2 * ery, 1.1 * erx, 0.3 * ery), 1.5)
        _paint(img, brow, hair_color)
        eye_pts[name] = _ellipse_points(ecx, ey, erx, ery, 6)

    # nose: bridge shadow and nostrils
    ny_top, ny_tip = ey + 0.02 * b, cy + 0.2 * b
    nw = 0.16 * a
    bridge = _soft(np.abs(xs - cx - 0.25 * nw) - 0.12 * nw, 1.5) * (ys > ny_top) * (ys < ny_tip)
    _paint(img, 0.35 * bridge, skin * 0.6)
    for sign in (-1.0, 1.0):
        nostril = _soft(_ellipse_sdf(xs, ys, cx + sign * 0.5 * nw, ny_tip, 0.28 * nw, 0.15 * nw), 1.0)
        _paint(img, 0.8 * nostril, skin * 0.3)
    nose_pts = np.concatenate([
        np.stack([np.full(4, cx), np.linspace(ny_top, ny_tip - 0.1 * nw, 4)], axis=1),
        np.stack([cx + np.linspace(-nw, nw, 5), np.full(5, ny_tip + 0.05 * nw)], axis=1),
    ])

    # mouth
    my = cy + 0.48 * b
    mrx, mry = 0.34 * a * rng.uniform(0.9, 1.1), 0.09 * b
    lips = _soft(_ellipse_sdf(xs, ys, cx, my, mrx, mry), 1.0)
    _paint(img, lips, np.array([0.7, 0.25, 0.28]) * rng.uniform(0.7, 1.0))
    gap = _soft(np.abs(ys - my) - 0.6, 1.0) * _soft(_ellipse_sdf(xs, ys, cx, my, mrx * 0.95, mry), 1.0)
    _paint(img, gap, [0.15, 0.04, 0.05])
    mouth_pts = _ellipse_points(cx, my, mrx, mry, 12)

    jaw_pts = _ellipse_points(cx, cy, a * 0.98, b * 0.98, 17, 0.05 * np.pi, 0.95 * np.pi, endpoint=True)
    forehead_pts = _ellipse_points(cx, cy, 0.7 * a, 0.75 * b, 5, 1.25 * np.pi, 1.75 * np.pi, endpoint=True)

    img = np.clip(img, 0.0, 1.0)
    groups = {}
    points = []
    for name, pts in (("jaw", jaw_pts), ("forehead", forehead_pts), ("left_eye", eye_pts["left_eye"]),
                      ("right_eye", eye_pts["right_eye"]), ("nose", nose_pts), ("mouth", mouth_pts)):
        groups[name] = list(range(len(points), len(points) + len(pts)))
        points.extend(pts.tolist())
    points = np.clip(np.array(points), 0.0, s - 1.0)
    return img, LandmarkMesh(points=points, groups=groups, height=size, width=size)


def write_demo_corpus(out_dir, count: int, size: int = 256, seed: int = 0):
    """Write ``count`` rendered faces as PNGs plus ``landmarks.json``.

    Returns the landmarks file path.
    """
    from .io import write_image

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    records = []
    for i in range(count):
        img, mesh = render_face(seed * 100003 + i, size)
        name = f"face_{i:04d}.png"
        write_image(out / name, img)
        mesh.image = name
        records.append(mesh.to_dict())
    path = out / "landmarks.json"
    path.write_text(json.dumps(records, indent=1))
    return path
