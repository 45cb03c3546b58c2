"""Synthetic light fields with plenoptic-camera-like structure.

A scene is a textured background plus a few textured foreground patches,
each at its own disparity. View ``(u, v)`` sees every layer shifted by
``disparity * (u - uc, v - vc)`` pixels (sub-pixel, bilinear), so
neighbouring views are near-translations of each other. Views far from the
centre are darker (vignetting) and noisier, as in rendered lenslet captures.
With parallax and vignetting switched off the field is one scene plus noise
that grows with the distance from the centre.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .lightfield_io import Picture, ViewGrid, rgb_to_ycbcr_planes, subsample_plane


@dataclass(frozen=True)
class SceneParams:
    rows: int = 9
    cols: int = 9
    width: int = 64
    height: int = 64
    bit_depth: int = 8
    chroma_format: str = "422"
    background_disparity: float = 0.35
    foreground_disparity: float = 1.2
    patches: int = 3
    vignetting: float = 0.35
    noise: float = 1.0  # sigma in 8-bit units at the grid corner
    seed: int = 0


def _texture(rng, shape, scales=(1.5, 4.0, 10.0), weights=(0.3, 0.5, 1.0)):
    out = np.zeros(shape)
    for s, w in zip(scales, weights):
        out += w * ndimage.gaussian_filter(rng.standard_normal(shape), s, mode="wrap")
    out -= out.mean()
    return out / (out.std() + 1e-12)


def _colour_layer(rng, shape, base, contrast):
    t = _texture(rng, shape)
    tint = rng.uniform(-0.15, 0.15, size=3)
    return np.stack([np.clip(base * (1 + tint[k]) + contrast * t, 0, 1) for k in range(3)])


def _shifted(layer, dy, dx, margin, h, w):
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    coords = [yy + margin - dy, xx + margin - dx]
    if layer.ndim == 2:
        return ndimage.map_coordinates(layer, coords, order=1, mode="nearest")
    return np.stack([ndimage.map_coordinates(c, coords, order=1, mode="nearest") for c in layer])


def make_lightfield(params=None, **overrides):
    """Render a YCbCr :class:`ViewGrid` for ``params`` (fields overridable by keyword)."""
    p = params or SceneParams()
    if overrides:
        p = SceneParams(**{**p.__dict__, **overrides})
    rng = np.random.default_rng(p.seed)
    h, w = p.height, p.width
    uc, vc = (p.rows - 1) / 2.0, (p.cols - 1) / 2.0
    reach = max(abs(p.background_disparity), abs(p.foreground_disparity)) * max(uc, vc, 1)
    margin = int(np.ceil(reach)) + 2
    canvas = (h + 2 * margin, w + 2 * margin)
    background = _colour_layer(rng, canvas, rng.uniform(0.35, 0.6), 0.18)
    layers = []
    for _ in range(p.patches):
        ph = int(rng.integers(h // 5, h // 2 + 1))
        pw = int(rng.integers(w // 5, w // 2 + 1))
        top = int(rng.integers(margin, margin + h - ph))
        left = int(rng.integers(margin, margin + w - pw))
        mask = np.zeros(canvas)
        if rng.random() < 0.5:
            mask[top : top + ph, left : left + pw] = 1.0
        else:
            yy, xx = np.mgrid[0 : canvas[0], 0 : canvas[1]]
            cy, cx = top + ph / 2, left + pw / 2
            mask[((yy - cy) / (ph / 2)) ** 2 + ((xx - cx) / (pw / 2)) ** 2 <= 1] = 1.0
        tex = _colour_layer(rng, canvas, rng.uniform(0.2, 0.85), 0.12)
        disp = p.foreground_disparity * rng.uniform(0.6, 1.0)
        layers.append((tex, mask, disp))
    maxval = (1 << p.bit_depth) - 1
    rmax = np.hypot(uc, vc) or 1.0
    views = []
    for u in range(p.rows):
        for v in range(p.cols):
            du, dv = u - uc, v - vc
            img = _shifted(background, du * p.background_disparity, dv * p.background_disparity,
                           margin, h, w)
            for tex, mask, disp in layers:
                m = _shifted(mask, du * disp, dv * disp, margin, h, w)
                img = img * (1 - m) + _shifted(tex, du * disp, dv * disp, margin, h, w) * m
            r = np.hypot(du, dv) / rmax
            gain = 1.0 - p.vignetting * r * r
            noise = rng.standard_normal((3, h, w)) * (p.noise * r / 255.0)
            rgb = np.clip(img * gain + noise, 0, 1)
            q = np.rint(rgb * maxval).astype(np.int32)
            y, cb, cr = rgb_to_ycbcr_planes(q[0], q[1], q[2], p.bit_depth)
            if p.chroma_format != "444":
                cb = subsample_plane(cb, p.chroma_format)
                cr = subsample_plane(cr, p.chroma_format)
            views.append(Picture((y, cb, cr)))
    return ViewGrid(p.rows, p.cols, w, h, p.bit_depth, p.chroma_format, views)


def synthetic_suite(count=3, **overrides):
    """``count`` distinct light fields (different seeds and disparities)."""
    out = []
    for k in range(count):
        params = SceneParams(
            seed=1000 + k,
            background_disparity=0.25 + 0.15 * k,
            foreground_disparity=0.9 + 0.3 * k,
        )
        out.append(make_lightfield(params, **overrides))
    return out
