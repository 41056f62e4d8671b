"""Skin-tone estimation, flat body textures and neck seam blending."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from PIL import Image as PILImage
from sklearn.base import BaseEstimator
from sklearn.cluster import KMeans
from sklearn.utils.validation import check_is_fitted

from .errors import EmptyMaskError, UVRangeError


@dataclass(frozen=True, eq=False)
class Image:
    """Row-major 8-bit RGB image with an optional boolean mask."""

    pixels: np.ndarray  # (height, width, 3) uint8
    mask: np.ndarray | None = None

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim != 3 or px.shape[2] != 3:
            raise ValueError(f"pixels must be (height, width, 3), got {px.shape}")
        object.__setattr__(self, "pixels", px.astype(np.uint8, copy=False))
        if self.mask is not None:
            mask = np.asarray(self.mask, dtype=bool)
            if mask.shape != px.shape[:2]:
                raise ValueError(f"mask shape {mask.shape} does not match image {px.shape[:2]}")
            object.__setattr__(self, "mask", mask)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    def masked_pixels(self) -> np.ndarray:
        flat = self.pixels.reshape(-1, 3)
        if self.mask is None:
            return flat
        return flat[self.mask.ravel()]


def load_image(path, mask=None) -> Image:
    with PILImage.open(path) as im:
        return Image(np.asarray(im.convert("RGB")), mask)


def save_image(image: Image, path) -> None:
    PILImage.fromarray(image.pixels, mode="RGB").save(path, format="PNG", optimize=False)


def uv_to_texel(uv, width, height):
    """Nearest texel (column, row) for UVs in [0,1]^2; v points up."""
    uv = np.asarray(uv, dtype=np.float64).reshape(-1, 2)
    if np.any(uv < 0.0) or np.any(uv > 1.0) or not np.all(np.isfinite(uv)):
        raise UVRangeError("uv coordinates must lie in [0, 1]")
    col = np.floor(uv[:, 0] * (width - 1) + 0.5).astype(np.int64)
    row = np.floor((1.0 - uv[:, 1]) * (height - 1) + 0.5).astype(np.int64)
    return col, row


def mask_from_regions(width, height, regions) -> np.ndarray:
    """Boolean mask covering UV rectangles ``[u0, v0, u1, v1]``."""
    mask = np.zeros((height, width), dtype=bool)
    for u0, v0, u1, v1 in regions:
        c0, r1 = uv_to_texel([[u0, v0]], width, height)
        c1, r0 = uv_to_texel([[u1, v1]], width, height)
        mask[int(r0[0]) : int(r1[0]) + 1, int(c0[0]) : int(c1[0]) + 1] = True
    return mask


class SkinToneEstimator(BaseEstimator):
    """Dominant color of the masked pixels via weighted k-means.

    Pixels are collapsed to unique colors with counts before clustering, so
    the result does not depend on pixel order.  The dominant color is the
    centroid of the cluster with the most pixels, rounded to integers.
    """

    def __init__(self, n_clusters=4, random_state=42):
        self.n_clusters = n_clusters
        self.random_state = random_state

    def fit(self, X: Image, y=None):
        pixels = X.masked_pixels() if isinstance(X, Image) else np.asarray(X).reshape(-1, 3)
        if len(pixels) == 0:
            raise EmptyMaskError("skin mask selects no pixels")
        colors, counts = np.unique(pixels.astype(np.int64), axis=0, return_counts=True)
        k = min(int(self.n_clusters), len(colors))
        km = KMeans(n_clusters=k, init="k-means++", n_init=1, random_state=self.random_state)
        labels = km.fit_predict(colors.astype(np.float64), sample_weight=counts.astype(np.float64))
        sizes = np.bincount(labels, weights=counts, minlength=k)
        # Exact weighted means per cluster, independent of solver tolerances.
        centers = np.array(
            [np.average(colors[labels == c], axis=0, weights=counts[labels == c]) for c in range(k)]
        )
        self.cluster_centers_ = centers
        self.cluster_sizes_ = sizes
        best = int(np.argmax(sizes))
        self.color_ = tuple(int(v) for v in np.clip(np.floor(centers[best] + 0.5), 0, 255))
        return self

    def predict(self, X=None):
        check_is_fitted(self, "color_")
        return self.color_


def dominant_skin_color(head_tex: Image, n_clusters=4, seed=42) -> tuple[int, int, int]:
    return SkinToneEstimator(n_clusters=n_clusters, random_state=seed).fit(head_tex).color_


def synthesize_body_texture(color, size) -> Image:
    if int(size) <= 0:
        raise ValueError("texture size must be positive")
    pixels = np.empty((int(size), int(size), 3), dtype=np.uint8)
    pixels[:] = np.asarray(color, dtype=np.uint8)
    return Image(pixels)


def blend_seam(body_tex: Image, head_tex: Image, uv_band) -> tuple[Image, Image]:
    """Fade head texels in the band toward the body texture.

    ``uv_band`` is a sequence of ``((u, v), t)``; t = 0 keeps the head
    texel, t = 1 copies the body texel.  The body texture is returned as is.
    """
    band = list(uv_band)
    if not band:
        return body_tex, head_tex
    uv = np.array([p[0] for p in band], dtype=np.float64)
    t = np.clip(np.array([p[1] for p in band], dtype=np.float64), 0.0, 1.0)
    hc, hr = uv_to_texel(uv, head_tex.width, head_tex.height)
    bc, br = uv_to_texel(uv, body_tex.width, body_tex.height)
    head = head_tex.pixels.astype(np.float64)
    src = head[hr, hc]
    dst = body_tex.pixels[br, bc].astype(np.float64)
    mixed = np.floor(src + t[:, None] * (dst - src) + 0.5)
    out = head_tex.pixels.copy()
    out[hr, hc] = np.clip(mixed, 0, 255).astype(np.uint8)
    return body_tex, Image(out, head_tex.mask)


def band_texels(uvs, faces, ramp, width, height):
    """Rasterize triangles in UV space into ``((u, v), t)`` texel samples.

    ``ramp`` gives t per vertex and is interpolated barycentrically.  Texels
    covered by several triangles keep the smallest t (closest to the head).
    """
    uvs = np.asarray(uvs, dtype=np.float64)
    ramp = np.asarray(ramp, dtype=np.float64)
    best: dict[tuple[int, int], float] = {}
    for tri in np.asarray(faces, dtype=np.int64).reshape(-1, 3):
        p = uvs[tri] * [width - 1, height - 1]
        p[:, 1] = (height - 1) - p[:, 1]
        lo = np.floor(p.min(axis=0)).astype(int)
        hi = np.ceil(p.max(axis=0)).astype(int)
        xs, ys = np.meshgrid(np.arange(lo[0], hi[0] + 1), np.arange(lo[1], hi[1] + 1))
        q = np.column_stack([xs.ravel(), ys.ravel()]).astype(np.float64)
        T = np.array([p[1] - p[0], p[2] - p[0]]).T
        det = np.linalg.det(T)
        if abs(det) < 1e-12:
            continue
        lam = np.linalg.solve(T, (q - p[0]).T).T
        bary = np.column_stack([1.0 - lam.sum(axis=1), lam])
        inside = np.all(bary >= -1e-9, axis=1)
        tv = bary[inside] @ ramp[tri]
        for (x, y), value in zip(q[inside].astype(int), tv):
            if 0 <= x < width and 0 <= y < height:
                key = (int(x), int(y))
                best[key] = min(best.get(key, np.inf), float(value))
    out = []
    for (x, y), value in sorted(best.items()):
        u = x / (width - 1)
        v = 1.0 - y / (height - 1)
        out.append(((u, v), value))
    return out
