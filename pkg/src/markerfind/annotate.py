"""Overlay detections on a frame for visual inspection."""

from __future__ import annotations

import math

import numpy as np

from ._font import text_mask
from .image_core import ColorImage, GrayImage
from .matching import MarkerDetection

__all__ = ["annotate", "EDGE_COLOR", "CORNER_COLOR", "LABEL_COLOR", "CORNER_RADIUS"]

EDGE_COLOR = (0, 255, 0)
CORNER_COLOR = (255, 0, 0)
LABEL_COLOR = (255, 255, 0)
CORNER_RADIUS = 6.0


def _plot(rgb: np.ndarray, xs: np.ndarray, ys: np.ndarray, color) -> None:
    h, w = rgb.shape[:2]
    xi = np.floor(xs).astype(np.int64)
    yi = np.floor(ys).astype(np.int64)
    ok = (xi >= 0) & (xi < w) & (yi >= 0) & (yi < h)
    rgb[yi[ok], xi[ok]] = color


def _segment(rgb: np.ndarray, a, b, color) -> None:
    n = max(2, int(math.ceil(4 * math.hypot(b[0] - a[0], b[1] - a[1]))) + 1)
    t = np.linspace(0.0, 1.0, n)
    _plot(rgb, a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1]), color)


def _circle(rgb: np.ndarray, c, r: float, color, thickness: float = 1.5) -> None:
    h, w = rgb.shape[:2]
    x0, x1 = max(int(c[0] - r - 2), 0), min(int(c[0] + r + 3), w)
    y0, y1 = max(int(c[1] - r - 2), 0), min(int(c[1] + r + 3), h)
    if x1 <= x0 or y1 <= y0:
        return
    ys, xs = np.mgrid[y0:y1, x0:x1]
    d = np.hypot(xs + 0.5 - c[0], ys + 0.5 - c[1])
    ring = np.abs(d - r) <= thickness / 2
    rgb[ys[ring], xs[ring]] = color


def _label(rgb: np.ndarray, text: str, centre, color, scale: int = 2) -> None:
    m = text_mask(text, scale=scale)
    h, w = rgb.shape[:2]
    x0 = int(round(centre[0] - m.shape[1] / 2))
    y0 = int(round(centre[1] - m.shape[0] / 2))
    ys, xs = np.nonzero(m)
    _plot(rgb, (xs + x0).astype(np.float64), (ys + y0).astype(np.float64), color)


def annotate(img: GrayImage | ColorImage, detections: list[MarkerDetection]) -> ColorImage:
    """RGB copy of ``img`` with quad edges, id labels and a circle on every corner."""
    if isinstance(img, GrayImage):
        rgb = np.repeat(img.data[:, :, None], 3, axis=2)
    else:
        rgb = np.array(img.data, copy=True)
    for d in detections:
        c = np.asarray(d.corners, dtype=np.float64)
        for k in range(4):
            _segment(rgb, c[k], c[(k + 1) % 4], EDGE_COLOR)
        _label(rgb, d.id, c.mean(axis=0), LABEL_COLOR)
    # corners last so nothing paints over them
    for d in detections:
        for p in np.asarray(d.corners, dtype=np.float64):
            _circle(rgb, p, CORNER_RADIUS, CORNER_COLOR)
    return ColorImage(rgb)

