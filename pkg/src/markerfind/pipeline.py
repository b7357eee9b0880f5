"""Frame in, marker detections out.

Stages: grayscale, threshold, border tracing, quad candidates, edge
refinement on gray levels, rectification, identification, homography and
optional pose.
"""

from __future__ import annotations

import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from ._jit import thread_count
from .contour import QuadCandidate, find_quad_candidates, trace_contours
from .errors import DegenerateError, MarkerFindError, ParameterError
from .geometry import (
    UNIT_SQUARE,
    CameraIntrinsics,
    bilinear,
    estimate_homography,
    pose_from_homography,
)
from .image_core import (
    BinaryImage,
    ColorImage,
    GrayImage,
    GrayMethod,
    as_gray,
    threshold_adaptive_mean,
    threshold_global,
)
from .matching import MarkerDetection, PatternRegistry, identify_marker, rectify_candidate

__all__ = [
    "ThresholdMode",
    "DetectConfig",
    "detect",
    "binarize",
    "refine_quad_edges",
    "detections_json",
    "PATTERN_BORDER",
]

# the pattern fills the central half of the black square
PATTERN_BORDER = 0.25


@dataclass(frozen=True)
class ThresholdMode:
    """``global`` with level P, or ``adaptive`` with odd window and offset C."""

    kind: str = "adaptive"
    level: int = 128
    window: int = 31
    C: float = 7.0

    def __post_init__(self) -> None:
        if self.kind not in ("global", "adaptive"):
            raise ParameterError(f"unknown threshold mode {self.kind!r}")
        if self.kind == "global" and not 0 <= self.level <= 255:
            raise ParameterError("global threshold must lie in [0, 255]")
        if self.kind == "adaptive" and (self.window < 3 or self.window % 2 == 0):
            raise ParameterError("adaptive window must be odd and >= 3")

    @classmethod
    def parse(cls, text: str) -> "ThresholdMode":
        """``global:P`` or ``adaptive:W,C``."""
        kind, _, arg = text.partition(":")
        try:
            if kind == "global":
                return cls("global", level=int(arg))
            if kind == "adaptive":
                w, c = arg.split(",")
                return cls("adaptive", window=int(w), C=float(c))
        except ValueError as exc:
            raise ParameterError(f"bad threshold spec {text!r}") from exc
        raise ParameterError(f"bad threshold spec {text!r}")

    def __str__(self) -> str:
        if self.kind == "global":
            return f"global:{self.level}"
        return f"adaptive:{self.window},{self.C:g}"


@dataclass(frozen=True)
class DetectConfig:
    gray_method: GrayMethod = GrayMethod.LUMINANCE
    threshold: ThresholdMode = field(default_factory=ThresholdMode)
    epsilon_frac: float = 0.05
    min_area: float = 100.0
    pattern_size: int = 32
    acceptance_threshold: float = 0.75
    intrinsics: CameraIntrinsics | None = None
    refine_edges: bool = True

    def __post_init__(self) -> None:
        object.__setattr__(self, "gray_method", GrayMethod(self.gray_method))
        if not 0 < self.epsilon_frac < 0.5:
            raise ParameterError("epsilon_frac must lie in (0, 0.5)")
        if self.min_area <= 0:
            raise ParameterError("min_area must be positive")
        if self.pattern_size < 2:
            raise ParameterError("pattern_size must be >= 2")
        if not 0 < self.acceptance_threshold <= 1:
            raise ParameterError("acceptance_threshold must lie in (0, 1]")


def binarize(gray: GrayImage, mode: ThresholdMode) -> BinaryImage:
    if mode.kind == "global":
        return threshold_global(gray, mode.level)
    window = min(mode.window, 2 * min(gray.width, gray.height) + 1)
    return threshold_adaptive_mean(gray, window, mode.C)


# ------------------------------------------------------------ edge refinement


def _edge_points(data: np.ndarray, a: np.ndarray, b: np.ndarray, outward: np.ndarray) -> np.ndarray:
    """Mid-level crossings of gray-level profiles taken across the side a-b."""
    length = math.hypot(*(b - a))
    n = max(6, int(length / 2))
    reach = min(max(0.1 * length, 2.5), 6.0)
    t = np.linspace(0.15, 0.85, n)
    base = a[None, :] + t[:, None] * (b - a)[None, :]
    s = np.arange(-reach, reach + 1e-9, 0.25)
    px = base[:, 0:1] + s[None, :] * outward[0]
    py = base[:, 1:2] + s[None, :] * outward[1]
    prof = bilinear(data, px, py, outside=np.nan)
    k = len(s) // 4
    dark = prof[:, :k].mean(axis=1)
    light = prof[:, -k:].mean(axis=1)
    mid = 0.5 * (dark + light)
    above = prof > mid[:, None]
    flip = above[:, 1:] != above[:, :-1]
    # among all crossings of a profile take the one nearest the current edge estimate
    dist = np.where(flip, np.abs(s[:-1] + 0.125)[None, :], np.inf)
    j = np.argmin(dist, axis=1)
    rows = np.arange(len(prof))
    ok = np.isfinite(dist[rows, j]) & (light - dark >= 15) & ~np.isnan(prof).any(axis=1)
    rows, j = rows[ok], j[ok]
    v0, v1 = prof[rows, j], prof[rows, j + 1]
    f = (mid[rows] - v0) / (v1 - v0)
    x = px[rows, j] + f * (px[rows, j + 1] - px[rows, j])
    y = py[rows, j] + f * (py[rows, j + 1] - py[rows, j])
    return np.column_stack([x, y])


def _fit_line(pts: np.ndarray) -> tuple[np.ndarray, np.ndarray] | None:
    """Total least squares line (point, unit normal) with one round of outlier trimming."""
    if len(pts) < 4:
        return None
    for _ in range(2):
        c = pts.mean(axis=0)
        _, _, vt = np.linalg.svd(pts - c)
        n = vt[1]
        r = np.abs((pts - c) @ n)
        keep = r <= max(3.0 * float(np.median(r)), 0.5)
        if keep.all() or keep.sum() < 4:
            break
        pts = pts[keep]
    return c, n


def refine_quad_edges(gray: GrayImage, corners: np.ndarray, max_shift: float = 2.0) -> np.ndarray:
    """Re-fit the four sides of a dark quad to gray-level edge crossings.

    Corners that would move farther than ``max_shift`` keep their input value.
    """
    c = np.asarray(corners, dtype=np.float64)
    centre = c.mean(axis=0)
    lines = []
    for k in range(4):
        a, b = c[k], c[(k + 1) % 4]
        d = b - a
        n = np.array([-d[1], d[0]]) / math.hypot(*d)
        if n @ (0.5 * (a + b) - centre) < 0:
            n = -n
        lines.append(_fit_line(_edge_points(gray.data, a, b, n)))
    out = c.copy()
    for k in range(4):
        l1, l2 = lines[(k - 1) % 4], lines[k]
        if l1 is None or l2 is None:
            continue
        A = np.array([l1[1], l2[1]])
        det = float(np.linalg.det(A))
        if abs(det) < 1e-6:
            continue
        p = np.linalg.solve(A, [l1[1] @ l1[0], l2[1] @ l2[0]])
        if math.hypot(*(p - c[k])) <= max_shift:
            out[k] = p
    return out


# --------------------------------------------------------------- detection


@dataclass
class _Timer:
    sink: dict | None

    def stage(self, name: str) -> "_Stage":
        return _Stage(self.sink, name)


class _Stage:
    def __init__(self, sink: dict | None, name: str) -> None:
        self.sink, self.name = sink, name

    def __enter__(self) -> None:
        self.t0 = time.perf_counter()

    def __exit__(self, *exc) -> None:
        if self.sink is not None:
            self.sink[self.name] = self.sink.get(self.name, 0.0) + time.perf_counter() - self.t0


def _candidate_detection(
    gray: GrayImage, cand: QuadCandidate, cfg: DetectConfig, reg: PatternRegistry, timings: dict | None
) -> MarkerDetection | None:
    clock = _Timer(timings)
    with clock.stage("rectify"):
        corners = refine_quad_edges(gray, cand.outer) if cfg.refine_edges else cand.outer
        try:
            patch = rectify_candidate(gray, corners, cfg.pattern_size, border=PATTERN_BORDER)
        except (ParameterError, DegenerateError):
            return None
    with clock.stage("match"):
        ident = identify_marker(patch, reg)
    if ident is None:
        return None
    with clock.stage("homography"):
        # marker corner j sits at canonical corner (j + k) mod 4
        k = ident.rotation // 90
        marker_order = np.roll(corners, -k, axis=0)
        try:
            H = estimate_homography(UNIT_SQUARE, marker_order)
            pose = pose_from_homography(H, cfg.intrinsics) if cfg.intrinsics is not None else None
        except MarkerFindError:
            return None
    return MarkerDetection(ident.id, corners, ident.rotation, ident.score, H, pose)


def _sort_key(d: MarkerDetection):
    return (-d.score, d.id, tuple(d.corners.ravel()))


def detect(
    img: GrayImage | ColorImage,
    cfg: DetectConfig | None = None,
    reg: PatternRegistry | None = None,
    timings: dict | None = None,
) -> list[MarkerDetection]:
    """Registered markers in ``img``, best score first.

    ``timings``, when given, receives wall-clock seconds per stage.
    """
    if reg is None:
        raise ParameterError("a pattern registry is required")
    cfg = cfg or DetectConfig()
    if len(reg) and reg.size != cfg.pattern_size:
        raise ParameterError(f"registry patterns are {reg.size}px, config expects {cfg.pattern_size}")
    if reg.acceptance_threshold != cfg.acceptance_threshold:
        reg = PatternRegistry(reg.entries, cfg.acceptance_threshold)
    clock = _Timer(timings)
    with clock.stage("grayscale"):
        gray = as_gray(img, cfg.gray_method)
    with clock.stage("threshold"):
        binary = binarize(gray, cfg.threshold)
    with clock.stage("contours"):
        cset = trace_contours(binary, invert=True)
        cands = find_quad_candidates(cset, cfg.min_area, cfg.epsilon_frac)
    workers = min(thread_count(), len(cands))
    if workers > 1:
        # per-candidate timings would race; they are only collected serially
        with ThreadPoolExecutor(workers) as pool:
            found = list(pool.map(lambda c: _candidate_detection(gray, c, cfg, reg, None), cands))
    else:
        found = [_candidate_detection(gray, c, cfg, reg, timings) for c in cands]
    return sorted((d for d in found if d is not None), key=_sort_key)


def detections_json(frame: str | None, detections: list[MarkerDetection]) -> str:
    """Canonical JSON text for one frame (fixed key order, trailing newline)."""
    doc = {"frame": frame, "detections": [d.to_dict() for d in detections]}
    return json.dumps(doc, indent=2) + "\n"


def iter_candidates(img: GrayImage | ColorImage, cfg: DetectConfig | None = None) -> Iterator[QuadCandidate]:
    """Quad candidates before identification, for inspection and tests."""
    cfg = cfg or DetectConfig()
    gray = as_gray(img, cfg.gray_method)
    cset = trace_contours(binarize(gray, cfg.threshold), invert=True)
    yield from find_quad_candidates(cset, cfg.min_area, cfg.epsilon_frac)
