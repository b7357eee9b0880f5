"""Rectification, normalised cross-correlation and marker identification.

For 8-bit inputs every correlation sum is accumulated in exact integer
arithmetic and the score is formed with a single final rounding, so a score
does not depend on pixel order: ncc(a, b) == ncc(b, a) bit for bit, and so do
scores of jointly rotated patches.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .contour import QuadCandidate
from .errors import ParameterError, UndefinedCorrelationError
from .geometry import Homography, Pose, estimate_homography, warp_inverse
from .image_core import GrayImage, integral_image, read_pnm

__all__ = [
    "PatternRegistry",
    "ResultMatrix",
    "MarkerDetection",
    "Identification",
    "rectify_candidate",
    "ncc_score",
    "match_template",
    "min_max_loc",
    "identify_marker",
    "rotate_pattern",
    "ROTATIONS",
]

ROTATIONS = (0, 90, 180, 270)


def _pixels(img) -> np.ndarray:
    return img.data if isinstance(img, GrayImage) else np.asarray(img)


def rotate_pattern(img, degrees: int) -> np.ndarray:
    """Counter-clockwise (on screen) rotation by a multiple of 90 degrees."""
    if degrees % 90:
        raise ParameterError(f"rotation must be a multiple of 90, got {degrees}")
    return np.rot90(_pixels(img), (degrees // 90) % 4)


# ------------------------------------------------------------------ registry


@dataclass(frozen=True)
class PatternRegistry:
    entries: tuple[tuple[str, GrayImage], ...]
    acceptance_threshold: float = 0.75

    def __post_init__(self) -> None:
        entries = tuple((str(i), p) for i, p in self.entries)
        object.__setattr__(self, "entries", entries)
        if not 0 < self.acceptance_threshold <= 1:
            raise ParameterError("acceptance_threshold must lie in (0, 1]")
        ids = [i for i, _ in entries]
        if len(set(ids)) != len(ids):
            raise ParameterError("pattern ids must be unique")
        sizes = {(p.width, p.height) for _, p in entries}
        if any(w != h for w, h in sizes):
            raise ParameterError("patterns must be square")
        if len(sizes) > 1:
            raise ParameterError(f"patterns differ in size: {sorted(sizes)}")
        for i, p in entries:
            if p.data.min() == p.data.max():
                raise ParameterError(f"pattern {i!r} is constant")

    @property
    def size(self) -> int:
        return self.entries[0][1].width if self.entries else 0

    @property
    def ids(self) -> list[str]:
        return [i for i, _ in self.entries]

    def __len__(self) -> int:
        return len(self.entries)

    def __getitem__(self, key: str) -> GrayImage:
        for i, p in self.entries:
            if i == key:
                return p
        raise KeyError(key)

    def __contains__(self, key: object) -> bool:
        return any(i == key for i, _ in self.entries)

    def subset(self, n: int) -> "PatternRegistry":
        return PatternRegistry(self.entries[:n], self.acceptance_threshold)

    @classmethod
    def from_manifest(cls, path: str | Path, acceptance_threshold: float = 0.75) -> "PatternRegistry":
        """Load ``[{"id": ..., "file": "x.pgm"}, ...]``; files resolve next to the manifest."""
        path = Path(path)
        records = json.loads(path.read_text(encoding="utf-8"))
        if not isinstance(records, list):
            raise ParameterError("registry manifest must be a JSON array")
        entries = []
        for rec in records:
            if not isinstance(rec, dict) or "id" not in rec or "file" not in rec:
                raise ParameterError(f"bad manifest record {rec!r}")
            img = read_pnm(path.parent / rec["file"])
            if not isinstance(img, GrayImage):
                raise ParameterError(f"pattern {rec['id']!r} must be a P5 image")
            entries.append((str(rec["id"]), img))
        return cls(tuple(entries), acceptance_threshold)

    def write_manifest(self, path: str | Path) -> None:
        from .image_core import write_pnm

        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        records = []
        for i, p in self.entries:
            name = f"pattern_{i}.pgm"
            write_pnm(path.parent / name, p)
            records.append({"id": i, "file": name})
        path.write_text(json.dumps(records, indent=2) + "\n", encoding="utf-8")


# --------------------------------------------------------------- correlation


def ncc_score(a, b) -> float:
    """Zero-mean normalised cross-correlation of two equally sized images."""
    x = _pixels(a)
    y = _pixels(b)
    if x.shape != y.shape:
        raise ParameterError(f"shape mismatch {x.shape} vs {y.shape}")
    if x.dtype.kind in "biu" and y.dtype.kind in "biu":
        xi = x.astype(np.int64).ravel()
        yi = y.astype(np.int64).ravel()
        n = xi.size
        sx, sy = int(xi.sum()), int(yi.sum())
        num = n * int(xi @ yi) - sx * sy
        dx = n * int(xi @ xi) - sx * sx
        dy = n * int(yi @ yi) - sy * sy
        if dx == 0 or dy == 0:
            raise UndefinedCorrelationError("correlation of a constant image")
        score = num / math.sqrt(dx * dy)
    else:
        xf = x.astype(np.float64).ravel()
        yf = y.astype(np.float64).ravel()
        xc = xf - xf.mean()
        yc = yf - yf.mean()
        sxx = float(xc @ xc)
        syy = float(yc @ yc)
        if sxx == 0.0 or syy == 0.0:
            raise UndefinedCorrelationError("correlation of a constant image")
        score = float(xc @ yc) / math.sqrt(sxx * syy)
    return min(1.0, max(-1.0, score))


@dataclass(frozen=True, eq=False)
class ResultMatrix:
    """Scores indexed ``scores[y, x]`` for template offset (x, y)."""

    scores: np.ndarray

    @property
    def shape(self) -> tuple[int, int]:
        return self.scores.shape

    def at(self, x: int, y: int) -> float:
        return float(self.scores[y, x])


def match_template(img, tmpl) -> ResultMatrix:
    """NCC of ``tmpl`` against every placement inside ``img``; flat patches score 0."""
    I = _pixels(img)
    T = _pixels(tmpl)
    H, W = I.shape
    h, w = T.shape
    if h > H or w > W:
        raise ParameterError(f"template {w}x{h} larger than image {W}x{H}")
    n = h * w
    Ti = T.astype(np.int64)
    st = int(Ti.sum())
    dt = n * int((Ti * Ti).sum()) - st * st
    if dt == 0:
        raise UndefinedCorrelationError("template is constant")
    Ii = I.astype(np.int64)
    s1 = integral_image(Ii).box_sums(h, w)
    s2 = integral_image(Ii * Ii).box_sums(h, w)
    windows = np.lib.stride_tricks.sliding_window_view(Ii, (h, w))
    cross = np.einsum("yxij,ij->yx", windows, Ti)
    num = n * cross - s1 * st
    di = n * s2 - s1 * s1
    flat = di == 0
    den = np.sqrt(np.where(flat, 1, di).astype(np.float64) * float(dt))
    scores = np.where(flat, 0.0, num / den)
    return ResultMatrix(np.clip(scores, -1.0, 1.0))


def min_max_loc(m: ResultMatrix | np.ndarray):
    """(min, (x, y), max, (x, y)); ties go to the first row-major occurrence."""
    s = m.scores if isinstance(m, ResultMatrix) else np.asarray(m, dtype=np.float64)
    if s.size == 0:
        raise ParameterError("empty result matrix")
    lo = int(np.argmin(s))
    hi = int(np.argmax(s))
    w = s.shape[1]
    return (
        float(s.flat[lo]),
        (lo % w, lo // w),
        float(s.flat[hi]),
        (hi % w, hi // w),
    )


# -------------------------------------------------------------- rectification


def rectify_candidate(
    img: GrayImage, quad: QuadCandidate | np.ndarray, S: int = 32, border: float = 0.0
) -> GrayImage:
    """Perspective-free S x S view of a quad.

    ``border`` trims that fraction of the marker side on every edge, so 0.25
    keeps only the central half (the pattern area of a marker).
    """
    corners = quad.outer if isinstance(quad, QuadCandidate) else np.asarray(quad, float)
    if S < 2:
        raise ParameterError("pattern size must be >= 2")
    if not 0 <= border < 0.5:
        raise ParameterError("border must lie in [0, 0.5)")
    if np.any(corners < 0) or np.any(corners[:, 0] > img.width) or np.any(corners[:, 1] > img.height):
        raise ParameterError("quad corners must lie inside the image")
    unit = np.array([[0, 0], [0, 1], [1, 1], [1, 0]], dtype=np.float64)
    to_image = estimate_homography(unit, corners)
    k = (1.0 - 2.0 * border) / S
    crop = Homography([[k, 0, border], [0, k, border], [0, 0, 1]])
    return warp_inverse(img, to_image @ crop, S, S)


# ------------------------------------------------------------- identification


@dataclass(frozen=True)
class Identification:
    id: str
    rotation: int
    score: float


def identify_marker(p: GrayImage, reg: PatternRegistry) -> Identification | None:
    """Best (id, rotation) over the registry; ``rotation`` r means p looks like the
    pattern turned r degrees counter-clockwise."""
    if len(reg) == 0:
        return None
    if (p.width, p.height) != (reg.size, reg.size):
        raise ParameterError(f"patch is {p.width}x{p.height}, registry uses {reg.size}")
    best: Identification | None = None
    for pid, pattern in reg.entries:
        for r in ROTATIONS:
            try:
                s = ncc_score(p, rotate_pattern(pattern, r))
            except UndefinedCorrelationError:
                return None
            if best is None or s > best.score:
                best = Identification(pid, r, s)
    if best is None or best.score < reg.acceptance_threshold:
        return None
    return best


@dataclass(frozen=True, eq=False)
class MarkerDetection:
    id: str
    corners: np.ndarray  # (4, 2), order_corners order, continuous image coordinates
    rotation: int
    score: float
    homography: Homography  # marker unit square -> image, in the pattern's frame
    pose: Pose | None = None
    extra: dict = field(default_factory=dict, repr=False)

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "score": float(self.score),
            "rotation_deg": int(self.rotation),
            "corners": [[float(x), float(y)] for x, y in self.corners],
            "homography": self.homography.tolist(),
            "pose": None if self.pose is None else self.pose.to_dict(),
        }
