"""Synthetic scenes with exact ground truth.

The renderer is the test oracle for the detection pipeline. Shapes are
defined analytically and rasterised by 4x4 supersampling, so edges carry
area-coverage anti-aliasing and sub-pixel position information.

Marker layout in marker units (the black square is the unit square):

* quiet zone: white band ``QUIET`` wide around the square (not part of the marker),
* black border: the unit square minus the central half,
* pattern: the registry pattern stretched over ``[0.25, 0.75]^2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._font import text_mask
from .chessboard import BoardSpec
from .contour import order_corners, trace_contours
from .errors import ParameterError
from .geometry import (
    UNIT_SQUARE,
    CameraIntrinsics,
    Homography,
    Pose,
    estimate_homography,
    homography_from_pose,
    rotation_from_euler,
)
from .image_core import BinaryImage, GrayImage
from .matching import PatternRegistry, ncc_score, rotate_pattern
from .pipeline import PATTERN_BORDER

__all__ = [
    "QUIET",
    "PATTERN_BORDER",
    "DEFAULT_CAMERA",
    "Placement",
    "Distractor",
    "SyntheticScene",
    "render_synthetic",
    "make_patterns",
    "make_registry",
    "random_marker_scene",
    "random_distractor_scene",
    "placement_from_pose",
    "rotation_label",
    "render_chessboard",
    "chessboard_homography",
    "marker_pose",
    "gradient_background",
    "pattern_ids",
    "scene_from_dict",
    "FrameScore",
    "score_detections",
    "tiled_marker_scene",
]

QUIET = 0.3
SUPERSAMPLE = 4
DEFAULT_CAMERA = CameraIntrinsics(fx=800.0, fy=800.0, cx=320.0, cy=240.0)


# ------------------------------------------------------------------ patterns


def _pattern_from_bits(bits: np.ndarray, S: int) -> GrayImage:
    g = bits.shape[0] + 2
    cells = np.ones((g, g), dtype=bool)  # white margin ring
    cells[1:-1, 1:-1] = ~bits
    idx = (np.arange(S) + 0.5) * g / S
    k = np.floor(idx).astype(int)
    return GrayImage(np.where(cells[np.ix_(k, k)], 255, 0).astype(np.uint8))


def _pattern_ok(img: GrayImage) -> bool:
    # black cells must not enclose white: a hole would read as a nested quad
    cs = trace_contours(BinaryImage((img.data == 0).astype(np.uint8)))
    return all(c.is_outer for c in cs.contours)


def make_patterns(
    n: int, rng: np.random.Generator, S: int = 32, bits: int = 5, max_similarity: float = 0.5
) -> list[GrayImage]:
    """Random block patterns, pairwise dissimilar under all four rotations."""
    out: list[GrayImage] = []
    for _ in range(20000):
        if len(out) == n:
            return out
        b = rng.random((bits, bits)) < 0.5
        if not bits * bits // 3 <= b.sum() <= 2 * bits * bits // 3:
            continue
        cand = _pattern_from_bits(b, S)
        if not _pattern_ok(cand):
            continue
        if any(ncc_score(cand, rotate_pattern(cand, r)) >= max_similarity for r in (90, 180, 270)):
            continue
        if any(
            ncc_score(cand, rotate_pattern(other, r)) >= max_similarity
            for other in out
            for r in (0, 90, 180, 270)
        ):
            continue
        out.append(cand)
    raise ParameterError(f"could only generate {len(out)} of {n} dissimilar patterns")


def pattern_ids(n: int) -> list[str]:
    letters = "ABCDEFGHIJKLMNOPQRSTUVWXYZ"
    return [letters[i] if i < 26 else f"P{i}" for i in range(n)]


def make_registry(
    n: int, seed: int = 0, S: int = 32, acceptance_threshold: float = 0.75, extra: int = 0
) -> tuple[PatternRegistry, list[GrayImage]]:
    """Registry of ``n`` patterns plus ``extra`` unregistered, equally dissimilar ones."""
    pats = make_patterns(n + extra, np.random.default_rng(seed), S=S)
    reg = PatternRegistry(tuple(zip(pattern_ids(n), pats[:n])), acceptance_threshold)
    return reg, pats[n:]


# ----------------------------------------------------------------- rendering


def _subsample_grid(x0: int, y0: int, x1: int, y1: int, ss: int = SUPERSAMPLE):
    """Continuous sample positions for pixels [x0, x1) x [y0, y1); shape (h, w, ss*ss)."""
    off = (np.arange(ss) + 0.5) / ss
    ox, oy = np.meshgrid(off, off)
    xs = np.arange(x0, x1, dtype=np.float64)[None, :, None] + ox.ravel()[None, None, :]
    ys = np.arange(y0, y1, dtype=np.float64)[:, None, None] + oy.ravel()[None, None, :]
    xs = np.broadcast_to(xs, (y1 - y0, x1 - x0, ss * ss))
    ys = np.broadcast_to(ys, (y1 - y0, x1 - x0, ss * ss))
    return xs, ys


def _marker_texture(u: np.ndarray, v: np.ndarray, pattern: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Marker reflectance in [0, 1] at marker coordinates, plus an 'inside quiet zone' mask."""
    inside_zone = (u >= -QUIET) & (u <= 1 + QUIET) & (v >= -QUIET) & (v <= 1 + QUIET)
    in_square = (u >= 0) & (u < 1) & (v >= 0) & (v < 1)
    lo, hi = PATTERN_BORDER, 1 - PATTERN_BORDER
    in_pattern = (u >= lo) & (u < hi) & (v >= lo) & (v < hi)
    S = pattern.shape[0]
    pc = np.clip(np.floor((u - lo) / (hi - lo) * S).astype(np.int64), 0, S - 1)
    pr = np.clip(np.floor((v - lo) / (hi - lo) * S).astype(np.int64), 0, S - 1)
    tex = np.ones_like(u)
    tex = np.where(in_square, 0.0, tex)
    tex = np.where(in_pattern, pattern[pr, pc] / 255.0, tex)
    return tex, inside_zone


def _bbox(pts: np.ndarray, width: int, height: int) -> tuple[int, int, int, int]:
    x0 = max(int(math.floor(pts[:, 0].min())) - 1, 0)
    y0 = max(int(math.floor(pts[:, 1].min())) - 1, 0)
    x1 = min(int(math.ceil(pts[:, 0].max())) + 1, width)
    y1 = min(int(math.ceil(pts[:, 1].max())) + 1, height)
    return x0, y0, x1, y1


def _paint_marker(canvas: np.ndarray, H: Homography, pattern: np.ndarray, contrast: float) -> None:
    h, w = canvas.shape
    zone = np.array([[-QUIET, -QUIET], [-QUIET, 1 + QUIET], [1 + QUIET, 1 + QUIET], [1 + QUIET, -QUIET]])
    x0, y0, x1, y1 = _bbox(H.map(zone), w, h)
    if x1 <= x0 or y1 <= y0:
        return
    xs, ys = _subsample_grid(x0, y0, x1, y1)
    inv = H.inverse().m
    den = inv[2, 0] * xs + inv[2, 1] * ys + inv[2, 2]
    u = (inv[0, 0] * xs + inv[0, 1] * ys + inv[0, 2]) / den
    v = (inv[1, 0] * xs + inv[1, 1] * ys + inv[1, 2]) / den
    tex, inside = _marker_texture(u, v, pattern)
    lo = 128.0 - 127.0 * contrast
    hi = 128.0 + 127.0 * contrast
    value = lo + (hi - lo) * tex
    bg = canvas[y0:y1, x0:x1][:, :, None]
    mixed = np.where(inside, value, bg)
    canvas[y0:y1, x0:x1] = mixed.mean(axis=2)


def _paint_shape(canvas: np.ndarray, bbox, inside_fn, value: float) -> None:
    x0, y0, x1, y1 = bbox
    x0, y0 = max(x0, 0), max(y0, 0)
    x1, y1 = min(x1, canvas.shape[1]), min(y1, canvas.shape[0])
    if x1 <= x0 or y1 <= y0:
        return
    xs, ys = _subsample_grid(x0, y0, x1, y1)
    cov = inside_fn(xs, ys).mean(axis=2)
    region = canvas[y0:y1, x0:x1]
    canvas[y0:y1, x0:x1] = region * (1 - cov) + value * cov


# ------------------------------------------------------------------- scenes


@dataclass(frozen=True)
class Placement:
    id: str
    homography: Homography  # marker unit square -> image
    contrast: float = 1.0
    pose: Pose | None = None

    @property
    def corners(self) -> np.ndarray:
        """Images of the marker corners (0,0), (0,1), (1,1), (1,0)."""
        return self.homography.map(UNIT_SQUARE)

    def zone_corners(self) -> np.ndarray:
        q = QUIET
        return self.homography.map(np.array([[-q, -q], [-q, 1 + q], [1 + q, 1 + q], [1 + q, -q]]))


@dataclass(frozen=True)
class Distractor:
    kind: str
    params: dict

    def paint(self, canvas: np.ndarray) -> None:
        _DISTRACTORS[self.kind](canvas, **self.params)


def rotation_label(corners_marker_order: np.ndarray) -> int:
    """Rotation (degrees) the pipeline should report for a marker with these corners."""
    canon = order_corners(corners_marker_order)
    k = int(np.argmin(np.hypot(*(canon - corners_marker_order[0]).T)))
    return 90 * k


def _convex_overlap(a: np.ndarray, b: np.ndarray) -> bool:
    for poly in (a, b):
        for k in range(len(poly)):
            e = poly[(k + 1) % len(poly)] - poly[k]
            n = np.array([-e[1], e[0]])
            pa, pb = a @ n, b @ n
            if pa.max() < pb.min() or pb.max() < pa.min():
                return False
    return True


@dataclass
class SyntheticScene:
    background: GrayImage
    placements: list[Placement] = field(default_factory=list)
    distractors: list[Distractor] = field(default_factory=list)
    camera: CameraIntrinsics | None = None

    def validate(self) -> None:
        w, h = self.background.width, self.background.height
        for p in self.placements:
            z = p.zone_corners()
            if np.any(z < 0) or np.any(z[:, 0] > w) or np.any(z[:, 1] > h):
                raise ParameterError(f"placement {p.id!r} leaves the frame")
        zones = [p.zone_corners() for p in self.placements]
        for i in range(len(zones)):
            for j in range(i + 1, len(zones)):
                if _convex_overlap(zones[i], zones[j]):
                    raise ParameterError("placements overlap")

    @property
    def ground_truth(self) -> list[dict]:
        out = []
        for p in self.placements:
            c = p.corners
            out.append(
                {
                    "id": p.id,
                    "corners_marker_order": c.tolist(),
                    "corners": order_corners(c).tolist(),
                    "rotation_deg": rotation_label(c),
                    "pose": None if p.pose is None else p.pose.to_dict(),
                }
            )
        return out


def render_synthetic(
    scene: SyntheticScene,
    reg: PatternRegistry | dict,
    noise_sigma: float = 0.0,
    rng: np.random.Generator | int | None = None,
) -> GrayImage:
    """Draw distractors and markers over the background, then add Gaussian noise.

    ``reg`` may also be a plain ``{id: GrayImage}`` mapping so that scenes can
    show patterns that are absent from the detection registry.
    """
    if noise_sigma < 0:
        raise ParameterError("noise_sigma must be >= 0")
    lookup = dict(reg.entries) if isinstance(reg, PatternRegistry) else dict(reg)
    for p in scene.placements:
        if p.id not in lookup:
            raise ParameterError(f"placement id {p.id!r} is not in the registry")
    scene.validate()
    canvas = scene.background.data.astype(np.float64)
    for d in scene.distractors:
        d.paint(canvas)
    for p in scene.placements:
        _paint_marker(canvas, p.homography, lookup[p.id].data, p.contrast)
    if noise_sigma > 0:
        if not isinstance(rng, np.random.Generator):
            rng = np.random.default_rng(rng)
        canvas = canvas + rng.normal(0.0, noise_sigma, canvas.shape)
    return GrayImage(np.floor(canvas + 0.5).clip(0, 255).astype(np.uint8))


def gradient_background(width: int, height: int, rng: np.random.Generator) -> GrayImage:
    base = rng.uniform(70, 170)
    gx, gy = rng.uniform(-60, 60, 2)
    ys, xs = np.mgrid[0:height, 0:width]
    img = base + gx * (xs / width - 0.5) + gy * (ys / height - 0.5)
    return GrayImage(np.floor(img + 0.5).clip(0, 255).astype(np.uint8))


def placement_from_pose(
    pid: str, pose: Pose, camera: CameraIntrinsics = DEFAULT_CAMERA, contrast: float = 1.0
) -> Placement:
    return Placement(pid, homography_from_pose(camera, pose), contrast, pose)


def _axis_tilt(tilt: float, axis_angle: float) -> np.ndarray:
    axis = np.array([math.cos(axis_angle), math.sin(axis_angle), 0.0])
    k = np.array([[0, -axis[2], axis[1]], [axis[2], 0, -axis[0]], [-axis[1], axis[0], 0]])
    return np.eye(3) + math.sin(tilt) * k + (1 - math.cos(tilt)) * (k @ k)


def marker_pose(
    centre_px, side_px: float, tilt_deg: float, tilt_axis_deg: float, spin_deg: float,
    camera: CameraIntrinsics = DEFAULT_CAMERA,
) -> Pose:
    """Pose putting the marker centre on ``centre_px`` with roughly ``side_px`` sides."""
    R = _axis_tilt(math.radians(tilt_deg), math.radians(tilt_axis_deg)) @ rotation_from_euler(
        0, 0, math.radians(spin_deg)
    )
    depth = camera.fx / side_px
    ray = np.linalg.solve(camera.K, np.array([centre_px[0], centre_px[1], 1.0]))
    centre = depth * ray / ray[2]
    return Pose(R, centre - R @ np.array([0.5, 0.5, 0.0]))


def _edge_lengths(c: np.ndarray) -> np.ndarray:
    return np.hypot(*(np.roll(c, -1, axis=0) - c).T)


def random_marker_placement(
    rng: np.random.Generator, pid: str, width: int, height: int, taken: list[np.ndarray],
    max_tilt: float = 45.0, min_side: float = 40.0, max_side: float = 110.0,
    camera: CameraIntrinsics = DEFAULT_CAMERA, tries: int = 200,
) -> Placement | None:
    for _ in range(tries):
        side = rng.uniform(min_side + 6, max_side)
        pose = marker_pose(
            (rng.uniform(0, width), rng.uniform(0, height)),
            side,
            rng.uniform(0, max_tilt),
            rng.uniform(0, 360),
            rng.uniform(0, 360),
            camera,
        )
        p = placement_from_pose(pid, pose, camera, contrast=float(rng.uniform(0.75, 1.0)))
        if _edge_lengths(p.corners).min() < min_side:
            continue
        z = p.zone_corners()
        if np.any(z < 2) or np.any(z[:, 0] > width - 2) or np.any(z[:, 1] > height - 2):
            continue
        if any(_convex_overlap(_grow(z, 4), t) for t in taken):
            continue
        return p
    return None


def _grow(poly: np.ndarray, px: float) -> np.ndarray:
    c = poly.mean(axis=0)
    d = poly - c
    n = np.hypot(*d.T)[:, None]
    return c + d * (n + px) / n


# --------------------------------------------------------------- distractors


def _circle(canvas, cx, cy, r, value, hole=0.0):
    def inside(x, y):
        d2 = (x - cx) ** 2 + (y - cy) ** 2
        m = d2 <= r * r
        return m & (d2 > hole * hole) if hole > 0 else m

    _paint_shape(canvas, (int(cx - r) - 1, int(cy - r) - 1, int(cx + r) + 2, int(cy + r) + 2), inside, value)


def _local(x, y, cx, cy, angle):
    c, s = math.cos(angle), math.sin(angle)
    return c * (x - cx) + s * (y - cy), -s * (x - cx) + c * (y - cy)


def _triangle(canvas, cx, cy, r, angle, value, hole=0.0):
    verts = [
        (cx + r * math.cos(angle + k * 2 * math.pi / 3), cy + r * math.sin(angle + k * 2 * math.pi / 3))
        for k in range(3)
    ]

    def inside(x, y):
        m = np.ones(x.shape, dtype=bool)
        for k in range(3):
            (ax, ay), (bx, by) = verts[k], verts[(k + 1) % 3]
            m &= (bx - ax) * (y - ay) - (by - ay) * (x - ax) >= 0
        if hole > 0:
            m &= (x - cx) ** 2 + (y - cy) ** 2 > hole * hole
        return m

    _paint_shape(canvas, (int(cx - r) - 1, int(cy - r) - 1, int(cx + r) + 2, int(cy + r) + 2), inside, value)


def _lshape(canvas, cx, cy, r, angle, value):
    def inside(x, y):
        u, v = _local(x, y, cx, cy, angle)
        a = (u >= -r) & (u <= r) & (v >= -r) & (v <= -r + 0.8 * r)
        b = (u >= -r) & (u <= -r + 0.8 * r) & (v >= -r) & (v <= r)
        return a | b

    rr = r * 1.5
    _paint_shape(canvas, (int(cx - rr) - 1, int(cy - rr) - 1, int(cx + rr) + 2, int(cy + rr) + 2), inside, value)


def _square_round_hole(canvas, cx, cy, r, angle, value):
    def inside(x, y):
        u, v = _local(x, y, cx, cy, angle)
        return (np.abs(u) <= r) & (np.abs(v) <= r) & (u * u + v * v > (0.55 * r) ** 2)

    rr = r * 1.5
    _paint_shape(canvas, (int(cx - rr) - 1, int(cy - rr) - 1, int(cx + rr) + 2, int(cy + rr) + 2), inside, value)


def _circle_square_hole(canvas, cx, cy, r, angle, value):
    def inside(x, y):
        u, v = _local(x, y, cx, cy, angle)
        return (u * u + v * v <= r * r) & ~((np.abs(u) <= 0.45 * r) & (np.abs(v) <= 0.45 * r))

    _paint_shape(canvas, (int(cx - r) - 1, int(cy - r) - 1, int(cx + r) + 2, int(cy + r) + 2), inside, value)


def _text(canvas, cx, cy, r, text, scale, value):
    m = text_mask(text, scale=1)
    h, w = m.shape
    x0 = cx - w * scale / 2
    y0 = cy - h * scale / 2

    def inside(x, y):
        c = np.floor((x - x0) / scale).astype(np.int64)
        rr = np.floor((y - y0) / scale).astype(np.int64)
        ok = (c >= 0) & (c < w) & (rr >= 0) & (rr < h)
        return ok & m[np.clip(rr, 0, h - 1), np.clip(c, 0, w - 1)]

    _paint_shape(
        canvas, (int(x0) - 1, int(y0) - 1, int(x0 + w * scale) + 2, int(y0 + h * scale) + 2), inside, value
    )


_DISTRACTORS = {
    "circle": _circle,
    "triangle": _triangle,
    "lshape": _lshape,
    "square_round_hole": _square_round_hole,
    "circle_square_hole": _circle_square_hole,
    "text": _text,
}


def random_distractor(rng: np.random.Generator, width: int, height: int, taken: list[np.ndarray]) -> Distractor | None:
    kinds = ["circle", "ring", "triangle", "triangle_hole", "lshape", "square_round_hole", "circle_square_hole", "text"]
    for _ in range(100):
        kind = kinds[int(rng.integers(len(kinds)))]
        r = float(rng.uniform(15, 45))
        cx = float(rng.uniform(r + 4, width - r - 4))
        cy = float(rng.uniform(r + 4, height - r - 4))
        value = float(rng.uniform(0, 70))
        angle = float(rng.uniform(0, 2 * math.pi))
        if kind == "text":
            word = "".join(rng.choice(list("ABCDEFGHKMNPRSTUVWXYZ2345678"), int(rng.integers(3, 6))))
            scale = int(rng.integers(2, 5))
            r = 0.5 * math.hypot(len(word) * 6 * scale, 7 * scale)
            cx = float(rng.uniform(r + 4, width - r - 4))
            cy = float(rng.uniform(r + 4, height - r - 4))
            d = Distractor("text", dict(cx=cx, cy=cy, r=r, text=word, scale=scale, value=value))
        elif kind == "circle":
            d = Distractor("circle", dict(cx=cx, cy=cy, r=r, value=value))
        elif kind == "ring":
            d = Distractor("circle", dict(cx=cx, cy=cy, r=r, value=value, hole=0.5 * r))
        elif kind == "triangle":
            d = Distractor("triangle", dict(cx=cx, cy=cy, r=r, angle=angle, value=value))
        elif kind == "triangle_hole":
            d = Distractor("triangle", dict(cx=cx, cy=cy, r=r, angle=angle, value=value, hole=0.25 * r))
        else:
            d = Distractor(kind, dict(cx=cx, cy=cy, r=r, angle=angle, value=value))
        rr = d.params["r"] * 1.5 + 3
        box = np.array([[cx - rr, cy - rr], [cx - rr, cy + rr], [cx + rr, cy + rr], [cx + rr, cy - rr]])
        if any(_convex_overlap(box, t) for t in taken):
            continue
        taken.append(box)
        return d
    return None


def random_marker_scene(
    rng: np.random.Generator,
    ids: list[str],
    width: int = 640,
    height: int = 480,
    n_markers: tuple[int, int] = (1, 3),
    n_distractors: tuple[int, int] = (0, 4),
    max_tilt: float = 45.0,
    min_side: float = 40.0,
    max_noise: float = 8.0,
    camera: CameraIntrinsics = DEFAULT_CAMERA,
) -> tuple[SyntheticScene, float]:
    """Scene with 1-3 registry markers (distinct ids) and a few distractors."""
    bg = gradient_background(width, height, rng)
    count = int(rng.integers(n_markers[0], n_markers[1] + 1))
    chosen = [ids[int(i)] for i in rng.choice(len(ids), size=min(count, len(ids)), replace=False)]
    placements: list[Placement] = []
    taken: list[np.ndarray] = []
    for pid in chosen:
        p = random_marker_placement(rng, pid, width, height, taken, max_tilt, min_side, camera=camera)
        if p is not None:
            placements.append(p)
            taken.append(_grow(p.zone_corners(), 4))
    distractors = []
    for _ in range(int(rng.integers(n_distractors[0], n_distractors[1] + 1))):
        d = random_distractor(rng, width, height, taken)
        if d is not None:
            distractors.append(d)
    noise = float(rng.uniform(0, max_noise))
    return SyntheticScene(bg, placements, distractors, camera), noise


def random_distractor_scene(
    rng: np.random.Generator, width: int = 640, height: int = 480, n: tuple[int, int] = (4, 8),
    max_noise: float = 8.0,
) -> tuple[SyntheticScene, float]:
    bg = gradient_background(width, height, rng)
    taken: list[np.ndarray] = []
    ds = []
    for _ in range(int(rng.integers(n[0], n[1] + 1))):
        d = random_distractor(rng, width, height, taken)
        if d is not None:
            ds.append(d)
    return SyntheticScene(bg, [], ds, None), float(rng.uniform(0, max_noise))


# --------------------------------------------------------------- chessboards


def render_chessboard(
    spec: BoardSpec,
    H: Homography,
    width: int = 640,
    height: int = 480,
    background: float = 128.0,
    noise_sigma: float = 0.0,
    rng: np.random.Generator | int | None = None,
) -> tuple[GrayImage, np.ndarray]:
    """Board drawn through ``H`` (board units: one square = 1, inner corners at
    integer points (1..W, 1..H), one white square of margin). Returns the frame
    and the row-major ground-truth inner corners."""
    nx, ny = spec.board_width + 1, spec.board_height + 1
    canvas = np.full((height, width), float(background))
    outline = np.array([[-1, -1], [-1, ny + 1], [nx + 1, ny + 1], [nx + 1, -1]], dtype=float)
    x0, y0, x1, y1 = _bbox(H.map(outline), width, height)
    xs, ys = _subsample_grid(x0, y0, x1, y1)
    inv = H.inverse().m
    den = inv[2, 0] * xs + inv[2, 1] * ys + inv[2, 2]
    u = (inv[0, 0] * xs + inv[0, 1] * ys + inv[0, 2]) / den
    v = (inv[1, 0] * xs + inv[1, 1] * ys + inv[1, 2]) / den
    on_sheet = (u >= -1) & (u <= nx + 1) & (v >= -1) & (v <= ny + 1)
    on_board = (u >= 0) & (u < nx) & (v >= 0) & (v < ny)
    black = on_board & ((np.floor(u) + np.floor(v)) % 2 == 0)
    val = np.where(black, 20.0, 235.0)
    bg = canvas[y0:y1, x0:x1][:, :, None]
    canvas[y0:y1, x0:x1] = np.where(on_sheet, val, bg).mean(axis=2)
    if noise_sigma > 0:
        if not isinstance(rng, np.random.Generator):
            rng = np.random.default_rng(rng)
        canvas = canvas + rng.normal(0, noise_sigma, canvas.shape)
    gx, gy = np.meshgrid(np.arange(1, nx, dtype=float), np.arange(1, ny, dtype=float))
    truth = H.map(np.column_stack([gx.ravel(), gy.ravel()]))
    return GrayImage(np.floor(canvas + 0.5).clip(0, 255).astype(np.uint8)), truth


def chessboard_homography(
    spec: BoardSpec,
    square_px: float = 40.0,
    tilt_deg: float = 0.0,
    spin_deg: float = 0.0,
    tilt_axis_deg: float = 0.0,
    centre=(320.0, 240.0),
    camera: CameraIntrinsics = DEFAULT_CAMERA,
) -> Homography:
    """Board units -> image for a board centred on ``centre`` (pixels)."""
    nx, ny = spec.board_width + 1, spec.board_height + 1
    R = _axis_tilt(math.radians(tilt_deg), math.radians(tilt_axis_deg)) @ rotation_from_euler(
        0, 0, math.radians(spin_deg)
    )
    depth = camera.fx / square_px
    ray = np.linalg.solve(camera.K, np.array([centre[0], centre[1], 1.0]))
    c = depth * ray / ray[2]
    T = c - R @ np.array([nx / 2, ny / 2, 0.0])
    return homography_from_pose(camera, Pose(R, T))


# ------------------------------------------------------------ scene files


def _background_from(spec, width: int, height: int) -> GrayImage:
    if spec is None:
        return GrayImage.filled(width, height, 128)
    if isinstance(spec, (int, float)):
        return GrayImage.filled(width, height, int(spec))
    if isinstance(spec, dict) and "gradient" in spec:
        base, gx, gy = (float(v) for v in spec["gradient"])
        ys, xs = np.mgrid[0:height, 0:width]
        img = base + gx * (xs / width - 0.5) + gy * (ys / height - 0.5)
        return GrayImage(np.floor(img + 0.5).clip(0, 255).astype(np.uint8))
    raise ParameterError(f"bad background {spec!r}")


def scene_from_dict(d: dict, camera: CameraIntrinsics | None = None) -> tuple[SyntheticScene, float]:
    """Build a scene from its JSON description.

    ``{"width", "height", "background": level | {"gradient": [base, gx, gy]},
    "noise_sigma", "camera": {...}, "markers": [{"id", "corners" | "pose", "contrast"}]}``.
    Marker ``corners`` are the images of (0,0), (0,1), (1,1), (1,0); a ``pose``
    ({"R", "T"}) is projected through the scene camera (default 800 px focal).
    """
    if not isinstance(d, dict):
        raise ParameterError("scene must be a JSON object")
    try:
        width = int(d.get("width", 640))
        height = int(d.get("height", 480))
        if width < 1 or height < 1:
            raise ParameterError("scene size must be positive")
        if "camera" in d:
            camera = CameraIntrinsics.from_dict(d["camera"])
        camera = camera or DEFAULT_CAMERA
        placements = []
        for m in d.get("markers", []):
            contrast = float(m.get("contrast", 1.0))
            if not 0 < contrast <= 1:
                raise ParameterError("contrast must lie in (0, 1]")
            if "pose" in m:
                pose = Pose(np.array(m["pose"]["R"], float), np.array(m["pose"]["T"], float))
                placements.append(placement_from_pose(str(m["id"]), pose, camera, contrast))
            else:
                H = estimate_homography(UNIT_SQUARE, np.array(m["corners"], float))
                placements.append(Placement(str(m["id"]), H, contrast))
        noise = float(d.get("noise_sigma", 0.0))
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ParameterError):
            raise
        raise ParameterError(f"bad scene description: {exc}") from exc
    scene = SyntheticScene(_background_from(d.get("background"), width, height), placements, [], camera)
    return scene, noise


# --------------------------------------------------------------- scoring


@dataclass
class FrameScore:
    """Comparison of one frame's detections with its ground truth."""

    matched: int = 0
    missed: list[str] = field(default_factory=list)
    wrong_id: list[tuple[str, str]] = field(default_factory=list)
    wrong_rotation: list[tuple[str, int, int]] = field(default_factory=list)
    false_positives: list[str] = field(default_factory=list)
    corner_rms: list[float] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not (self.missed or self.wrong_id or self.wrong_rotation or self.false_positives)


def score_detections(scene: SyntheticScene, detections) -> FrameScore:
    """Match detections to placements by quad centre and score them.

    The rotation label is judged against the detector's own corner order:
    corner ``rotation / 90`` of the reported corners must be the one nearest
    to the marker origin. Corner error is measured in marker order, so it
    also checks the origin assignment.
    """
    score = FrameScore()
    used: set[int] = set()
    for p in scene.placements:
        gt = p.corners
        side = float(_edge_lengths(gt).min())
        best, best_d = None, 0.25 * side
        for k, d in enumerate(detections):
            dist = math.hypot(*(np.mean(d.corners, axis=0) - gt.mean(axis=0)))
            if k not in used and dist < best_d:
                best, best_d = k, dist
        if best is None:
            score.missed.append(p.id)
            continue
        used.add(best)
        d = detections[best]
        if d.id != p.id:
            score.wrong_id.append((p.id, d.id))
            continue
        expected = 90 * int(np.argmin(np.hypot(*(np.asarray(d.corners) - gt[0]).T)))
        if d.rotation != expected:
            score.wrong_rotation.append((p.id, d.rotation, expected))
        marker_order = np.roll(np.asarray(d.corners), -(d.rotation // 90), axis=0)
        score.corner_rms.append(float(np.sqrt(np.mean(np.sum((marker_order - gt) ** 2, axis=1)))))
        score.matched += 1
    score.false_positives = [d.id for k, d in enumerate(detections) if k not in used]
    return score


def tiled_marker_scene(
    ids: list[str], cols: int = 4, rows: int = 3, width: int = 640, height: int = 480, seed: int = 0
) -> SyntheticScene:
    """A fixed frame of ``cols x rows`` near-frontal markers (ids cycled), used for timing."""
    rng = np.random.default_rng(seed)
    cw, ch = width / cols, height / rows
    side = 0.4 * min(cw, ch)
    placements = []
    for k in range(cols * rows):
        cx, cy = (k % cols + 0.5) * cw, (k // cols + 0.5) * ch
        pose = marker_pose((cx, cy), side, rng.uniform(0, 20), rng.uniform(0, 360), rng.uniform(0, 360))
        placements.append(placement_from_pose(ids[k % len(ids)], pose))
    return SyntheticScene(gradient_background(width, height, rng), placements, [], DEFAULT_CAMERA)
