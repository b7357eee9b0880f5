"""Border following, polygon approximation and square-marker candidates.

Borders are traced with Suzuki-Abe topological border following: foreground
is 8-connected, background 4-connected. Every foreground component yields one
outer border and every hole one inner border. The result is kept as a
two-level hierarchy (components and their holes); a component sitting inside
another component's hole is promoted to the top level.

Point coordinates follow two conventions:

* ``Contour.points`` and ``Polygon.vertices`` are integer pixel indices
  ``(x, y)`` = (column, row).
* ``QuadCandidate`` corners are continuous image coordinates in which pixel
  ``(x, y)`` covers ``[x, x+1) x [y, y+1)``, i.e. its centre is ``(x+0.5, y+0.5)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._borders import follow_borders
from .errors import DegenerateError, ParameterError
from .image_core import BinaryImage

__all__ = [
    "Contour",
    "ContourSet",
    "Polygon",
    "QuadCandidate",
    "trace_contours",
    "approx_polygon",
    "find_quad_candidates",
    "order_corners",
    "signed_area",
    "contour_perimeter",
]


@dataclass(frozen=True, eq=False)
class Contour:
    points: np.ndarray  # (n, 2) int32, (x, y)
    is_outer: bool
    parent: int | None = None

    def __len__(self) -> int:
        return int(self.points.shape[0])


@dataclass(frozen=True)
class ContourSet:
    contours: list[Contour] = field(default_factory=list)
    children: dict[int, list[int]] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.contours)

    @property
    def outer_indices(self) -> list[int]:
        return [i for i, c in enumerate(self.contours) if c.is_outer]


def trace_contours(mask: BinaryImage, invert: bool = False) -> ContourSet:
    """Trace every component border and hole border of ``mask``.

    With ``invert=True`` the 0-pixels are treated as foreground (dark markers
    after thresholding).
    """
    fg = (mask.data == 0) if invert else (mask.data != 0)
    f = np.zeros((mask.height + 2, mask.width + 2), dtype=np.int32)
    f[1:-1, 1:-1] = fg
    pts, starts, is_outer, parent = follow_borders(f)
    # (row, col) in the framed image -> (x, y) in the mask
    xy = np.empty_like(pts)
    xy[:, 0] = pts[:, 1] - 1
    xy[:, 1] = pts[:, 0] - 1
    xy.flags.writeable = False

    contours: list[Contour] = []
    children: dict[int, list[int]] = {}
    for k in range(len(is_outer)):
        seg = xy[starts[k] : starts[k + 1]]
        if is_outer[k]:
            contours.append(Contour(seg, True, None))
        else:
            p = int(parent[k])
            contours.append(Contour(seg, False, p))
            children.setdefault(p, []).append(k)
    return ContourSet(contours, children)


# ------------------------------------------------------------------ polygons


@dataclass(frozen=True, eq=False)
class Polygon:
    vertices: np.ndarray  # (k, 2) float64
    indices: np.ndarray | None = None  # positions of the vertices in the source contour

    @property
    def total(self) -> int:
        return int(self.vertices.shape[0])


def signed_area(pts) -> float:
    """Shoelace area, positive when the ring turns counter-clockwise on screen (y down)."""
    p = np.asarray(pts, dtype=np.float64)
    if len(p) < 3:
        return 0.0
    x, y = p[:, 0], p[:, 1]
    s = float(np.dot(x[1:], y[:-1]) - np.dot(x[:-1], y[1:]))
    return 0.5 * (s + float(x[0] * y[-1] - x[-1] * y[0]))


def contour_perimeter(points) -> float:
    p = np.asarray(points, dtype=np.float64)
    if len(p) < 2:
        return 0.0
    d = np.diff(np.vstack([p, p[:1]]), axis=0)
    return float(np.hypot(d[:, 0], d[:, 1]).sum())


def _segment_distances(p: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    ab = b - a
    denom = float(ab @ ab)
    if denom == 0.0:
        return np.hypot(p[:, 0] - a[0], p[:, 1] - a[1])
    t = np.clip(((p - a) @ ab) / denom, 0.0, 1.0)
    q = a + t[:, None] * ab
    return np.hypot(p[:, 0] - q[:, 0], p[:, 1] - q[:, 1])


def _rdp_chain(pts: np.ndarray, idx: np.ndarray, eps: float) -> list[int]:
    """Keep-list (positions into ``idx``) of an open chain, endpoints included."""
    keep = [0, len(idx) - 1]
    stack = [(0, len(idx) - 1)]
    while stack:
        lo, hi = stack.pop()
        if hi - lo < 2:
            continue
        inner = pts[idx[lo + 1 : hi]]
        d = _segment_distances(inner, pts[idx[lo]], pts[idx[hi]])
        m = int(np.argmax(d))
        if d[m] > eps:
            mid = lo + 1 + m
            keep.append(mid)
            stack.append((lo, mid))
            stack.append((mid, hi))
    return sorted(keep)


def _ring_between(n: int, a: int, b: int) -> np.ndarray:
    """Ring indices from a to b inclusive, walking forward."""
    if b >= a:
        return np.arange(a, b + 1)
    return np.concatenate([np.arange(a, n), np.arange(0, b + 1)])


def _approx_indices(pts: np.ndarray, eps: float) -> list[int]:
    n = len(pts)
    if n < 3:
        return list(range(n))
    d0 = np.hypot(pts[:, 0] - pts[0, 0], pts[:, 1] - pts[0, 1])
    a = int(np.argmax(d0))
    da = np.hypot(pts[:, 0] - pts[a, 0], pts[:, 1] - pts[a, 1])
    b = int(np.argmax(da))
    if da[b] == 0.0:
        return [a]
    first = _ring_between(n, a, b)
    second = _ring_between(n, b, a)
    ring = [int(first[k]) for k in _rdp_chain(pts, first, eps)]
    ring += [int(second[k]) for k in _rdp_chain(pts, second, eps)[1:-1]]

    # the two anchors were forced; drop either if its neighbours already cover it
    for anchor in (a, b):
        if len(ring) <= 2 or anchor not in ring:
            continue
        pos = ring.index(anchor)
        prev_i, next_i = ring[pos - 1], ring[(pos + 1) % len(ring)]
        span = _ring_between(n, prev_i, next_i)
        if np.all(_segment_distances(pts[span], pts[prev_i], pts[next_i]) <= eps):
            ring.pop(pos)
    return ring


def approx_polygon(c: Contour, epsilon: float) -> Polygon:
    """Ramer-Douglas-Peucker on the closed ring of ``c``.

    Every contour point ends up within ``epsilon`` of the returned polygon and
    the vertices are a subset of the contour points.
    """
    if not epsilon > 0:
        raise ParameterError(f"epsilon must be positive, got {epsilon}")
    pts = np.asarray(c.points, dtype=np.float64)
    idx = _approx_indices(pts, float(epsilon))
    if len(idx) < 3:
        raise DegenerateError(
            f"contour of {len(pts)} points collapses to {len(idx)} vertices at epsilon={epsilon}"
        )
    ii = np.asarray(idx, dtype=np.int64)
    return Polygon(pts[ii], ii)


def _is_convex(poly: np.ndarray) -> bool:
    d = np.roll(poly, -1, axis=0) - poly
    cross = d[:, 0] * np.roll(d[:, 1], -1) - d[:, 1] * np.roll(d[:, 0], -1)
    return bool(np.all(cross > 0) or np.all(cross < 0))


def _collinear(a, b, c, scale2: float) -> bool:
    cross = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
    return abs(cross) <= 1e-9 * scale2


def order_corners(corners) -> np.ndarray:
    """Counter-clockwise (on screen) order starting at the smallest ``(y, x)``."""
    p = np.asarray(corners, dtype=np.float64).reshape(-1, 2)
    if p.shape[0] != 4:
        raise ParameterError(f"need 4 corners, got {p.shape[0]}")
    if not np.all(np.isfinite(p)):
        raise DegenerateError("corner coordinates must be finite")
    span = np.ptp(p, axis=0)
    scale2 = float(max(span.max(), 1e-300)) ** 2
    for i in range(4):
        for j in range(i + 1, 4):
            if np.hypot(*(p[i] - p[j])) <= 1e-12 * np.sqrt(scale2) or np.array_equal(p[i], p[j]):
                raise DegenerateError("duplicate corners")
    for i, j, k in ((0, 1, 2), (0, 1, 3), (0, 2, 3), (1, 2, 3)):
        if _collinear(p[i], p[j], p[k], scale2):
            raise DegenerateError("three corners are collinear")
    centre = p.mean(axis=0)
    ang = np.arctan2(p[:, 1] - centre[1], p[:, 0] - centre[0])
    ring = p[np.argsort(ang, kind="stable")]
    if signed_area(ring) < 0:
        ring = ring[::-1]
    first = min(range(4), key=lambda i: (ring[i, 1], ring[i, 0]))
    return np.roll(ring, -first, axis=0)


# -------------------------------------------------------------- candidates


@dataclass(frozen=True, eq=False)
class QuadCandidate:
    outer: np.ndarray  # (4, 2) continuous coordinates, order_corners order
    inner: np.ndarray
    area: float
    outer_index: int = -1
    inner_index: int = -1


def _fit_side(side: np.ndarray, centroid: np.ndarray, foreground_inside: bool):
    """Edge line of one polygon side as (point, unit normal pointing outwards)."""
    m = side.mean(axis=0)
    d = side - m
    sxx, syy, sxy = float(d[:, 0] @ d[:, 0]), float(d[:, 1] @ d[:, 1]), float(d[:, 0] @ d[:, 1])
    # principal axis of the 2x2 scatter matrix
    theta = 0.5 * np.arctan2(2.0 * sxy, sxx - syy)
    normal = np.array([-np.sin(theta), np.cos(theta)])
    if normal @ (m - centroid) < 0:
        normal = -normal
    # boundary pixel centres sit on average max(|nx|,|ny|)/2 inside the foreground
    shift = 0.5 * max(abs(normal[0]), abs(normal[1]))
    m = m + shift * normal if foreground_inside else m - shift * normal
    return m, normal


def _intersect(p1, n1, p2, n2):
    det = n1[0] * n2[1] - n1[1] * n2[0]
    if abs(det) < 1e-6:
        return None
    c1, c2 = n1 @ p1, n2 @ p2
    return np.array([(c1 * n2[1] - c2 * n1[1]) / det, (n1[0] * c2 - n2[0] * c1) / det])


def _refine_corners(points: np.ndarray, idx: np.ndarray, foreground_inside: bool) -> np.ndarray:
    """Sub-pixel quad corners from line fits to the contour between vertices."""
    pts = points.astype(np.float64) + 0.5
    verts = pts[idx]
    centroid = verts.mean(axis=0)
    n = len(pts)
    lines = []
    for k in range(4):
        run = pts[_ring_between(n, int(idx[k]), int(idx[(k + 1) % 4]))]
        trim = max(1, int(round(0.1 * len(run))))
        core = run[trim:-trim] if len(run) - 2 * trim >= 3 else run
        lines.append(_fit_side(core, centroid, foreground_inside))
    out = verts.copy()
    side = min(np.hypot(*(verts[k] - verts[(k + 1) % 4])) for k in range(4))
    for k in range(4):
        hit = _intersect(*lines[k - 1], *lines[k])
        if hit is not None and np.hypot(*(hit - verts[k])) <= max(3.0, 0.15 * side):
            out[k] = hit
    return out


def _point_in_convex(p: np.ndarray, poly: np.ndarray) -> bool:
    s = np.sign(signed_area(poly))
    for k in range(len(poly)):
        a, b = poly[k], poly[(k + 1) % len(poly)]
        cross = (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])
        # screen-ccw rings have negative standard cross for interior points
        if -cross * s <= 0:
            return False
    return True


def _quad_polygon(c: Contour, epsilon_frac: float) -> Polygon | None:
    eps = epsilon_frac * contour_perimeter(c.points)
    if eps <= 0:
        return None
    try:
        poly = approx_polygon(c, eps)
    except DegenerateError:
        return None
    if poly.total != 4 or not _is_convex(poly.vertices):
        return None
    return poly


def find_quad_candidates(
    cset: ContourSet, min_area: float = 100.0, epsilon_frac: float = 0.05
) -> list[QuadCandidate]:
    """Outer borders with a hole where both rings reduce to convex 4-gons.

    At most one candidate per outer border: the one with the largest quad hole.
    """
    if not 0 < epsilon_frac < 0.5:
        raise ParameterError(f"epsilon_frac must lie in (0, 0.5), got {epsilon_frac}")
    if not min_area > 0:
        raise ParameterError(f"min_area must be positive, got {min_area}")
    # a ring enclosing min_area needs at least ~2*sqrt(pi*area)/sqrt(2) border points
    min_points = max(4, int(np.sqrt(4 * np.pi * min_area) / np.sqrt(2)))
    found: list[QuadCandidate] = []
    for oi in sorted(cset.children):
        outer = cset.contours[oi]
        if len(outer) < min_points:
            continue
        area = abs(signed_area(outer.points))
        if area < min_area:
            continue
        opoly = _quad_polygon(outer, epsilon_frac)
        if opoly is None:
            continue
        holes = []
        for ci in cset.children[oi]:
            child = cset.contours[ci]
            # a pattern window spans a quarter of the marker area, so its ring
            # is far longer than a speckle hole
            if len(child) < max(4, min_points // 4):
                continue
            ipoly = _quad_polygon(child, epsilon_frac)
            if ipoly is not None:
                holes.append((ci, child, ipoly))
        if not holes:
            continue
        ocorners = _refine_corners(outer.points, opoly.indices, foreground_inside=True)
        try:
            o = order_corners(ocorners)
        except DegenerateError:
            continue
        if not _is_convex(o):
            continue
        best: QuadCandidate | None = None
        for ci, child, ipoly in holes:
            icorners = _refine_corners(child.points, ipoly.indices, foreground_inside=False)
            try:
                i = order_corners(icorners)
            except DegenerateError:
                continue
            if not _is_convex(i) or not all(_point_in_convex(v, o) for v in i):
                continue
            # speckle holes inside a thick border can also reduce to tiny quads;
            # the pattern window is the largest hole
            if best is None or abs(signed_area(i)) > abs(signed_area(best.inner)):
                best = QuadCandidate(o, i, float(abs(signed_area(o))), oi, ci)
        if best is not None:
            found.append(best)
    return found
