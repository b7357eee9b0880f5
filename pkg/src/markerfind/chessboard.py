"""Chessboard inner-corner detection.

Candidates are Harris maxima that look like X-junctions (four alternating
dark/light sectors on a small circle). A projective grid is then grown from a
seed corner: the homography from integer grid coordinates to the corners
found so far predicts where the next ring of corners must be.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NotFoundError, NoStructureError, ParameterError
from .geometry import bilinear, fit_homography
from .image_core import GrayImage

__all__ = [
    "BoardSpec",
    "CornerGrid",
    "corner_response",
    "refine_subpixel",
    "find_chessboard_corners",
    "outer_corners",
    "outer_corner_indices",
]

HARRIS_K = 0.04
REFINE_SIGMA = 1.0


@dataclass(frozen=True)
class BoardSpec:
    """Inner corners per row (``board_width``) and per column (``board_height``)."""

    board_width: int
    board_height: int

    def __post_init__(self) -> None:
        if self.board_width < 2 or self.board_height < 2:
            raise ParameterError("a board needs at least 2x2 inner corners")

    @property
    def count(self) -> int:
        return self.board_width * self.board_height

    @classmethod
    def parse(cls, text: str) -> "BoardSpec":
        """``"7x5"`` -> BoardSpec(7, 5)."""
        try:
            w, h = text.lower().split("x")
            return cls(int(w), int(h))
        except ValueError as exc:
            raise ParameterError(f"board must look like WxH, got {text!r}") from exc


@dataclass(frozen=True, eq=False)
class CornerGrid:
    corners: np.ndarray  # (W*H, 2) row-major, continuous image coordinates
    response: np.ndarray  # (W*H,)

    def __len__(self) -> int:
        return len(self.corners)

    def to_dict(self, spec: BoardSpec) -> dict:
        return {
            "board": [spec.board_width, spec.board_height],
            "corners": [[float(x), float(y)] for x, y in self.corners],
            "outer_corners": [[float(x), float(y)] for x, y in outer_corners(self, spec)],
        }


# ------------------------------------------------------------------ filters


def _gaussian_kernel(sigma: float) -> np.ndarray:
    r = int(math.ceil(3 * sigma))
    x = np.arange(-r, r + 1, dtype=np.float64)
    k = np.exp(-x * x / (2 * sigma * sigma))
    return k / k.sum()


def _blur(a: np.ndarray, sigma: float) -> np.ndarray:
    k = _gaussian_kernel(sigma)
    r = len(k) // 2
    p = np.pad(a, r, mode="reflect")
    h, w = a.shape
    tmp = sum(k[i] * p[:, i : i + w] for i in range(len(k)))
    return sum(k[i] * tmp[i : i + h, :] for i in range(len(k)))


def _gradients(data: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Central differences; one-sided on the outermost pixels."""
    a = data.astype(np.float64)
    gx = np.zeros_like(a)
    gy = np.zeros_like(a)
    gx[:, 1:-1] = (a[:, 2:] - a[:, :-2]) / 2
    gy[1:-1, :] = (a[2:, :] - a[:-2, :]) / 2
    gx[:, 0], gx[:, -1] = a[:, 1] - a[:, 0], a[:, -1] - a[:, -2]
    gy[0, :], gy[-1, :] = a[1, :] - a[0, :], a[-1, :] - a[-2, :]
    return gx, gy


def corner_response(img: GrayImage, sigma: float = 1.0, k: float = HARRIS_K) -> np.ndarray:
    """Harris response det(M) - k trace(M)^2 of the Gaussian-weighted structure tensor."""
    if not 0.5 <= sigma <= 3:
        raise ParameterError("sigma must lie in [0.5, 3]")
    if img.width < 7 or img.height < 7:
        raise ParameterError("image must be at least 7x7")
    gx, gy = _gradients(img.data)
    sxx = _blur(gx * gx, sigma)
    syy = _blur(gy * gy, sigma)
    sxy = _blur(gx * gy, sigma)
    resp = sxx * syy - sxy * sxy - k * (sxx + syy) ** 2
    b = int(math.ceil(3 * sigma))
    resp[:b, :] = 0
    resp[-b:, :] = 0
    resp[:, :b] = 0
    resp[:, -b:] = 0
    return resp


# --------------------------------------------------------------- sub-pixel


def _refine(gx, gy, p, half_window: int, max_iter: int = 20, eps: float = 0.01) -> np.ndarray:
    h, w = gx.shape
    start = np.asarray(p, dtype=np.float64)
    cur = start.copy()
    off = np.arange(-half_window, half_window + 1)
    sigma = max(half_window / 2.0, 1.0)
    for _ in range(max_iter):
        # pixel whose centre is nearest to the estimate, then a square window around it
        cx = int(math.floor(cur[0]))
        cy = int(math.floor(cur[1]))
        if cx - half_window < 0 or cy - half_window < 0 or cx + half_window >= w or cy + half_window >= h:
            raise ParameterError("refinement window leaves the image")
        ys = cy + off
        xs = cx + off
        qx = xs[None, :] + 0.5
        qy = ys[:, None] + 0.5
        wgt = np.exp(-((qx - cur[0]) ** 2 + (qy - cur[1]) ** 2) / (2 * sigma * sigma))
        ax = gx[np.ix_(ys, xs)]
        ay = gy[np.ix_(ys, xs)]
        a11 = float((wgt * ax * ax).sum())
        a12 = float((wgt * ax * ay).sum())
        a22 = float((wgt * ay * ay).sum())
        det = a11 * a22 - a12 * a12
        if a11 + a22 == 0 or det <= 1e-9 * (a11 + a22) ** 2:
            raise NoStructureError("no corner structure inside the window")
        b1 = float((wgt * (ax * ax * qx + ax * ay * qy)).sum())
        b2 = float((wgt * (ax * ay * qx + ay * ay * qy)).sum())
        new = np.array([(a22 * b1 - a12 * b2) / det, (a11 * b2 - a12 * b1) / det])
        d = new - start
        dist = math.hypot(*d)
        if dist > half_window:
            new = start + d * (half_window / dist)
        shift = math.hypot(*(new - cur))
        cur = new
        if shift < eps:
            break
    return cur


def _refine_gradients(data: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # a one-pixel Gaussian widens the gradient profile of an anti-aliased edge
    # enough that unit-spaced samples centre on the true edge
    return _gradients(_blur(data.astype(np.float64), REFINE_SIGMA))


def refine_subpixel(img: GrayImage, p, half_window: int = 5) -> np.ndarray:
    """Move ``p`` to the point where window gradients are orthogonal to (q - p).

    Solves sum_q w(q) g(q) g(q)^T (q - c) = 0 for c, iterating with the window
    recentred on each new estimate. The result never lies farther than
    ``half_window`` from the start.
    """
    if half_window < 1:
        raise ParameterError("half_window must be >= 1")
    gx, gy = _refine_gradients(img.data)
    return _refine(gx, gy, p, half_window)


# --------------------------------------------------------------- candidates


def _local_maxima(resp: np.ndarray, radius: int, floor: float) -> np.ndarray:
    h, w = resp.shape
    p = np.pad(resp, radius, mode="constant", constant_values=-np.inf)
    peak = resp > floor
    for dy in range(-radius, radius + 1):
        for dx in range(-radius, radius + 1):
            if dx == 0 and dy == 0:
                continue
            other = p[radius + dy : radius + dy + h, radius + dx : radius + dx + w]
            # strict on one half of the neighbourhood so plateaus keep one pixel
            peak &= resp > other if (dy, dx) < (0, 0) else resp >= other
    ys, xs = np.nonzero(peak)
    return np.column_stack([xs + 0.5, ys + 0.5])


def _is_x_junction(data: np.ndarray, p: np.ndarray, radius: float, samples: int = 32) -> bool:
    """Four alternating sectors on a circle around ``p``; L and T corners show two or three."""
    t = 2 * math.pi * np.arange(samples) / samples
    ring = bilinear(data, p[0] + radius * np.cos(t), p[1] + radius * np.sin(t), outside=np.nan)
    if np.isnan(ring).any():
        return False
    lo, hi = ring.min(), ring.max()
    if hi - lo < 20:
        return False
    s = ring > (lo + hi) / 2
    changes = np.nonzero(s != np.roll(s, 1))[0]
    if len(changes) != 4:
        return False
    runs = np.diff(np.append(changes, changes[0] + samples))
    return bool(runs.min() >= samples // 16)


# --------------------------------------------------------------- grid growth


def _pair_neighbours(seed: np.ndarray, nbrs: np.ndarray):
    """Split four neighbour vectors into two roughly opposite pairs."""
    v = nbrs - seed
    for a, b, c, d in ((0, 1, 2, 3), (0, 2, 1, 3), (0, 3, 1, 2)):
        if _opposite(v[a], v[b]) and _opposite(v[c], v[d]):
            return (a, b), (c, d)
    return None


def _opposite(u: np.ndarray, v: np.ndarray) -> bool:
    nu, nv = math.hypot(*u), math.hypot(*v)
    return float(u @ v) < -0.8 * nu * nv and 0.6 < nu / nv < 1.67


def _grow(pts: np.ndarray, seed: int, max_cells: int) -> dict[tuple[int, int], int] | None:
    d = np.hypot(*(pts - pts[seed]).T)
    order = np.argsort(d)
    nearest = order[1:5]
    if len(nearest) < 4:
        return None
    pairs = _pair_neighbours(pts[seed], pts[nearest])
    if pairs is None:
        return None
    (a, b), (c, e) = pairs
    grid = {
        (0, 0): seed,
        (1, 0): int(nearest[a]),
        (-1, 0): int(nearest[b]),
        (0, 1): int(nearest[c]),
        (0, -1): int(nearest[e]),
    }
    used = set(grid.values())
    while True:
        src = np.array(list(grid.keys()), dtype=np.float64)
        dst = pts[list(grid.values())]
        H = fit_homography(src, dst)
        frontier = sorted(
            {
                (i + di, j + dj)
                for i, j in grid
                for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1))
                if (i + di, j + dj) not in grid
            }
        )
        added = False
        for cell in frontier:
            pred = H.map(np.array([cell], dtype=np.float64))[0]
            pitch = min(
                math.hypot(*(H.map(np.array([[cell[0] + 1.0, cell[1]]]))[0] - pred)),
                math.hypot(*(H.map(np.array([[cell[0], cell[1] + 1.0]]))[0] - pred)),
            )
            dist = np.hypot(*(pts - pred).T)
            for k in np.argsort(dist)[:3]:
                if dist[k] > 0.3 * pitch:
                    break
                if int(k) not in used:
                    grid[cell] = int(k)
                    used.add(int(k))
                    added = True
                    break
        if not added or len(grid) > max_cells:
            return grid


def _order(grid: dict, pts: np.ndarray, spec: BoardSpec) -> np.ndarray | None:
    cells = np.array(list(grid.keys()))
    i0, j0 = cells.min(axis=0)
    ni, nj = cells.max(axis=0) - (i0, j0) + 1
    W, H = spec.board_width, spec.board_height
    if len(grid) != ni * nj or (ni, nj) not in ((W, H), (H, W)):
        return None
    table = np.zeros((nj, ni), dtype=np.int64)  # [j, i]
    for (i, j), k in grid.items():
        table[j - j0, i - i0] = k
    if (ni, nj) != (W, H) or (W == H and _axis_is_vertical(table, pts)):
        table = table.T
    # rows run left to right, successive rows go down the image
    row_dir = pts[table[:, -1]].mean(axis=0) - pts[table[:, 0]].mean(axis=0)
    if row_dir[0] < 0:
        table = table[:, ::-1]
    col_dir = pts[table[-1, :]].mean(axis=0) - pts[table[0, :]].mean(axis=0)
    if col_dir[1] < 0:
        table = table[::-1, :]
    return table.ravel()


def _axis_is_vertical(table: np.ndarray, pts: np.ndarray) -> bool:
    d = pts[table[:, -1]].mean(axis=0) - pts[table[:, 0]].mean(axis=0)
    return abs(d[1]) > abs(d[0])


def find_chessboard_corners(
    img: GrayImage,
    spec: BoardSpec,
    sigma: float = 1.0,
    half_window: int = 5,
    max_seeds: int = 20,
) -> CornerGrid:
    """All inner corners of a single visible board, row-major, sub-pixel refined."""
    resp = corner_response(img, sigma)
    peak = float(resp.max())
    if peak <= 0:
        raise NotFoundError("no corner structure in the image")
    cands = _local_maxima(resp, 2, 0.05 * peak)
    gx, gy = _refine_gradients(img.data)
    refined: list[np.ndarray] = []
    strength: list[float] = []
    order = np.argsort(-resp[(cands[:, 1] - 0.5).astype(int), (cands[:, 0] - 0.5).astype(int)], kind="stable")
    for p in cands[order]:
        if not _is_x_junction(img.data, p, 4.0):
            continue
        try:
            q = _refine(gx, gy, p, half_window)
        except (NoStructureError, ParameterError):
            continue
        if any(math.hypot(*(q - r)) < 2.0 for r in refined):
            continue
        refined.append(q)
        strength.append(float(resp[int(p[1]), int(p[0])]))
    if len(refined) < spec.count:
        raise NotFoundError(f"found {len(refined)} corner candidates, need {spec.count}")
    pts = np.array(refined)
    for seed in range(min(max_seeds, len(pts))):
        grid = _grow(pts, seed, spec.count)
        if grid is None or len(grid) != spec.count:
            continue
        idx = _order(grid, pts, spec)
        if idx is not None:
            return CornerGrid(pts[idx], np.array(strength)[idx])
    raise NotFoundError("could not assemble a complete corner grid")


def outer_corner_indices(spec: BoardSpec) -> tuple[int, int, int, int]:
    W, H = spec.board_width, spec.board_height
    return 0, W - 1, (H - 1) * W, (H - 1) * W + W - 1


def outer_corners(grid: CornerGrid, spec: BoardSpec) -> np.ndarray:
    """The four board-edge inner corners, by row-major index."""
    return grid.corners[list(outer_corner_indices(spec))]
