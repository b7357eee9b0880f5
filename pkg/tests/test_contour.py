from collections import deque

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from markerfind.contour import (
    Contour,
    approx_polygon,
    find_quad_candidates,
    order_corners,
    signed_area,
    trace_contours,
)
from markerfind.errors import DegenerateError, ParameterError
from markerfind.image_core import BinaryImage

N8 = [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)]
N4 = [(-1, 0), (1, 0), (0, -1), (0, 1)]


def flood_labels(mask: np.ndarray, value: int, nbrs) -> tuple[np.ndarray, int]:
    h, w = mask.shape
    lab = np.zeros((h, w), dtype=np.int64)
    n = 0
    for y in range(h):
        for x in range(w):
            if mask[y, x] != value or lab[y, x]:
                continue
            n += 1
            lab[y, x] = n
            q = deque([(y, x)])
            while q:
                cy, cx = q.popleft()
                for dy, dx in nbrs:
                    ny, nx = cy + dy, cx + dx
                    if 0 <= ny < h and 0 <= nx < w and mask[ny, nx] == value and not lab[ny, nx]:
                        lab[ny, nx] = n
                        q.append((ny, nx))
    return lab, n


def oracle(mask: np.ndarray):
    """Components (8-conn) and holes (4-conn background not reaching the frame)."""
    padded = np.pad(mask, 1)
    comp, ncomp = flood_labels(padded, 1, N8)
    bg, nbg = flood_labels(padded, 0, N4)
    outside = bg[0, 0]
    holes = {}
    for lbl in range(1, nbg + 1):
        if lbl == outside:
            continue
        ys, xs = np.nonzero(bg == lbl)
        owner = set()
        for y, x in zip(ys, xs):
            for dy, dx in N4:
                c = comp[y + dy, x + dx]
                if c:
                    owner.add(int(c))
        holes[lbl] = owner
    return comp[1:-1, 1:-1], ncomp, holes


def check_closed_8_connected(c: Contour):
    p = c.points
    if len(p) == 1:
        return
    nxt = np.roll(p, -1, axis=0)
    step = np.abs(nxt - p).max(axis=1)
    assert np.all(step == 1), "consecutive points must be 8-neighbours"


def test_empty_mask():
    assert len(trace_contours(BinaryImage(np.zeros((8, 8), np.uint8)))) == 0


def test_filled_square_has_one_outer():
    m = np.zeros((20, 20), np.uint8)
    m[5:15, 5:15] = 1
    cs = trace_contours(BinaryImage(m))
    assert len(cs) == 1 and cs.contours[0].is_outer and cs.children == {}


def test_square_with_hole():
    m = np.zeros((20, 20), np.uint8)
    m[4:16, 4:16] = 1
    m[8:12, 8:12] = 0
    cs = trace_contours(BinaryImage(m))
    comp, ncomp, holes = oracle(m)
    assert ncomp == 1 and len(holes) == 1
    assert [c.is_outer for c in cs.contours] == [True, False]
    assert cs.contours[1].parent == 0
    assert cs.children == {0: [1]}


def test_invert_uses_zero_as_foreground():
    m = np.ones((10, 10), np.uint8)
    m[3:7, 3:7] = 0
    cs = trace_contours(BinaryImage(m), invert=True)
    assert len(cs) == 1
    assert set(map(tuple, cs.contours[0].points.tolist())) == {
        (x, y) for x in range(3, 7) for y in range(3, 7) if x in (3, 6) or y in (3, 6)
    }


def test_nested_component_promoted_to_top_level():
    m = np.zeros((30, 30), np.uint8)
    m[2:28, 2:28] = 1
    m[6:24, 6:24] = 0
    m[10:20, 10:20] = 1  # island inside the hole
    m[13:17, 13:17] = 0  # hole in the island
    cs = trace_contours(BinaryImage(m))
    outers = [i for i, c in enumerate(cs.contours) if c.is_outer]
    assert len(outers) == 2
    assert all(cs.contours[i].parent is None for i in outers)
    assert sorted(len(v) for v in cs.children.values()) == [1, 1]
    for parent, kids in cs.children.items():
        assert cs.contours[parent].is_outer
        assert all(not cs.contours[k].is_outer for k in kids)


@settings(max_examples=60, deadline=None)
@given(
    st.integers(1, 32),
    st.integers(1, 32),
    st.floats(0.2, 0.8),
    st.integers(0, 2**32 - 1),
)
def test_counts_and_parents_match_flood_fill(w, h, density, seed):
    rng = np.random.default_rng(seed)
    m = (rng.random((h, w)) < density).astype(np.uint8)
    cs = trace_contours(BinaryImage(m))
    comp, ncomp, holes = oracle(m)
    outers = [c for c in cs.contours if c.is_outer]
    inners = [c for c in cs.contours if not c.is_outer]
    assert len(outers) == ncomp
    assert len(inners) == len(holes)
    # one outer border per component, each hole parented to its component
    assert sorted(int(comp[c.points[0, 1], c.points[0, 0]]) for c in outers) == list(range(1, ncomp + 1))
    for c in inners:
        own = int(comp[c.points[0, 1], c.points[0, 0]])
        parent = cs.contours[c.parent]
        assert parent.is_outer
        assert int(comp[parent.points[0, 1], parent.points[0, 0]]) == own
        assert np.all(comp[c.points[:, 1], c.points[:, 0]] == own)
    for c in cs.contours:
        check_closed_8_connected(c)
    assert all(c.parent is None for c in outers)


# ------------------------------------------------------------ approx_polygon


def square_contour(size=20, x0=5, y0=5) -> Contour:
    m = np.zeros((size + 2 * y0, size + 2 * x0), np.uint8)
    m[y0 : y0 + size, x0 : x0 + size] = 1
    return trace_contours(BinaryImage(m)).contours[0]


def ring_distance(points: np.ndarray, poly: np.ndarray) -> np.ndarray:
    best = np.full(len(points), np.inf)
    for k in range(len(poly)):
        a, b = poly[k], poly[(k + 1) % len(poly)]
        ab = b - a
        t = np.clip(((points - a) @ ab) / (ab @ ab), 0, 1)
        d = np.hypot(*(points - (a + t[:, None] * ab)).T)
        best = np.minimum(best, d)
    return best


def test_square_reduces_to_corners():
    c = square_contour()
    poly = approx_polygon(c, 3)
    assert poly.total == 4
    assert {tuple(v) for v in poly.vertices.tolist()} == {(5, 5), (24, 5), (24, 24), (5, 24)}


def test_circle_does_not_reduce_to_quad():
    yy, xx = np.mgrid[0:80, 0:80]
    m = ((xx - 40) ** 2 + (yy - 40) ** 2 <= 30**2).astype(np.uint8)
    c = trace_contours(BinaryImage(m)).contours[0]
    poly = approx_polygon(c, 0.5)
    assert poly.total > 8
    assert ring_distance(c.points.astype(float), poly.vertices).max() <= 0.5 + 1e-9


def test_huge_epsilon_is_degenerate():
    with pytest.raises(DegenerateError):
        approx_polygon(square_contour(), 100.0)
    with pytest.raises(ParameterError):
        approx_polygon(square_contour(), 0.0)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.5, 6.0))
def test_rdp_error_bound_and_subset(seed, eps):
    rng = np.random.default_rng(seed)
    m = np.zeros((40, 40), np.uint8)
    for _ in range(3):
        x0, y0 = rng.integers(2, 25, 2)
        m[y0 : y0 + rng.integers(4, 14), x0 : x0 + rng.integers(4, 14)] = 1
    cs = trace_contours(BinaryImage(m))
    for c in cs.contours:
        try:
            poly = approx_polygon(c, eps)
        except DegenerateError:
            continue
        pts = c.points.astype(float)
        assert ring_distance(pts, poly.vertices).max() <= eps + 1e-9
        as_set = {tuple(p) for p in pts.tolist()}
        assert all(tuple(v) in as_set for v in poly.vertices.tolist())


# ------------------------------------------------------------ order_corners


def test_order_corners_canonical_square():
    out = order_corners([(10, 0), (0, 0), (0, 10), (10, 10)])
    assert out.tolist() == [[0, 0], [0, 10], [10, 10], [10, 0]]
    assert order_corners(out).tolist() == out.tolist()


def test_order_corners_degenerate():
    with pytest.raises(DegenerateError):
        order_corners([(0, 0), (1, 1), (2, 2), (0, 5)])
    with pytest.raises(DegenerateError):
        order_corners([(0, 0), (0, 0), (3, 1), (0, 5)])


def test_order_corners_random_convex():
    rng = np.random.default_rng(7)
    for _ in range(100):
        ang = np.sort(rng.uniform(0, 2 * np.pi, 4))
        if np.min(np.diff(np.r_[ang, ang[0] + 2 * np.pi])) < 0.2:
            continue
        r = rng.uniform(5, 50, 4)
        pts = np.c_[r * np.cos(ang), r * np.sin(ang)] + rng.uniform(-100, 100, 2)
        # the radial construction is star-shaped; keep only convex ones
        d = np.roll(pts, -1, 0) - pts
        cr = d[:, 0] * np.roll(d[:, 1], -1) - d[:, 1] * np.roll(d[:, 0], -1)
        if not (np.all(cr > 0) or np.all(cr < 0)):
            continue
        shuffled = pts[rng.permutation(4)]
        out = order_corners(shuffled)
        assert signed_area(out) > 0
        lexmin = min(map(tuple, pts.tolist()), key=lambda p: (p[1], p[0]))
        assert tuple(out[0]) == lexmin
        assert sorted(map(tuple, out.tolist())) == sorted(map(tuple, pts.tolist()))
        np.testing.assert_array_equal(order_corners(out), out)


# ------------------------------------------------------------ quad candidates


def mask_with(*shapes, size=(120, 160)) -> np.ndarray:
    m = np.zeros(size, np.uint8)
    for fn in shapes:
        fn(m)
    return m


def square_in_square(x, y, s):
    def draw(m):
        m[y : y + s, x : x + s] = 1
        q = s // 4
        m[y + q : y + s - q, x + q : x + s - q] = 0

    return draw


def test_square_in_square_is_candidate():
    m = mask_with(square_in_square(20, 20, 40))
    cands = find_quad_candidates(trace_contours(BinaryImage(m)))
    assert len(cands) == 1
    c = cands[0]
    np.testing.assert_allclose(c.outer, [[20, 20], [20, 60], [60, 60], [60, 20]], atol=1e-9)
    np.testing.assert_allclose(c.inner, [[30, 30], [30, 50], [50, 50], [50, 30]], atol=1e-9)
    assert c.area == pytest.approx(1600)


def test_triangular_child_rejected():
    def draw(m):
        m[20:60, 20:60] = 1
        for r in range(30, 50):
            m[r, 30 : 30 + (r - 30) + 1] = 0

    cands = find_quad_candidates(trace_contours(BinaryImage(mask_with(draw))))
    assert cands == []


def test_small_outer_rejected_by_min_area():
    m = mask_with(square_in_square(10, 10, 8))
    assert find_quad_candidates(trace_contours(BinaryImage(m)), min_area=100) == []
    assert len(find_quad_candidates(trace_contours(BinaryImage(m)), min_area=40)) == 1


def test_candidate_parameter_checks():
    cs = trace_contours(BinaryImage(np.zeros((4, 4), np.uint8)))
    with pytest.raises(ParameterError):
        find_quad_candidates(cs, epsilon_frac=0.5)
    with pytest.raises(ParameterError):
        find_quad_candidates(cs, min_area=0)


def test_inner_ring_inside_outer_for_rotated_squares():
    yy, xx = np.mgrid[0:200, 0:200].astype(float)
    for deg in (0, 10, 25, 40, 63):
        t = np.deg2rad(deg)
        u = (xx + 0.5 - 100) * np.cos(t) + (yy + 0.5 - 100) * np.sin(t)
        v = -(xx + 0.5 - 100) * np.sin(t) + (yy + 0.5 - 100) * np.cos(t)
        outer = (np.abs(u) <= 40) & (np.abs(v) <= 40)
        inner = (np.abs(u) <= 20) & (np.abs(v) <= 20)
        m = (outer & ~inner).astype(np.uint8)
        cands = find_quad_candidates(trace_contours(BinaryImage(m)))
        assert len(cands) == 1, deg
        c = cands[0]
        # exact corners of the continuous squares
        for ring, half in ((c.outer, 40), (c.inner, 20)):
            truth = np.array([[-half, -half], [-half, half], [half, half], [half, -half]], float)
            rot = np.array([[np.cos(t), -np.sin(t)], [np.sin(t), np.cos(t)]])
            truth = order_corners(truth @ rot.T + 100)
            assert np.abs(ring - truth).max() < 0.6, (deg, ring, truth)
