"""Suzuki-Abe border following, compiled separately from the rest of the
contour code so that editing one does not invalidate the other's JIT cache."""

from __future__ import annotations

import numpy as np

from ._jit import njit

# neighbour offsets, index increases counter-clockwise on screen (row axis down)
_DR = np.array([0, -1, -1, -1, 0, 1, 1, 1], dtype=np.int64)
_DC = np.array([1, 1, 0, -1, -1, -1, 0, 1], dtype=np.int64)


@njit
def _direction(dr, dc):
    for d in range(8):
        if _DR[d] == dr and _DC[d] == dc:
            return d
    return -1


@njit
def follow_borders(f):
    """Suzuki-Abe border following on a zero-framed int32 label image.

    Returns (points[n, 2] as (row, col), starts[k + 1], is_outer[k], parent[k])
    where parent is a border index (-1 for the frame).
    """
    H, W = f.shape
    pts = np.empty((4096, 2), dtype=np.int32)
    npts = 0
    cap = 256
    starts = np.empty(cap + 1, dtype=np.int64)
    outer = np.empty(cap + 2, dtype=np.bool_)
    parent = np.empty(cap + 2, dtype=np.int64)
    # border number 1 is the frame, which behaves like a hole border
    outer[1] = False
    parent[1] = 0
    nbd = 1
    for i in range(1, H - 1):
        lnbd = 1
        for j in range(1, W - 1):
            fij = f[i, j]
            if fij == 0:
                continue
            is_outer = False
            start = False
            i2 = i
            j2 = j
            if fij == 1 and f[i, j - 1] == 0:
                is_outer = True
                start = True
                j2 = j - 1
            elif fij >= 1 and f[i, j + 1] == 0:
                start = True
                j2 = j + 1
                if fij > 1:
                    lnbd = fij
            if start:
                nbd += 1
                k = nbd - 2
                if k + 1 >= cap:
                    cap *= 2
                    s2 = np.empty(cap + 1, dtype=np.int64)
                    s2[: k + 1] = starts[: k + 1]
                    starts = s2
                    o2 = np.empty(cap + 2, dtype=np.bool_)
                    o2[:nbd] = outer[:nbd]
                    outer = o2
                    p2 = np.empty(cap + 2, dtype=np.int64)
                    p2[:nbd] = parent[:nbd]
                    parent = p2
                outer[nbd] = is_outer
                if is_outer == outer[lnbd]:
                    parent[nbd] = parent[lnbd]
                else:
                    parent[nbd] = lnbd
                starts[k] = npts

                d0 = _direction(i2 - i, j2 - j)
                found = -1
                for s in range(8):
                    d = (d0 - s) % 8
                    if f[i + _DR[d], j + _DC[d]] != 0:
                        found = d
                        break
                if npts + 1 >= pts.shape[0]:
                    p3 = np.empty((pts.shape[0] * 2, 2), dtype=np.int32)
                    p3[:npts] = pts[:npts]
                    pts = p3
                pts[npts, 0] = i
                pts[npts, 1] = j
                npts += 1
                if found < 0:
                    f[i, j] = -nbd
                else:
                    i1 = i + _DR[found]
                    j1 = j + _DC[found]
                    i2 = i1
                    j2 = j1
                    i3 = i
                    j3 = j
                    while True:
                        d2 = _direction(i2 - i3, j2 - j3)
                        east_zero = False
                        d4 = d2
                        for s in range(1, 9):
                            d = (d2 + s) % 8
                            if f[i3 + _DR[d], j3 + _DC[d]] != 0:
                                d4 = d
                                break
                            if d == 0:
                                east_zero = True
                        if east_zero:
                            f[i3, j3] = -nbd
                        elif f[i3, j3] == 1:
                            f[i3, j3] = nbd
                        i4 = i3 + _DR[d4]
                        j4 = j3 + _DC[d4]
                        if i4 == i and j4 == j and i3 == i1 and j3 == j1:
                            break
                        if npts + 1 >= pts.shape[0]:
                            p3 = np.empty((pts.shape[0] * 2, 2), dtype=np.int32)
                            p3[:npts] = pts[:npts]
                            pts = p3
                        pts[npts, 0] = i4
                        pts[npts, 1] = j4
                        npts += 1
                        i2 = i3
                        j2 = j3
                        i3 = i4
                        j3 = j4
            if f[i, j] != 1:
                lnbd = abs(f[i, j])
    n = nbd - 1
    starts[n] = npts
    out_outer = outer[2 : nbd + 1].copy()
    out_parent = parent[2 : nbd + 1] - 2
    return pts[:npts], starts[: n + 1].copy(), out_outer, out_parent
