"""Homographies, projection and planar pose recovery.

Marker-plane points are expressed in marker side lengths: the marker square
spans the unit square with corners (0,0), (0,1), (1,1), (1,0) and z = 0.
Image points use continuous pixel coordinates (pixel centres at +0.5).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    BehindCameraError,
    DegenerateError,
    InfinityError,
    NumericalError,
    ParameterError,
)
from .image_core import GrayImage

__all__ = [
    "UNIT_SQUARE",
    "Homography",
    "Pose",
    "CameraIntrinsics",
    "solve_linear",
    "estimate_homography",
    "fit_homography",
    "apply_homography",
    "warp_inverse",
    "project",
    "pose_from_homography",
    "homography_from_pose",
    "nearest_rotation",
    "rotation_from_euler",
]

UNIT_SQUARE = np.array([[0.0, 0.0], [0.0, 1.0], [1.0, 1.0], [1.0, 0.0]])


@dataclass(frozen=True, eq=False)
class Homography:
    """Projective map, normalised to m[2,2] = 1 (or unit Frobenius norm if m[2,2] = 0)."""

    m: np.ndarray

    def __post_init__(self) -> None:
        m = np.array(self.m, dtype=np.float64)
        if m.shape != (3, 3) or not np.all(np.isfinite(m)):
            raise ParameterError(f"homography must be a finite 3x3 matrix, got {m.shape}")
        if m[2, 2] != 0.0:
            m = m / m[2, 2]
        else:
            m = m / np.linalg.norm(m)
        if abs(np.linalg.det(m)) <= 1e-12:
            raise NumericalError("singular homography")
        m.flags.writeable = False
        object.__setattr__(self, "m", m)

    @classmethod
    def identity(cls) -> "Homography":
        return cls(np.eye(3))

    def inverse(self) -> "Homography":
        return Homography(np.linalg.inv(self.m))

    def __matmul__(self, other: "Homography") -> "Homography":
        return Homography(self.m @ other.m)

    def map(self, pts) -> np.ndarray:
        """Vectorised :func:`apply_homography` for an (n, 2) array."""
        p = np.asarray(pts, dtype=np.float64).reshape(-1, 2)
        q = p @ self.m[:, :2].T + self.m[:, 2]
        w = q[:, 2]
        if np.any(np.abs(w) <= 1e-12):
            raise InfinityError("point maps to the line at infinity")
        return q[:, :2] / w[:, None]

    def tolist(self) -> list[list[float]]:
        return self.m.tolist()


@dataclass(frozen=True, eq=False)
class Pose:
    """Rigid marker-to-camera transform: x_c = R x_m + T."""

    R: np.ndarray
    T: np.ndarray

    def __post_init__(self) -> None:
        R = np.array(self.R, dtype=np.float64).reshape(3, 3)
        T = np.array(self.T, dtype=np.float64).reshape(3)
        R.flags.writeable = False
        T.flags.writeable = False
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "T", T)

    def matrix(self) -> np.ndarray:
        """The 4x4 homogeneous [R | T] block with a [0 0 0 1] bottom row."""
        out = np.eye(4)
        out[:3, :3] = self.R
        out[:3, 3] = self.T
        return out

    def to_dict(self) -> dict:
        return {"R": self.R.tolist(), "T": self.T.tolist()}


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole calibration (focal terms, principal point, skew)."""

    fx: float
    fy: float
    cx: float
    cy: float
    skew: float = 0.0

    def __post_init__(self) -> None:
        vals = (self.fx, self.fy, self.cx, self.cy, self.skew)
        if not all(math.isfinite(v) for v in vals):
            raise ParameterError("intrinsics must be finite")
        if self.fx <= 0 or self.fy <= 0:
            raise ParameterError("focal terms must be positive")

    @property
    def K(self) -> np.ndarray:
        return np.array(
            [[self.fx, self.skew, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]]
        )

    @property
    def C(self) -> np.ndarray:
        """The informative 3x4 block of the 4x4 calibration matrix."""
        return np.hstack([self.K, np.zeros((3, 1))])

    @classmethod
    def from_dict(cls, d: dict) -> "CameraIntrinsics":
        try:
            return cls(
                float(d["fx"]),
                float(d["fy"]),
                float(d["cx"]),
                float(d["cy"]),
                float(d.get("skew", 0.0)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ParameterError(f"bad intrinsics record: {exc}") from exc

    @classmethod
    def from_json(cls, path: str | Path) -> "CameraIntrinsics":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def to_dict(self) -> dict:
        return {"fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy, "skew": self.skew}


# --------------------------------------------------------------------- solving


def solve_linear(A, b) -> np.ndarray:
    """Gaussian elimination with partial pivoting for a square system."""
    M = np.array(A, dtype=np.float64)
    x = np.array(b, dtype=np.float64).reshape(-1)
    n = M.shape[0]
    if M.shape != (n, n) or x.shape[0] != n:
        raise ParameterError("solve_linear needs a square system")
    scale = np.abs(M).max() or 1.0
    for col in range(n):
        piv = col + int(np.argmax(np.abs(M[col:, col])))
        if abs(M[piv, col]) <= 1e-12 * scale:
            raise NumericalError("singular linear system")
        if piv != col:
            M[[col, piv]] = M[[piv, col]]
            x[[col, piv]] = x[[piv, col]]
        f = M[col + 1 :, col] / M[col, col]
        M[col + 1 :, col:] -= f[:, None] * M[col, col:]
        x[col + 1 :] -= f * x[col]
    out = np.empty(n)
    for row in range(n - 1, -1, -1):
        out[row] = (x[row] - M[row, row + 1 :] @ out[row + 1 :]) / M[row, row]
    return out


def _normaliser(p: np.ndarray) -> np.ndarray:
    c = p.mean(axis=0)
    d = np.hypot(*(p - c).T).mean()
    if d <= 0:
        raise DegenerateError("all points coincide")
    s = math.sqrt(2.0) / d
    return np.array([[s, 0.0, -s * c[0]], [0.0, s, -s * c[1]], [0.0, 0.0, 1.0]])


def _apply(T: np.ndarray, p: np.ndarray) -> np.ndarray:
    return p @ T[:2, :2].T + T[:2, 2]


def _check_quad(p: np.ndarray, what: str) -> None:
    for i, j, k in ((0, 1, 2), (0, 1, 3), (0, 2, 3), (1, 2, 3)):
        a, b, c = p[i], p[j], p[k]
        cross = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
        # points are normalised to mean radius sqrt(2), so this is scale-free
        if abs(cross) < 1e-8:
            raise DegenerateError(f"{what} points {i},{j},{k} are collinear or coincide")


def estimate_homography(src, dst) -> Homography:
    """Exact homography through four correspondences (normalised 8x8 DLT)."""
    s = np.asarray(src, dtype=np.float64).reshape(-1, 2)
    d = np.asarray(dst, dtype=np.float64).reshape(-1, 2)
    if s.shape != (4, 2) or d.shape != (4, 2):
        raise ParameterError("estimate_homography needs exactly 4 correspondences")
    Ts, Td = _normaliser(s), _normaliser(d)
    sn, dn = _apply(Ts, s), _apply(Td, d)
    _check_quad(sn, "source")
    _check_quad(dn, "destination")
    A = np.zeros((8, 8))
    b = np.zeros(8)
    for i, ((x, y), (u, v)) in enumerate(zip(sn, dn)):
        A[2 * i] = [x, y, 1, 0, 0, 0, -u * x, -u * y]
        A[2 * i + 1] = [0, 0, 0, x, y, 1, -v * x, -v * y]
        b[2 * i] = u
        b[2 * i + 1] = v
    h = solve_linear(A, b)
    Hn = np.append(h, 1.0).reshape(3, 3)
    return Homography(np.linalg.inv(Td) @ Hn @ Ts)


def fit_homography(src, dst) -> Homography:
    """Least-squares homography for n >= 4 correspondences (normalised DLT, SVD)."""
    s = np.asarray(src, dtype=np.float64).reshape(-1, 2)
    d = np.asarray(dst, dtype=np.float64).reshape(-1, 2)
    if len(s) != len(d) or len(s) < 4:
        raise ParameterError("fit_homography needs >= 4 matching points")
    if len(s) == 4:
        return estimate_homography(s, d)
    Ts, Td = _normaliser(s), _normaliser(d)
    sn, dn = _apply(Ts, s), _apply(Td, d)
    n = len(s)
    A = np.zeros((2 * n, 9))
    x, y = sn[:, 0], sn[:, 1]
    u, v = dn[:, 0], dn[:, 1]
    A[0::2, 0], A[0::2, 1], A[0::2, 2] = x, y, 1
    A[0::2, 6], A[0::2, 7], A[0::2, 8] = -u * x, -u * y, -u
    A[1::2, 3], A[1::2, 4], A[1::2, 5] = x, y, 1
    A[1::2, 6], A[1::2, 7], A[1::2, 8] = -v * x, -v * y, -v
    _, sv, vt = np.linalg.svd(A)
    if sv[-2] <= 1e-12 * sv[0]:
        raise DegenerateError("correspondences do not determine a homography")
    Hn = vt[-1].reshape(3, 3)
    return Homography(np.linalg.inv(Td) @ Hn @ Ts)


def apply_homography(H: Homography, p) -> np.ndarray:
    x, y = float(p[0]), float(p[1])
    m = H.m
    w = m[2, 0] * x + m[2, 1] * y + m[2, 2]
    if abs(w) <= 1e-12:
        raise InfinityError(f"point ({x}, {y}) maps to the line at infinity")
    return np.array(
        [(m[0, 0] * x + m[0, 1] * y + m[0, 2]) / w, (m[1, 0] * x + m[1, 1] * y + m[1, 2]) / w]
    )


# ----------------------------------------------------------------- resampling


def bilinear(data: np.ndarray, u: np.ndarray, v: np.ndarray, outside: float = 0.0) -> np.ndarray:
    """Sample ``data`` at continuous coordinates (pixel centres at +0.5)."""
    h, w = data.shape
    fx = np.asarray(u, dtype=np.float64) - 0.5
    fy = np.asarray(v, dtype=np.float64) - 0.5
    valid = (fx >= 0) & (fx <= w - 1) & (fy >= 0) & (fy <= h - 1)
    fx = np.where(valid, fx, 0.0)
    fy = np.where(valid, fy, 0.0)
    x0 = np.minimum(np.floor(fx).astype(np.int64), max(w - 2, 0))
    y0 = np.minimum(np.floor(fy).astype(np.int64), max(h - 2, 0))
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    ax = fx - x0
    ay = fy - y0
    f = np.float64
    top = data[y0, x0].astype(f) * (1 - ax) + data[y0, x1].astype(f) * ax
    bot = data[y1, x0].astype(f) * (1 - ax) + data[y1, x1].astype(f) * ax
    out = top * (1 - ay) + bot * ay
    return np.where(valid, out, outside)


def warp_inverse(img: GrayImage, H: Homography, out_w: int, out_h: int) -> GrayImage:
    """Resample ``img`` onto an out_w x out_h grid through H (output -> image)."""
    if out_w < 1 or out_h < 1:
        raise ParameterError("output size must be positive")
    if abs(np.linalg.det(H.m)) <= 1e-12:
        raise NumericalError("homography is not invertible")
    ys, xs = np.mgrid[0:out_h, 0:out_w].astype(np.float64)
    pts = np.stack([xs.ravel() + 0.5, ys.ravel() + 0.5, np.ones(xs.size)])
    q = H.m @ pts
    w = q[2]
    ok = np.abs(w) > 1e-12
    w = np.where(ok, w, 1.0)
    u = np.where(ok, q[0] / w, -1.0)
    v = np.where(ok, q[1] / w, -1.0)
    vals = bilinear(img.data, u, v, outside=0.0)
    return GrayImage(np.floor(vals + 0.5).clip(0, 255).astype(np.uint8).reshape(out_h, out_w))


# ----------------------------------------------------------------------- pose


def project(K: CameraIntrinsics, pose: Pose, p) -> np.ndarray:
    """Pinhole projection of a marker-plane point into the image."""
    X = pose.R @ np.asarray(p, dtype=np.float64).reshape(3) + pose.T
    if X[2] <= 0:
        raise BehindCameraError(f"point has depth {X[2]:.6g}")
    u = K.K @ X
    return u[:2] / u[2]


def homography_from_pose(K: CameraIntrinsics, pose: Pose) -> Homography:
    """Marker plane (z = 0) to image: K [r1 r2 T]."""
    return Homography(K.K @ np.column_stack([pose.R[:, 0], pose.R[:, 1], pose.T]))


def nearest_rotation(M, tol: float = 1e-15, max_iter: int = 50) -> np.ndarray:
    """Orthogonal polar factor by Newton averaging of M and M^-T."""
    X = np.array(M, dtype=np.float64)
    if np.linalg.det(X) <= 0:
        raise DegenerateError("matrix has no proper rotation polar factor")
    for _ in range(max_iter):
        try:
            Xi = np.linalg.inv(X).T
        except np.linalg.LinAlgError as exc:
            raise NumericalError("polar iteration hit a singular matrix") from exc
        nxt = 0.5 * (X + Xi)
        if np.abs(nxt - X).max() <= tol:
            return nxt
        X = nxt
    return X


def pose_from_homography(H: Homography, K: CameraIntrinsics) -> Pose:
    """Decompose a marker-plane homography into rotation and translation."""
    B = np.linalg.inv(K.K) @ H.m
    b1, b2, b3 = B[:, 0], B[:, 1], B[:, 2]
    n1, n2 = np.linalg.norm(b1), np.linalg.norm(b2)
    if n1 < 1e-9 or n2 < 1e-9:
        raise DegenerateError("homography columns vanish after removing intrinsics")
    lam = 2.0 / (n1 + n2)
    if b3[2] < 0:
        lam = -lam
    r1 = lam * b1
    r2 = lam * b2
    r3 = np.cross(r1, r2)
    R = nearest_rotation(np.column_stack([r1, r2, r3]))
    return Pose(R, lam * b3)


def rotation_from_euler(rx: float, ry: float, rz: float) -> np.ndarray:
    """R = Rz @ Ry @ Rx for angles in radians."""
    cx, sx = math.cos(rx), math.sin(rx)
    cy, sy = math.cos(ry), math.sin(ry)
    cz, sz = math.cos(rz), math.sin(rz)
    Rx = np.array([[1, 0, 0], [0, cx, -sx], [0, sx, cx]])
    Ry = np.array([[cy, 0, sy], [0, 1, 0], [-sy, 0, cy]])
    Rz = np.array([[cz, -sz, 0], [sz, cz, 0], [0, 0, 1]])
    return Rz @ Ry @ Rx
