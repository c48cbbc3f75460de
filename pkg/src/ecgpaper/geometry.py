"""Planar projective geometry: quads, homographies, DLT estimation, warping.

Coordinates are image-style: x right, y down. A quad is "clockwise" when its
vertices wind clockwise on screen, which with y pointing down corresponds to a
positive shoelace sum.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateQuad, SingularHomography, SingularSystem

CORNER_NAMES = ("TL", "TR", "BR", "BL")


def signed_area(points: np.ndarray) -> float:
    """Shoelace sum of a closed polygon; positive for clockwise screen winding."""
    pts = np.asarray(points, dtype=float)
    x, y = pts[:, 0], pts[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def _is_convex_clockwise(pts: np.ndarray) -> bool:
    # all consecutive edge cross products must be positive (y-down clockwise)
    d = np.roll(pts, -1, axis=0) - pts
    cross = d[:, 0] * np.roll(d, -1, axis=0)[:, 1] - d[:, 1] * np.roll(d, -1, axis=0)[:, 0]
    return bool(np.all(cross > 0))


@dataclass(frozen=True)
class Quad:
    """Four corner points in TL,TR,BR,BL order, sub-pixel coordinates."""

    points: np.ndarray  # (4, 2) float64

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.shape != (4, 2):
            raise ValueError(f"quad needs shape (4, 2), got {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise DegenerateQuad("quad has non-finite coordinates")
        if not _is_convex_clockwise(pts):
            raise DegenerateQuad("quad is not convex in clockwise order")
        object.__setattr__(self, "points", pts)

    @property
    def area(self) -> float:
        return signed_area(self.points)

    def as_list(self) -> list[list[float]]:
        return [[float(x), float(y)] for x, y in self.points]

    def __eq__(self, other) -> bool:
        return isinstance(other, Quad) and np.array_equal(self.points, other.points)

    def allclose(self, other: "Quad", atol: float = 1e-9) -> bool:
        return np.allclose(self.points, other.points, atol=atol)


def rect_quad(width: int, height: int) -> Quad:
    """Corner quad of a width x height raster: (0,0),(W-1,0),(W-1,H-1),(0,H-1)."""
    w, h = float(width - 1), float(height - 1)
    return Quad(np.array([[0.0, 0.0], [w, 0.0], [w, h], [0.0, h]]))


def order_corners(points: np.ndarray) -> Quad:
    """Order four points TL,TR,BR,BL by angular sort around their centroid.

    The cycle starts at the vertex with the smallest x+y (top-left heuristic).
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.shape != (4, 2):
        raise ValueError("order_corners expects exactly 4 points")
    c = pts.mean(axis=0)
    ang = np.arctan2(pts[:, 1] - c[1], pts[:, 0] - c[0])
    pts = pts[np.argsort(ang)]
    start = int(np.argmin(pts.sum(axis=1)))
    return Quad(np.roll(pts, -start, axis=0))


@dataclass(frozen=True)
class Homography:
    """3x3 projective transform, normalised so h[2][2] == 1 when nonzero."""

    matrix: np.ndarray = field(default_factory=lambda: np.eye(3))

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.float64)
        if m.shape != (3, 3):
            raise ValueError(f"homography needs shape (3, 3), got {m.shape}")
        if abs(m[2, 2]) > 1e-12:
            m = m / m[2, 2]
        if abs(np.linalg.det(m)) <= 1e-12:
            raise SingularHomography("homography is singular")
        object.__setattr__(self, "matrix", m)

    @classmethod
    def identity(cls) -> "Homography":
        return cls(np.eye(3))

    @classmethod
    def translation(cls, dx: float, dy: float) -> "Homography":
        m = np.eye(3)
        m[0, 2], m[1, 2] = dx, dy
        return cls(m)

    @classmethod
    def rotation_about(cls, angle_rad: float, cx: float, cy: float) -> "Homography":
        c, s = np.cos(angle_rad), np.sin(angle_rad)
        rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
        t_fwd = np.array([[1.0, 0.0, cx], [0.0, 1.0, cy], [0.0, 0.0, 1.0]])
        t_back = np.array([[1.0, 0.0, -cx], [0.0, 1.0, -cy], [0.0, 0.0, 1.0]])
        return cls(t_fwd @ rot @ t_back)

    def __eq__(self, other) -> bool:
        return isinstance(other, Homography) and np.array_equal(self.matrix, other.matrix)

    def inverse(self) -> "Homography":
        return Homography(np.linalg.inv(self.matrix))

    def compose(self, inner: "Homography") -> "Homography":
        """Transform equal to applying `inner` first, then self."""
        return Homography(self.matrix @ inner.matrix)

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Apply to an (N, 2) array of points; exact projective action."""
        pts = np.asarray(points, dtype=np.float64)
        ones = np.ones((pts.shape[0], 1))
        hom = (self.matrix @ np.hstack([pts, ones]).T).T
        return hom[:, :2] / hom[:, 2:3]

    def apply_quad(self, quad: Quad) -> Quad:
        return Quad(self.apply(quad.points))

    def is_identity(self) -> bool:
        return np.array_equal(self.matrix, np.eye(3))

    def as_list(self) -> list[list[float]]:
        return [[float(v) for v in row] for row in self.matrix]


def _normalisation(pts: np.ndarray) -> np.ndarray:
    """Hartley similarity: centroid to origin, mean distance sqrt(2)."""
    c = pts.mean(axis=0)
    d = np.sqrt(((pts - c) ** 2).sum(axis=1)).mean()
    s = np.sqrt(2.0) / d if d > 0 else 1.0
    return np.array([[s, 0.0, -s * c[0]], [0.0, s, -s * c[1]], [0.0, 0.0, 1.0]])


def solve_homography(src, dst) -> Homography:
    """Exact 4-point DLT with Hartley-style coordinate normalisation.

    `src` and `dst` are Quads or (4, 2) point arrays; the result maps src
    vertices onto dst vertices up to floating-point conditioning.
    """
    s = src.points if isinstance(src, Quad) else np.asarray(src, dtype=np.float64)
    d = dst.points if isinstance(dst, Quad) else np.asarray(dst, dtype=np.float64)
    if s.shape != (4, 2) or d.shape != (4, 2):
        raise ValueError("solve_homography expects 4 correspondences")

    t_src, t_dst = _normalisation(s), _normalisation(d)
    sn = (t_src @ np.hstack([s, np.ones((4, 1))]).T).T
    dn = (t_dst @ np.hstack([d, np.ones((4, 1))]).T).T

    a = np.zeros((8, 9))
    for i in range(4):
        x, y, _ = sn[i]
        u, v, _ = dn[i]
        a[2 * i] = [0, 0, 0, -x, -y, -1, v * x, v * y, v]
        a[2 * i + 1] = [x, y, 1, 0, 0, 0, -u * x, -u * y, -u]

    _, sv, vt = np.linalg.svd(a)
    if sv[-2] < 1e-10:  # two-dimensional null space: correspondences degenerate
        raise SingularSystem("correspondences do not determine a homography")
    h = vt[-1].reshape(3, 3)
    h = np.linalg.inv(t_dst) @ h @ t_src
    if abs(h[2, 2]) < 1e-12 or abs(np.linalg.det(h)) < 1e-12:
        raise SingularSystem("recovered homography is singular")
    return Homography(h)


def warp_array(
    pixels: np.ndarray,
    h: Homography,
    canvas: tuple[int, int],
    fill: tuple[int, int, int] = (0, 0, 0),
) -> np.ndarray:
    """Warp an (H, W, 3) uint8 raster by `h` onto a canvas of (width, height).

    Inverse-mapped bilinear resampling: output pixel p takes the value of the
    input at h^-1(p). Output pixels mapping outside the input get `fill`.
    """
    out_w, out_h = canvas
    if out_w <= 0 or out_h <= 0:
        raise ValueError("canvas dimensions must be positive")
    src_h, src_w = pixels.shape[:2]
    inv = h.inverse().matrix

    xs, ys = np.meshgrid(np.arange(out_w, dtype=np.float64),
                         np.arange(out_h, dtype=np.float64))
    with np.errstate(divide="ignore", invalid="ignore"):
        denom = inv[2, 0] * xs + inv[2, 1] * ys + inv[2, 2]
        sx = (inv[0, 0] * xs + inv[0, 1] * ys + inv[0, 2]) / denom
        sy = (inv[1, 0] * xs + inv[1, 1] * ys + inv[1, 2]) / denom

    # the epsilon keeps boundary pixels valid when the inverse projection
    # lands a rounding error outside the source frame
    eps = 1e-6
    valid = np.isfinite(sx) & np.isfinite(sy)
    valid &= (sx >= -eps) & (sx <= src_w - 1 + eps)
    valid &= (sy >= -eps) & (sy <= src_h - 1 + eps)
    sx = np.where(valid, sx, 0.0)
    sy = np.where(valid, sy, 0.0)
    sx = np.clip(sx, 0, src_w - 1)
    sy = np.clip(sy, 0, src_h - 1)

    x0 = np.floor(sx).astype(np.intp)
    y0 = np.floor(sy).astype(np.intp)
    x1 = np.minimum(x0 + 1, src_w - 1)
    y1 = np.minimum(y0 + 1, src_h - 1)
    wx = (sx - x0)[..., None]
    wy = (sy - y0)[..., None]

    # gather in uint8 and widen during the blend: exact, and in-place ops
    # avoid a full-image float64 copy and several canvas-sized temporaries
    inv_wx = 1 - wx
    top = pixels[y0, x0] * inv_wx
    top += pixels[y0, x1] * wx
    bot = pixels[y1, x0] * inv_wx
    bot += pixels[y1, x1] * wx
    top *= 1 - wy
    bot *= wy
    out = top
    out += bot

    out = np.rint(out).astype(np.uint8)
    out[~valid] = np.asarray(fill, dtype=np.uint8)
    return out
