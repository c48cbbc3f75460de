"""Rectify photographed/distorted paper ECGs to a canonical bird's-eye view.

Pipeline: locate the paper region by its colour model, find the four page
corners from the region's convex hull, solve the projective transform onto
the canonical rectangle, warp, and finish with contrast-limited adaptive
histogram equalisation (CLAHE). Every stage is classical and deterministic;
no learned weights.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np
from scipy import ndimage
from scipy.spatial import ConvexHull, QhullError

from .errors import DegenerateQuad, NoPaperFound, TinyImage
from .geometry import (Homography, Quad, order_corners, rect_quad,
                       signed_area, solve_homography, warp_array)
from .render import PaperImage

LUMA_WEIGHTS = (0.299, 0.587, 0.114)  # ITU-R 601


@dataclass(frozen=True)
class RectifyConfig:
    """Canonical geometry, CLAHE settings, and paper-detector thresholds."""

    canonical_width: int = 2000
    canonical_height: int = 800
    clahe_tiles: tuple[int, int] = (8, 8)
    clahe_clip: float = 2.0
    # paper colour model: bright, and either near-grey or in the warm
    # grid-hue band (fractions of a turn; must stay within the red-to-yellow
    # sixth of the wheel so the integer-domain hue test applies)
    min_value: float = 0.35
    max_grey_sat: float = 0.25
    hue_band: tuple[float, float] = (0.0, 0.125)
    min_area_frac: float = 0.05

    def __post_init__(self):
        if self.canonical_width <= 0 or self.canonical_height <= 0:
            raise ValueError("canonical dimensions must be positive")
        if self.clahe_tiles[0] < 1 or self.clahe_tiles[1] < 1:
            raise ValueError("tile grid must be at least (1, 1)")
        if self.clahe_clip < 1.0:
            raise ValueError("clip limit must be >= 1.0")
        if not 0.0 < self.min_area_frac < 1.0:
            raise ValueError("min_area_frac must be in (0, 1)")
        lo, hi = self.hue_band
        if not 0.0 <= lo <= hi <= 1.0 / 6.0:
            raise ValueError("hue_band must lie within [0, 1/6] of a turn")


@dataclass
class RectifyReport:
    """What the pipeline did: geometry, stage timings, warnings."""

    mode: str
    corners: Quad | None = None
    homography: Homography | None = None
    timings_ms: dict[str, float] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "corners": self.corners.as_list() if self.corners else None,
            "homography": self.homography.as_list() if self.homography else None,
            "timings_ms": self.timings_ms,
            "warnings": self.warnings,
        }


def luminance(rgb: np.ndarray) -> np.ndarray:
    """ITU-R 601 luma as float64."""
    r, g, b = (rgb[..., i].astype(np.float64) for i in range(3))
    return LUMA_WEIGHTS[0] * r + LUMA_WEIGHTS[1] * g + LUMA_WEIGHTS[2] * b


def paper_mask(rgb: np.ndarray, cfg: RectifyConfig) -> np.ndarray:
    """Pixels matching the paper/grid colour model, holes filled.

    The model accepts bright pixels that are either near-grey (the paper
    itself, also under shadow) or inside the warm grid-hue band, then closes
    the 1 px gridline grooves so the page is one connected region.

    Works in the integer domain: with mx/mn the per-pixel channel extrema and
    delta = mx - mn, value is mx/255, saturation is delta/mx, and for pixels
    whose maximum is red with g >= b the hue is (g - b) / (6 delta) turns.
    The config restricts hue_band to that sixth of the wheel, so the band
    test becomes 6*lo*delta <= g - b <= 6*hi*delta.
    """
    chans = rgb.astype(np.int32)
    r, g, b = chans[..., 0], chans[..., 1], chans[..., 2]
    mx = np.max(chans, axis=2)
    delta = mx - np.min(chans, axis=2)
    gb = g - b
    lo, hi = cfg.hue_band
    warm = (r == mx) & (gb >= 0) & (gb >= 6.0 * lo * delta) & (gb <= 6.0 * hi * delta)
    grey = delta <= cfg.max_grey_sat * mx
    mask = (mx >= cfg.min_value * 255.0) & (grey | warm)
    if not mask.any():
        return mask
    # opening removes isolated matching pixels (noise) before closing bridges
    # the 1 px trace and gridline grooves; a solid paper region survives both.
    # edge padding keeps the morphology from eroding paper that touches the
    # frame border (outside the array would otherwise count as background)
    pad = 3
    box = np.ones((3, 3), bool)
    padded = np.pad(mask, pad, mode="edge")
    padded = ndimage.binary_opening(padded, structure=box)
    padded = ndimage.binary_closing(padded, structure=box, iterations=2)
    return ndimage.binary_fill_holes(padded[pad:-pad, pad:-pad])


def _largest_component(mask: np.ndarray) -> np.ndarray:
    labels, count = ndimage.label(mask, structure=np.ones((3, 3), int))
    if count == 0:
        raise NoPaperFound("no pixels match the paper colour model")
    sizes = ndimage.sum_labels(np.ones_like(labels), labels, index=np.arange(1, count + 1))
    return labels == (1 + int(np.argmax(sizes)))


def coarse_locate(img: PaperImage, cfg: RectifyConfig = RectifyConfig(),
                  mask: np.ndarray | None = None) -> tuple[int, int, int, int]:
    """Axis-aligned box (x0, y0, x1, y1), exclusive upper bounds, around the
    largest paper-coloured region.

    `mask` short-circuits the colour model when the caller already ran
    `paper_mask` on the full image.
    """
    if mask is None:
        mask = paper_mask(img.pixels, cfg)
    if not mask.any():
        raise NoPaperFound("no pixels match the paper colour model")
    region = _largest_component(mask)
    area = int(region.sum())
    if area < cfg.min_area_frac * mask.size:
        raise NoPaperFound(
            f"largest candidate covers {area / mask.size:.1%}, "
            f"needs >= {cfg.min_area_frac:.0%}"
        )
    ys, xs = np.nonzero(region)
    return int(xs.min()), int(ys.min()), int(xs.max()) + 1, int(ys.max()) + 1


def _prune_collinear(pts: np.ndarray, tol: float = 0.5) -> np.ndarray:
    """Drop hull vertices whose removal changes the area by under `tol` px^2."""
    pts = list(pts)
    changed = True
    while changed and len(pts) > 4:
        changed = False
        best_i, best_a = -1, tol
        for i in range(len(pts)):
            a, b, c = pts[i - 1], pts[i], pts[(i + 1) % len(pts)]
            tri = 0.5 * abs((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))
            if tri < best_a:
                best_i, best_a = i, tri
        if best_i >= 0:
            pts.pop(best_i)
            changed = True
    return np.asarray(pts)


def _reduce_vertices(pts: np.ndarray, limit: int = 28) -> np.ndarray:
    """Keep the exhaustive quad search tractable on noisy hulls."""
    pts = list(pts)
    while len(pts) > limit:
        areas = []
        for i in range(len(pts)):
            a, b, c = pts[i - 1], pts[i], pts[(i + 1) % len(pts)]
            areas.append(abs((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])))
        pts.pop(int(np.argmin(areas)))
    return np.asarray(pts)


def _max_area_quad(hull_pts: np.ndarray) -> np.ndarray:
    """4 hull vertices maximising quad area; since any such quad is inscribed
    in the hull, this minimises the hull-minus-quad area difference."""
    best, best_area = None, -1.0
    for idx in combinations(range(len(hull_pts)), 4):
        q = hull_pts[list(idx)]
        area = abs(signed_area(q))
        if area > best_area:
            best, best_area = q, area
    return best


def _refine_sides(quad_pts: np.ndarray, boundary: np.ndarray) -> np.ndarray | None:
    """Sub-pixel corner refit: fit each page side to its boundary pixels by
    total least squares, then intersect adjacent sides."""
    lines = []
    for i in range(4):
        a, b = quad_pts[i], quad_pts[(i + 1) % 4]
        d = b - a
        length = np.hypot(*d)
        if length < 8:
            return None
        u = d / length
        rel = boundary - a
        t = rel @ u
        perp = np.abs(rel @ np.array([-u[1], u[0]]))
        sel = boundary[(t > 0.08 * length) & (t < 0.92 * length) & (perp <= 3.0)]
        if len(sel) < 20:
            return None
        centre = sel.mean(axis=0)
        cov = np.cov((sel - centre).T)
        w, v = np.linalg.eigh(cov)
        lines.append((centre, v[:, int(np.argmax(w))]))

    corners = []
    for i in range(4):
        (p1, d1), (p2, d2) = lines[i - 1], lines[i]
        a = np.array([[d1[0], -d2[0]], [d1[1], -d2[1]]])
        if abs(np.linalg.det(a)) < 1e-9:
            return None
        s = np.linalg.solve(a, p2 - p1)
        corners.append(p1 + s[0] * d1)
    return np.asarray(corners)


def find_corners(img: PaperImage, bbox: tuple[int, int, int, int],
                 cfg: RectifyConfig = RectifyConfig(),
                 mask: np.ndarray | None = None) -> Quad:
    """Four page corners inside `bbox`, ordered TL,TR,BR,BL.

    `mask` is an optional full-image paper mask to reuse instead of
    recomputing the colour model on the bbox window.
    """
    x0, y0, x1, y1 = bbox
    window = img.pixels[y0:y1, x0:x1]
    if window.size == 0:
        raise NoPaperFound("empty bounding box")
    mask = paper_mask(window, cfg) if mask is None else mask[y0:y1, x0:x1]
    if not mask.any():
        raise NoPaperFound("no paper-coloured pixels inside the bounding box")
    region = _largest_component(mask)
    if int(region.sum()) < 16:
        raise NoPaperFound("candidate region is too small to carry corners")

    boundary = region & ~ndimage.binary_erosion(region)
    ys, xs = np.nonzero(boundary)
    pts = np.stack([xs, ys], axis=1).astype(np.float64)
    try:
        hull = ConvexHull(pts)
    except QhullError as e:
        raise DegenerateQuad(f"boundary has no 2-D convex hull: {e}") from e
    hull_pts = pts[hull.vertices]
    if abs(signed_area(hull_pts)) < 4.0:
        raise DegenerateQuad("convex hull is nearly collinear")

    hull_pts = _prune_collinear(hull_pts)
    hull_pts = _reduce_vertices(hull_pts)
    quad_pts = _max_area_quad(hull_pts)

    refined = _refine_sides(quad_pts, pts)
    if refined is not None:
        try:
            candidate = order_corners(refined + [x0, y0])
        except DegenerateQuad:
            candidate = None
        if candidate is not None:
            return candidate
    return order_corners(quad_pts + [x0, y0])


def clipped_histogram(hist: np.ndarray, clip: float) -> np.ndarray:
    """Clip a 256-bin histogram at clip * pixels/256 and spread the excess
    uniformly over all bins. Returns a float histogram with the same mass."""
    hist = np.asarray(hist, dtype=np.float64)
    limit = clip * hist.sum() / 256.0
    excess = np.maximum(hist - limit, 0.0).sum()
    return np.minimum(hist, limit) + excess / 256.0


def equalisation_lut(hist: np.ndarray) -> np.ndarray:
    """Histogram-equalisation mapping m(v) = round(255 (cdf - cdf_min) /
    (N - cdf_min)), with an identity fallback for single-level histograms."""
    hist = np.asarray(hist, dtype=np.float64)
    nonzero = np.flatnonzero(hist > 0)
    n = hist.sum()
    if len(nonzero) <= 1 or n <= 0:
        return np.arange(256, dtype=np.float64)
    cdf = np.cumsum(hist)
    cdf_min = cdf[nonzero[0]]
    if n == cdf_min:
        return np.arange(256, dtype=np.float64)
    return np.clip(np.rint(255.0 * (cdf - cdf_min) / (n - cdf_min)), 0.0, 255.0)


def clahe(rgb: np.ndarray, tiles: tuple[int, int] = (8, 8), clip: float = 2.0
          ) -> np.ndarray:
    """Contrast-limited adaptive histogram equalisation on the luma channel.

    Tile mappings are built from clipped 256-bin histograms and bilinearly
    interpolated between tile centres; chroma is preserved by shifting all
    channels by the luma delta. Tiles whose histogram holds a single level
    map identically (nothing to equalise).
    """
    rows, cols = tiles
    if rows < 1 or cols < 1:
        raise ValueError("tile grid must be at least (1, 1)")
    if clip < 1.0:
        raise ValueError("clip limit must be >= 1.0")
    h, w = rgb.shape[:2]
    if h < rows or w < cols:
        raise TinyImage(f"{w}x{h} image cannot host a {rows}x{cols} tile grid")

    luma = luminance(rgb)
    levels = np.rint(luma).clip(0, 255).astype(np.uint8)
    r_edges = np.round(np.linspace(0, h, rows + 1)).astype(int)
    c_edges = np.round(np.linspace(0, w, cols + 1)).astype(int)

    luts = np.empty((rows, cols, 256), dtype=np.float64)
    for i in range(rows):
        for j in range(cols):
            tile = levels[r_edges[i]:r_edges[i + 1], c_edges[j]:c_edges[j + 1]]
            hist = np.bincount(tile.ravel(), minlength=256).astype(np.float64)
            if np.count_nonzero(hist) <= 1:
                luts[i, j] = np.arange(256, dtype=np.float64)
            else:
                luts[i, j] = equalisation_lut(clipped_histogram(hist, clip))

    r_centres = (r_edges[:-1] + r_edges[1:] - 1) / 2.0
    c_centres = (c_edges[:-1] + c_edges[1:] - 1) / 2.0
    yi = np.arange(h, dtype=np.float64)
    xi = np.arange(w, dtype=np.float64)
    i0 = np.clip(np.searchsorted(r_centres, yi, side="right") - 1, 0, rows - 1)
    j0 = np.clip(np.searchsorted(c_centres, xi, side="right") - 1, 0, cols - 1)
    i1 = np.minimum(i0 + 1, rows - 1)
    j1 = np.minimum(j0 + 1, cols - 1)
    span_r = r_centres[i1] - r_centres[i0]
    span_c = c_centres[j1] - c_centres[j0]
    wy = np.where(span_r > 0, (yi - r_centres[i0]) / np.where(span_r > 0, span_r, 1.0), 0.0)
    wx = np.where(span_c > 0, (xi - c_centres[j0]) / np.where(span_c > 0, span_c, 1.0), 0.0)
    wy = np.clip(wy, 0.0, 1.0)[:, None]
    wx = np.clip(wx, 0.0, 1.0)[None, :]

    i0g, i1g = i0[:, None], i1[:, None]
    j0g, j1g = j0[None, :], j1[None, :]
    v = levels
    top = luts[i0g, j0g, v] * (1 - wx) + luts[i0g, j1g, v] * wx
    bot = luts[i1g, j0g, v] * (1 - wx) + luts[i1g, j1g, v] * wx
    new_luma = np.rint(top * (1 - wy) + bot * wy)

    delta = (new_luma - levels.astype(np.float64)).astype(np.int64)
    out = rgb.astype(np.int64) + delta[..., None]
    return np.clip(out, 0, 255).astype(np.uint8)


def crop_only(img: PaperImage, cfg: RectifyConfig = RectifyConfig()
              ) -> tuple[PaperImage, RectifyReport]:
    """Locate, crop, CLAHE; no perspective correction."""
    report = RectifyReport(mode="crop-only")
    t0 = time.perf_counter()
    mask = paper_mask(img.pixels, cfg)
    x0, y0, x1, y1 = coarse_locate(img, cfg, mask=mask)
    report.timings_ms["locate"] = (time.perf_counter() - t0) * 1000.0

    t0 = time.perf_counter()
    cropped = np.ascontiguousarray(img.pixels[y0:y1, x0:x1])
    enhanced = clahe(cropped, cfg.clahe_tiles, cfg.clahe_clip)
    report.timings_ms["clahe"] = (time.perf_counter() - t0) * 1000.0

    report.homography = Homography.translation(-x0, -y0)
    out = PaperImage(enhanced, img.px_per_mm,
                     rect_quad(x1 - x0, y1 - y0))
    return out, report


def rectify_pipeline(img: PaperImage, cfg: RectifyConfig = RectifyConfig()
                     ) -> tuple[PaperImage, RectifyReport]:
    """Full chain: locate -> corners -> homography -> warp -> CLAHE."""
    report = RectifyReport(mode="full")

    t0 = time.perf_counter()
    mask = paper_mask(img.pixels, cfg)
    bbox = coarse_locate(img, cfg, mask=mask)
    report.timings_ms["locate"] = (time.perf_counter() - t0) * 1000.0

    t0 = time.perf_counter()
    corners = find_corners(img, bbox, cfg, mask=mask)
    report.corners = corners
    report.timings_ms["corners"] = (time.perf_counter() - t0) * 1000.0

    t0 = time.perf_counter()
    canonical = rect_quad(cfg.canonical_width, cfg.canonical_height)
    h = solve_homography(corners, canonical)
    report.homography = h
    report.timings_ms["homography"] = (time.perf_counter() - t0) * 1000.0

    t0 = time.perf_counter()
    warped = warp_array(img.pixels, h, (cfg.canonical_width, cfg.canonical_height))
    report.timings_ms["warp"] = (time.perf_counter() - t0) * 1000.0

    t0 = time.perf_counter()
    enhanced = clahe(warped, cfg.clahe_tiles, cfg.clahe_clip)
    report.timings_ms["clahe"] = (time.perf_counter() - t0) * 1000.0

    out = PaperImage(enhanced, img.px_per_mm, canonical)
    return out, report
