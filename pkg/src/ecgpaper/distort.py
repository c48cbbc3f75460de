"""Seeded, replayable image distortions with ground-truth corner propagation.

A DistortionRecipe is an ordered list of steps. A template step carries only
sampling bounds ("jitter": 0.08); applying it draws the actual parameters
from a per-step random stream and records them, so the realised recipe
replays bit-exactly. Geometric steps (perspective, rotate) move the paper's
ground-truth corner quad; shadow, crease, elastic, and photometric steps
never do.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw
from scipy.ndimage import distance_transform_edt, gaussian_filter, map_coordinates

from .errors import DegeneratePolygon, IoFailure, SchemaViolation
from .geometry import (Homography, Quad, rect_quad, signed_area,
                       solve_homography, warp_array)
from .render import PaperImage
from .spline import catmull_rom_closed, shadow_control_points

STEP_KINDS = ("shadow", "perspective", "rotate", "elastic", "crease", "photometric")
GEOMETRIC_KINDS = ("perspective", "rotate")


def derive_seed(run_seed: int, entry_id: str) -> int:
    """Stable per-entry 64-bit seed; independent of the other entries."""
    digest = hashlib.sha256(f"{run_seed}:{entry_id}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


def _step_rng(recipe_seed: int, step_index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([recipe_seed, step_index]))


@dataclass(frozen=True)
class RecipeStep:
    """One distortion step: sampling parameters plus realised draw (if any)."""

    kind: str
    params: dict
    realised: dict | None = None

    def __post_init__(self):
        if self.kind not in STEP_KINDS:
            raise ValueError(f"unknown step kind {self.kind!r}")

    def __eq__(self, other) -> bool:
        return (isinstance(other, RecipeStep) and self.kind == other.kind
                and self.params == other.params and self.realised == other.realised)

    def to_dict(self) -> dict:
        d = {"kind": self.kind, **self.params}
        if self.realised is not None:
            d["realised"] = self.realised
        return d

    @classmethod
    def from_dict(cls, d: dict, location: str = "") -> "RecipeStep":
        if "kind" not in d:
            raise SchemaViolation(f"{location}/kind", "step is missing its kind")
        kind = d["kind"]
        if kind not in STEP_KINDS:
            raise SchemaViolation(f"{location}/kind", f"unknown step kind {kind!r}")
        params = {k: v for k, v in d.items() if k not in ("kind", "realised")}
        return cls(kind, params, d.get("realised"))


@dataclass(frozen=True)
class DistortionRecipe:
    """Seed plus ordered steps; realised recipes replay bit-exactly."""

    seed: int
    steps: tuple[RecipeStep, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "steps", tuple(self.steps))

    def to_dict(self) -> dict:
        return {"seed": self.seed, "steps": [s.to_dict() for s in self.steps]}

    @classmethod
    def from_dict(cls, d: dict, location: str = "") -> "DistortionRecipe":
        if not isinstance(d, dict):
            raise SchemaViolation(location or "/", "recipe must be an object")
        if "seed" not in d or not isinstance(d["seed"], int):
            raise SchemaViolation(f"{location}/seed", "recipe needs an integer seed")
        raw = d.get("steps", [])
        if not isinstance(raw, list):
            raise SchemaViolation(f"{location}/steps", "steps must be a list")
        steps = tuple(
            RecipeStep.from_dict(s, f"{location}/steps/{i}") for i, s in enumerate(raw)
        )
        return cls(d["seed"], steps)

    def save(self, path: str | Path) -> None:
        try:
            Path(path).write_text(json.dumps(self.to_dict(), indent=2), "utf-8")
        except OSError as e:
            raise IoFailure(f"cannot write recipe {path}: {e}") from e

    @classmethod
    def load(cls, path: str | Path) -> "DistortionRecipe":
        try:
            raw = json.loads(Path(path).read_text("utf-8"))
        except OSError as e:
            raise IoFailure(f"cannot read recipe {path}: {e}") from e
        except json.JSONDecodeError as e:
            raise SchemaViolation("/", f"recipe is not valid JSON: {e}") from e
        return cls.from_dict(raw)


def _polygon_mask(polygon: np.ndarray, width: int, height: int) -> np.ndarray:
    layer = Image.new("1", (width, height), 0)
    draw = ImageDraw.Draw(layer)
    draw.polygon([(float(x), float(y)) for x, y in polygon], fill=1)
    return np.asarray(layer, dtype=bool)


def apply_shadow(
    img: PaperImage,
    polygon: np.ndarray,
    intensity: float,
    feather_px: float = 0.0,
) -> PaperImage:
    """Darken the interior of a polygon; pixels beyond the feather band keep
    their exact values."""
    if not 0.0 < intensity <= 1.0:
        raise ValueError(f"shadow intensity must be in (0, 1], got {intensity}")
    if feather_px < 0:
        raise ValueError("feather_px must be >= 0")
    poly = np.asarray(polygon, dtype=np.float64)
    if len(poly) < 3 or abs(signed_area(poly)) < 1.0:
        raise DegeneratePolygon("shadow polygon area is under 1 px^2")

    inside = _polygon_mask(poly, img.width, img.height)
    factor = np.ones((img.height, img.width), dtype=np.float64)
    factor[inside] = 1.0 - intensity
    if feather_px > 0:
        # distance from each outside pixel to the polygon, for the linear ramp
        dist = distance_transform_edt(~inside)
        band = ~inside & (dist < feather_px)
        factor[band] = 1.0 - intensity * (1.0 - dist[band] / feather_px)

    out = img.copy()
    out.pixels = np.rint(out.pixels * factor[..., None]).clip(0, 255).astype(np.uint8)
    return out


def random_homography(
    seed: int,
    max_corner_jitter_frac: float,
    width: int,
    height: int,
) -> Homography:
    """Perspective map displacing each image corner by at most
    jitter_frac * min(width, height), uniformly over that disc."""
    rng = np.random.default_rng(seed)
    return _sample_perspective(rng, max_corner_jitter_frac, width, height)


def _sample_perspective(
    rng: np.random.Generator,
    jitter_frac: float,
    width: int,
    height: int,
) -> Homography:
    if not 0.0 <= jitter_frac <= 0.25:
        raise ValueError(f"corner jitter fraction must be in [0, 0.25], got {jitter_frac}")
    if jitter_frac == 0.0:
        return Homography.identity()
    radius = jitter_frac * min(width, height)
    base = rect_quad(width, height)
    for _ in range(100):
        ang = rng.uniform(0.0, 2.0 * np.pi, size=4)
        rad = radius * np.sqrt(rng.uniform(0.0, 1.0, size=4))
        moved = base.points + np.stack([rad * np.cos(ang), rad * np.sin(ang)], axis=1)
        try:
            return solve_homography(base, Quad(moved))
        except Exception:
            continue  # non-convex or ill-conditioned draw: sample again
    raise ValueError("could not sample a well-conditioned perspective transform")


def warp(
    img: PaperImage,
    h: Homography,
    canvas: tuple[int, int] | None = None,
    fill: tuple[int, int, int] = (0, 0, 0),
) -> tuple[PaperImage, Quad]:
    """Warp by `h` with inverse-mapped bilinear resampling.

    Returns the warped raster and the exact projective image of the input's
    ground-truth corner quad (computed on coordinates, not pixels).
    """
    if canvas is None:
        canvas = (img.width, img.height)
    quad = h.apply_quad(img.corners)
    if h.is_identity() and canvas == (img.width, img.height):
        out = img.copy()
        out.corners = quad
        return out, quad
    pixels = warp_array(img.pixels, h, canvas, fill)
    return PaperImage(pixels, img.px_per_mm, quad), quad


def _fit_canvas(h: Homography, width: int, height: int) -> tuple[Homography, tuple[int, int]]:
    """Compose a translation so the warped frame lands at the origin."""
    frame = h.apply(rect_quad(width, height).points)
    minx, miny = frame.min(axis=0)
    maxx, maxy = frame.max(axis=0)
    if minx == 0.0 and miny == 0.0:
        shifted = h
    else:
        shifted = Homography.translation(-minx, -miny).compose(h)
    size = (int(np.ceil(maxx - minx)) + 1, int(np.ceil(maxy - miny)) + 1)
    return shifted, size


def elastic_deform(img: PaperImage, alpha: float, sigma: float, seed: int) -> PaperImage:
    """Smooth random displacement field with peak magnitude exactly `alpha` px."""
    if alpha < 0:
        raise ValueError("alpha must be >= 0")
    if sigma <= 0:
        raise ValueError("sigma must be > 0")
    if alpha == 0:
        return img.copy()
    dx, dy = _elastic_field(img.height, img.width, alpha, sigma, seed)
    ys, xs = np.meshgrid(np.arange(img.height, dtype=np.float64),
                         np.arange(img.width, dtype=np.float64), indexing="ij")
    coords = [ys + dy, xs + dx]
    out = img.copy()
    warped = np.empty_like(img.pixels)
    for c in range(3):
        ch = map_coordinates(img.pixels[..., c].astype(np.float64), coords,
                             order=1, mode="nearest")
        warped[..., c] = np.rint(ch).clip(0, 255).astype(np.uint8)
    out.pixels = warped
    return out


def _elastic_field(height: int, width: int, alpha: float, sigma: float,
                   seed: int) -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng(seed)
    dx = gaussian_filter(rng.uniform(-1.0, 1.0, (height, width)), sigma)
    dy = gaussian_filter(rng.uniform(-1.0, 1.0, (height, width)), sigma)
    mag = np.sqrt(dx * dx + dy * dy).max()
    if mag > 0:
        dx *= alpha / mag
        dy *= alpha / mag
    return dx, dy


def _field_hash(dx: np.ndarray, dy: np.ndarray) -> str:
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(dx).tobytes())
    h.update(np.ascontiguousarray(dy).tobytes())
    return h.hexdigest()


def photometric(img: PaperImage, brightness_delta: float, contrast_gain: float) -> PaperImage:
    """Per-channel v' = clamp(gain * (v - 128) + 128 + 255 * delta)."""
    if not -0.5 <= brightness_delta <= 0.5:
        raise ValueError("brightness delta must be in [-0.5, 0.5]")
    if not 0.5 <= contrast_gain <= 2.0:
        raise ValueError("contrast gain must be in [0.5, 2]")
    v = img.pixels.astype(np.float64)
    v = contrast_gain * (v - 128.0) + 128.0 + 255.0 * brightness_delta
    out = img.copy()
    out.pixels = np.rint(v).clip(0, 255).astype(np.uint8)
    return out


def crease(img: PaperImage, p0: tuple[float, float], angle_rad: float,
           darken: float, falloff_px: float = 10.0) -> PaperImage:
    """Line-anchored brightness ramp simulating a paper fold.

    Pixels on one side of the line through `p0` at `angle_rad` darken by up
    to `darken`, strongest at the line and fading to nothing `falloff_px`
    away. Purely photometric: corners are unaffected.
    """
    if not 0.0 <= darken <= 0.5:
        raise ValueError("crease darken must be in [0, 0.5]")
    if falloff_px <= 0:
        raise ValueError("falloff_px must be > 0")
    ys, xs = np.meshgrid(np.arange(img.height, dtype=np.float64),
                         np.arange(img.width, dtype=np.float64), indexing="ij")
    normal = (-np.sin(angle_rad), np.cos(angle_rad))
    sdist = (xs - p0[0]) * normal[0] + (ys - p0[1]) * normal[1]
    ramp = np.clip(1.0 - sdist / falloff_px, 0.0, 1.0) * (sdist >= 0)
    factor = 1.0 - darken * ramp
    out = img.copy()
    out.pixels = np.rint(out.pixels * factor[..., None]).clip(0, 255).astype(np.uint8)
    return out


def _as_floats(arr: np.ndarray) -> list:
    return [[float(v) for v in row] for row in np.asarray(arr)]


def _apply_step(img: PaperImage, quad: Quad, step: RecipeStep,
                rng: np.random.Generator) -> tuple[PaperImage, Quad, RecipeStep]:
    p = step.params
    r = step.realised
    if step.kind == "shadow":
        if r is None:
            ctrl = shadow_control_points(rng, int(p["n_control"]), (img.width, img.height))
            r = {"control": _as_floats(ctrl)}
        polygon = catmull_rom_closed(np.asarray(r["control"], dtype=np.float64))
        out = apply_shadow(img, polygon, float(p["intensity"]), float(p.get("feather", 0.0)))
        return out, quad, replace(step, realised=r)

    if step.kind == "perspective":
        if r is None:
            h = _sample_perspective(rng, float(p["jitter"]), img.width, img.height)
            h, canvas = _fit_canvas(h, img.width, img.height)
            r = {"h": h.as_list(), "canvas": list(canvas)}
        h = Homography(np.asarray(r["h"], dtype=np.float64))
        out, new_quad = warp(img, h, tuple(r["canvas"]))
        return out, h.apply_quad(quad), replace(step, realised=r)

    if step.kind == "rotate":
        if r is None:
            limit = float(p["max_degrees"])
            deg = float(rng.uniform(-limit, limit)) if limit > 0 else 0.0
            h = Homography.rotation_about(np.deg2rad(deg), (img.width - 1) / 2.0,
                                          (img.height - 1) / 2.0)
            h, canvas = _fit_canvas(h, img.width, img.height)
            r = {"degrees": deg, "h": h.as_list(), "canvas": list(canvas)}
        h = Homography(np.asarray(r["h"], dtype=np.float64))
        out, _ = warp(img, h, tuple(r["canvas"]))
        return out, h.apply_quad(quad), replace(step, realised=r)

    if step.kind == "elastic":
        alpha, sigma = float(p["alpha"]), float(p["sigma"])
        if r is None:
            field_seed = int(rng.integers(0, 2**63))
            if alpha == 0:
                r = {"field_seed": field_seed, "field_hash": ""}
            else:
                dx, dy = _elastic_field(img.height, img.width, alpha, sigma, field_seed)
                r = {"field_seed": field_seed, "field_hash": _field_hash(dx, dy)}
        elif alpha > 0:
            dx, dy = _elastic_field(img.height, img.width, alpha, sigma, int(r["field_seed"]))
            if _field_hash(dx, dy) != r["field_hash"]:
                raise SchemaViolation("/steps/elastic/field_hash",
                                      "replayed displacement field does not match")
        out = elastic_deform(img, alpha, sigma, int(r["field_seed"]))
        return out, quad, replace(step, realised=r)

    if step.kind == "crease":
        if r is None:
            limit = float(p.get("max_darken", 0.15))
            r = {
                "p0": [float(rng.uniform(0, img.width - 1)),
                       float(rng.uniform(0, img.height - 1))],
                "angle": float(rng.uniform(0.0, np.pi)),
                "darken": float(rng.uniform(0.0, limit)) if limit > 0 else 0.0,
            }
        out = crease(img, tuple(r["p0"]), float(r["angle"]), float(r["darken"]),
                     float(p.get("falloff", 10.0)))
        return out, quad, replace(step, realised=r)

    if step.kind == "photometric":
        if r is None:
            max_delta = float(p.get("max_delta", 0.0))
            lo = float(p.get("min_gain", 1.0))
            hi = float(p.get("max_gain", 1.0))
            r = {
                "delta": float(rng.uniform(-max_delta, max_delta)) if max_delta > 0 else 0.0,
                "gain": float(rng.uniform(lo, hi)) if hi > lo else lo,
            }
        out = photometric(img, float(r["delta"]), float(r["gain"]))
        return out, quad, replace(step, realised=r)

    raise ValueError(f"unknown step kind {step.kind!r}")


def apply_recipe(img: PaperImage, recipe: DistortionRecipe
                 ) -> tuple[PaperImage, Quad, DistortionRecipe]:
    """Apply all steps in order.

    Returns the distorted image, the ground-truth corner quad transformed by
    exactly the geometric steps, and the realised recipe whose replay is
    bit-exact.
    """
    quad = img.corners
    current = img
    realised_steps = []
    for idx, step in enumerate(recipe.steps):
        rng = _step_rng(recipe.seed, idx)
        current, quad, done = _apply_step(current, quad, step, rng)
        realised_steps.append(done)
    if current is img:
        current = img.copy()
    current.corners = quad
    return current, quad, DistortionRecipe(recipe.seed, tuple(realised_steps))
