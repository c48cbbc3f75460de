"""Uniform Catmull-Rom splines and spline-bounded shadow polygons."""
from __future__ import annotations

import numpy as np


def catmull_rom(p0, p1, p2, p3, t: float) -> np.ndarray:
    """Uniform (tension 1/2) Catmull-Rom point between p1 (t=0) and p2 (t=1).

    Standard basis form:
        0.5 * [ 2*p1 + (p2 - p0)*t + (2*p0 - 5*p1 + 4*p2 - p3)*t^2
                + (3*p1 - p0 - 3*p2 + p3)*t^3 ]
    """
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"t must lie in [0, 1], got {t}")
    p0, p1, p2, p3 = (np.asarray(p, dtype=np.float64) for p in (p0, p1, p2, p3))
    t2 = t * t
    t3 = t2 * t
    return 0.5 * (
        2.0 * p1
        + (p2 - p0) * t
        + (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3) * t2
        + (3.0 * p1 - p0 - 3.0 * p2 + p3) * t3
    )


def catmull_rom_closed(control: np.ndarray, samples_per_segment: int = 16) -> np.ndarray:
    """Sample a closed Catmull-Rom curve through all control points in order.

    Control points wrap around, so every point is interpolated and the curve
    is C1-continuous across segment joins. Returns (n*samples, 2) without a
    duplicated closing vertex.
    """
    ctrl = np.asarray(control, dtype=np.float64)
    n = len(ctrl)
    if n < 3:
        raise ValueError("closed spline needs at least 3 control points")
    if samples_per_segment < 1:
        raise ValueError("samples_per_segment must be >= 1")
    ts = np.arange(samples_per_segment) / samples_per_segment
    out = np.empty((n * samples_per_segment, 2))
    for i in range(n):
        p0 = ctrl[(i - 1) % n]
        p1 = ctrl[i]
        p2 = ctrl[(i + 1) % n]
        p3 = ctrl[(i + 2) % n]
        for j, t in enumerate(ts):
            out[i * samples_per_segment + j] = catmull_rom(p0, p1, p2, p3, t)
    return out


def shadow_control_points(
    rng: np.random.Generator,
    n_control: int,
    bounds: tuple[int, int],
) -> np.ndarray:
    """Draw `n_control` blob-shaped control points inside `bounds` (w, h)."""
    if n_control < 4:
        raise ValueError(f"n_control must be >= 4, got {n_control}")
    width, height = bounds
    centre = np.array([width / 2.0, height / 2.0])
    # radial draw keeps control points in convex position often enough to
    # produce plausible blob-like shadows rather than self-intersecting loops
    angles = np.sort(rng.uniform(0.0, 2.0 * np.pi, size=n_control))
    radii = rng.uniform(0.15, 0.48, size=n_control) * min(width, height)
    ctrl = centre + np.stack([radii * np.cos(angles), radii * np.sin(angles)], axis=1)
    jitter = rng.uniform(-0.05, 0.05, size=ctrl.shape) * min(width, height)
    return np.clip(ctrl + jitter, [0.0, 0.0], [width - 1.0, height - 1.0])


def shadow_polygon(
    seed: int,
    n_control: int,
    bounds: tuple[int, int],
    samples_per_segment: int = 16,
) -> np.ndarray:
    """Closed smooth polygon through `n_control` seeded random points.

    Control points are drawn inside `bounds` (width, height); the returned
    polygon samples the wrapped Catmull-Rom spline through them with at
    least 8 samples per segment. Deterministic per seed.
    """
    if samples_per_segment < 8:
        raise ValueError("shadow polygons need >= 8 samples per segment")
    rng = np.random.default_rng(seed)
    ctrl = shadow_control_points(rng, n_control, bounds)
    return catmull_rom_closed(ctrl, samples_per_segment)
