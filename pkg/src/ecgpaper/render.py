"""Render 12-lead waveform records as paper-style ECG images.

Standard clinical paper conventions: 25 mm/s, 10 mm/mV, 1 mm minor and 5 mm
major grid. Layout is the standard 3x4 grid: each column shows one quarter of
the record, columns carry leads (I,II,III | aVR,aVL,aVF | V1,V2,V3 | V4,V5,V6)
stacked top to bottom, and every row opens with a 1 mV, 200 ms calibration
pulse.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw, ImageFont

from .errors import BadDimensions, IoFailure, TooShort
from .geometry import Quad, rect_quad
from .waveform import LEAD_NAMES, EcgRecord

MARGIN_MM = 4.0
CAL_ZONE_MM = 7.5   # 5 mm pulse (200 ms at 25 mm/s) + 2.5 mm settle gap
ROW_HEIGHT_MM = 30.0
GUTTER_MM = 5.0
SUPERSAMPLE = 4     # trace layer oversampling factor for the smooth stroke


@dataclass(frozen=True)
class GridConfig:
    """Physical paper constants and palette for the rendered page."""

    px_per_mm: int = 8
    mm_per_s: float = 25.0
    mm_per_mv: float = 10.0
    minor_mm: int = 1
    major_mm: int = 5
    paper_rgb: tuple[int, int, int] = (254, 244, 235)
    minor_rgb: tuple[int, int, int] = (247, 200, 185)
    major_rgb: tuple[int, int, int] = (233, 142, 124)
    ink_rgb: tuple[int, int, int] = (28, 26, 34)

    def __post_init__(self):
        if self.px_per_mm < 4:
            raise ValueError("px_per_mm must be >= 4 so 1 mm resolves")
        if self.mm_per_s <= 0 or self.mm_per_mv <= 0:
            raise ValueError("paper speed and gain must be positive")
        if self.minor_mm <= 0 or self.major_mm % self.minor_mm != 0:
            raise ValueError("major_mm must be a positive multiple of minor_mm")


@dataclass(frozen=True)
class Panel:
    """One lead's cell in the 3x4 grid."""

    lead: str
    row: int
    col: int
    t0: float
    t1: float
    rect: tuple[int, int, int, int]  # x0, y0, x1, y1 pixel bounds, inclusive-exclusive
    baseline_y: int


@dataclass(frozen=True)
class PanelPlan:
    """Full-page layout: 12 panels plus page dimensions in pixels."""

    panels: tuple[Panel, ...]
    width_px: int
    height_px: int
    width_mm: float
    height_mm: float
    window_s: float

    def panel_for(self, lead: str) -> Panel:
        for p in self.panels:
            if p.lead == lead:
                return p
        raise KeyError(lead)


@dataclass
class PaperImage:
    """8-bit RGB raster with physical scale and corner ground truth."""

    pixels: np.ndarray  # (H, W, 3) uint8
    px_per_mm: float
    corners: Quad

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim != 3 or px.shape[2] != 3 or px.dtype != np.uint8:
            raise BadDimensions("PaperImage needs an (H, W, 3) uint8 raster")
        if px.shape[0] < 1 or px.shape[1] < 1:
            raise BadDimensions("PaperImage needs positive dimensions")
        self.pixels = px

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    def copy(self) -> "PaperImage":
        return PaperImage(self.pixels.copy(), self.px_per_mm, self.corners)

    def to_pil(self) -> Image.Image:
        return Image.fromarray(self.pixels, "RGB")

    def save_png(self, path: str | Path) -> None:
        try:
            self.to_pil().save(Path(path), format="PNG")
        except OSError as e:
            raise IoFailure(f"cannot write {path}: {e}") from e


def load_png(path: str | Path, px_per_mm: float = 0.0) -> PaperImage:
    """Read a PNG as a PaperImage whose corners are the raster corners."""
    try:
        with Image.open(Path(path)) as im:
            rgb = np.asarray(im.convert("RGB"), dtype=np.uint8)
    except (OSError, SyntaxError, ValueError) as e:
        raise IoFailure(f"cannot read image {path}: {e}") from e
    return PaperImage(rgb, px_per_mm, rect_quad(rgb.shape[1], rgb.shape[0]))


def plan_layout(rec: EcgRecord, cfg: GridConfig = GridConfig()) -> PanelPlan:
    """Place the 12 leads in the standard 3x4 grid of quarter-record windows."""
    window_s = rec.duration_s / 4.0
    if window_s < 1.0:
        raise TooShort(
            f"record of {rec.duration_s:.2f} s gives {window_s:.2f} s columns; need >= 1 s"
        )
    ppm = cfg.px_per_mm
    col_w_mm = window_s * cfg.mm_per_s
    width_mm = 2 * MARGIN_MM + CAL_ZONE_MM + 4 * col_w_mm + 3 * GUTTER_MM
    height_mm = 2 * MARGIN_MM + 3 * ROW_HEIGHT_MM + 2 * GUTTER_MM

    panels = []
    for col in range(4):
        for row in range(3):
            lead = LEAD_NAMES[col * 3 + row]
            x0_mm = MARGIN_MM + CAL_ZONE_MM + col * (col_w_mm + GUTTER_MM)
            y0_mm = MARGIN_MM + row * (ROW_HEIGHT_MM + GUTTER_MM)
            rect = (
                int(round(x0_mm * ppm)),
                int(round(y0_mm * ppm)),
                int(round((x0_mm + col_w_mm) * ppm)),
                int(round((y0_mm + ROW_HEIGHT_MM) * ppm)),
            )
            baseline = int(round((y0_mm + ROW_HEIGHT_MM / 2) * ppm))
            panels.append(Panel(lead, row, col, col * window_s, (col + 1) * window_s,
                                rect, baseline))
    return PanelPlan(
        panels=tuple(panels),
        width_px=int(round(width_mm * ppm)),
        height_px=int(round(height_mm * ppm)),
        width_mm=width_mm,
        height_mm=height_mm,
        window_s=window_s,
    )


def render_grid(cfg: GridConfig, width_mm: float, height_mm: float) -> PaperImage:
    """Paper background with minor/major millimetre gridlines."""
    if width_mm <= 0 or height_mm <= 0:
        raise BadDimensions("paper dimensions must be positive")
    w = int(round(width_mm * cfg.px_per_mm))
    h = int(round(height_mm * cfg.px_per_mm))
    if w < 2 or h < 2:
        raise BadDimensions("paper smaller than 2 px after rasterisation")

    px = np.empty((h, w, 3), dtype=np.uint8)
    px[:] = cfg.paper_rgb
    minor = cfg.minor_mm * cfg.px_per_mm
    major = cfg.major_mm * cfg.px_per_mm
    px[:, ::minor] = cfg.minor_rgb
    px[::minor, :] = cfg.minor_rgb
    px[:, ::major] = cfg.major_rgb
    px[::major, :] = cfg.major_rgb
    return PaperImage(px, float(cfg.px_per_mm), rect_quad(w, h))


def _label_font(size_px: int) -> ImageFont.ImageFont:
    try:
        return ImageFont.load_default(size=size_px)
    except TypeError:  # Pillow < 10.1 has no sizable default font
        return ImageFont.load_default()


def _stroke_mask(plan: PanelPlan, polylines: list[np.ndarray]) -> np.ndarray:
    """Rasterise polylines as a smooth 1 px stroke coverage mask in [0, 1].

    Drawn at SUPERSAMPLE resolution and box-filtered down, which yields the
    anti-aliased stroke without pulling in a vector-graphics dependency.
    """
    s = SUPERSAMPLE
    layer = Image.new("L", (plan.width_px * s, plan.height_px * s), 0)
    draw = ImageDraw.Draw(layer)
    for line in polylines:
        pts = [(float(x) * s, float(y) * s) for x, y in line]
        if len(pts) >= 2:
            draw.line(pts, fill=255, width=s, joint="curve")
    small = layer.resize((plan.width_px, plan.height_px), Image.BOX)
    return np.asarray(small, dtype=np.float64) / 255.0


def render_record(rec: EcgRecord, cfg: GridConfig = GridConfig()) -> PaperImage:
    """Render a record onto gridded paper in the standard 3x4 layout."""
    plan = plan_layout(rec, cfg)
    page = render_grid(cfg, plan.width_mm, plan.height_mm)
    ppm = cfg.px_per_mm
    n = rec.n_samples

    polylines: list[np.ndarray] = []
    for row in range(3):
        baseline = plan.panels[row].baseline_y  # col 0 holds rows 0..2
        x0 = MARGIN_MM * ppm
        pulse_w = 0.2 * cfg.mm_per_s * ppm
        pulse_h = 1.0 * cfg.mm_per_mv * ppm
        polylines.append(np.array([
            [x0, baseline],
            [x0, baseline - pulse_h],
            [x0 + pulse_w, baseline - pulse_h],
            [x0 + pulse_w, baseline],
        ]))

    for panel in plan.panels:
        s0 = round(panel.col * n / 4)
        s1 = round((panel.col + 1) * n / 4)
        amps = rec.leads[panel.lead][s0:s1]
        t = np.arange(s1 - s0, dtype=np.float64) / rec.fs
        xs = panel.rect[0] + t * cfg.mm_per_s * ppm
        ys = panel.baseline_y - amps * cfg.mm_per_mv * ppm
        polylines.append(np.stack([xs, ys], axis=1))

    alpha = _stroke_mask(plan, polylines)[..., None]
    ink = np.array(cfg.ink_rgb, dtype=np.float64)
    blended = page.pixels.astype(np.float64) * (1.0 - alpha) + ink * alpha
    page.pixels = np.rint(blended).clip(0, 255).astype(np.uint8)

    pil = page.to_pil()
    draw = ImageDraw.Draw(pil)
    font = _label_font(max(8, int(round(2.2 * ppm))))
    for panel in plan.panels:
        draw.text((panel.rect[0] + 3, panel.rect[1] + 2), panel.lead,
                  fill=cfg.ink_rgb, font=font)
    page.pixels = np.asarray(pil, dtype=np.uint8)
    return page


def panel_metadata(plan: PanelPlan) -> dict:
    """Lead-to-rectangle map for layout checks without OCR."""
    return {
        "width_px": plan.width_px,
        "height_px": plan.height_px,
        "window_s": plan.window_s,
        "panels": [
            {"lead": p.lead, "row": p.row, "col": p.col,
             "t0": p.t0, "t1": p.t1, "rect": list(p.rect),
             "baseline_y": p.baseline_y}
            for p in plan.panels
        ],
    }
