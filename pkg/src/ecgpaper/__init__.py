"""Deterministic toolkit for paper-style 12-lead ECG images.

Renders waveform records onto millimetre-grid paper in the standard 3x4
layout, applies a seeded catalogue of photographic distortions with exact
corner ground truth, rectifies distorted images back to a canonical
bird's-eye view, and provides the evaluation mathematics for multilabel
diagnosis scoring.
"""
from .distort import (DistortionRecipe, RecipeStep, apply_recipe, apply_shadow,
                      crease, derive_seed, elastic_deform, photometric,
                      random_homography, warp)
from .errors import EcgPaperError
from .geometry import Homography, Quad, order_corners, rect_quad, solve_homography
from .manifest import (DatasetManifest, ManifestEntry, read_manifest,
                       resolve_image, write_manifest)
from .metrics import (ClassWeights, ScoredPredictions, VoteMatrix, auroc,
                      cosine_lambda, hard_vote, macro_auroc, per_label_auroc,
                      positive_weights, read_predictions, roc_curve,
                      weighted_bce, write_predictions)
from .rectify import (RectifyConfig, RectifyReport, clahe, clipped_histogram,
                      coarse_locate, crop_only, equalisation_lut, find_corners,
                      luminance, rectify_pipeline)
from .render import (GridConfig, PanelPlan, PaperImage, load_png, panel_metadata,
                     plan_layout, render_grid, render_record)
from .spline import catmull_rom, catmull_rom_closed, shadow_polygon
from .synth import random_labels, synth_record
from .waveform import (LABEL_NAMES, LEAD_NAMES, DiagnosisVector, EcgRecord,
                       load_record, parse_record, save_record, validate_record)

__version__ = "0.1.0"

__all__ = [
    "DistortionRecipe", "RecipeStep", "apply_recipe", "apply_shadow", "crease",
    "derive_seed", "elastic_deform", "photometric", "random_homography", "warp",
    "EcgPaperError",
    "Homography", "Quad", "order_corners", "rect_quad", "solve_homography",
    "DatasetManifest", "ManifestEntry", "read_manifest", "resolve_image",
    "write_manifest",
    "ClassWeights", "ScoredPredictions", "VoteMatrix", "auroc", "cosine_lambda",
    "hard_vote", "macro_auroc", "per_label_auroc", "positive_weights",
    "read_predictions", "roc_curve", "weighted_bce", "write_predictions",
    "RectifyConfig", "RectifyReport", "clahe", "clipped_histogram",
    "coarse_locate", "crop_only", "equalisation_lut", "find_corners",
    "luminance", "rectify_pipeline",
    "GridConfig", "PanelPlan", "PaperImage", "load_png", "panel_metadata",
    "plan_layout", "render_grid", "render_record",
    "catmull_rom", "catmull_rom_closed", "shadow_polygon",
    "random_labels", "synth_record",
    "LABEL_NAMES", "LEAD_NAMES", "DiagnosisVector", "EcgRecord", "load_record",
    "parse_record", "save_record", "validate_record",
    "__version__",
]
