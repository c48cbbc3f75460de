"""Dataset manifests: the JSON interchange binding images, labels, corner
ground truth, distortion recipes, and fold assignments.

On disk a manifest is a JSON array of entry objects. Image paths are stored
relative to the manifest's own directory so a dataset directory can move as
a unit.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .distort import DistortionRecipe
from .errors import IoFailure, SchemaViolation
from .geometry import Quad
from .waveform import DiagnosisVector


@dataclass(frozen=True)
class ManifestEntry:
    """One dataset item: an image with labels and optional provenance."""

    id: str
    image_path: str
    labels: DiagnosisVector = field(default_factory=DiagnosisVector)
    corners: Quad | None = None
    recipe: DistortionRecipe | None = None
    fold: int | None = None

    def __post_init__(self):
        if not self.id:
            raise ValueError("entry id must be non-empty")
        if self.fold is not None and self.fold < 0:
            raise ValueError("fold must be >= 0 when present")

    def to_dict(self) -> dict:
        d: dict = {"id": self.id, "image_path": self.image_path,
                   "labels": self.labels.to_string()}
        if self.corners is not None:
            d["corners"] = self.corners.as_list()
        if self.recipe is not None:
            d["recipe"] = self.recipe.to_dict()
        if self.fold is not None:
            d["fold"] = self.fold
        return d


@dataclass(frozen=True)
class DatasetManifest:
    """Ordered entries with unique ids."""

    entries: tuple[ManifestEntry, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))
        seen = set()
        for e in self.entries:
            if e.id in seen:
                raise ValueError(f"duplicate entry id {e.id!r}")
            seen.add(e.id)

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def by_id(self, entry_id: str) -> ManifestEntry:
        for e in self.entries:
            if e.id == entry_id:
                return e
        raise KeyError(entry_id)

    def with_folds(self, folds: dict[str, int]) -> "DatasetManifest":
        from dataclasses import replace
        return DatasetManifest(tuple(
            replace(e, fold=folds.get(e.id, e.fold)) for e in self.entries
        ))


def _parse_entry(raw: dict, loc: str) -> ManifestEntry:
    if not isinstance(raw, dict):
        raise SchemaViolation(loc, "entry must be an object")
    for key in ("id", "image_path"):
        if key not in raw:
            raise SchemaViolation(f"{loc}/{key}", f"entry is missing {key!r}")
        if not isinstance(raw[key], str) or not raw[key]:
            raise SchemaViolation(f"{loc}/{key}", f"{key!r} must be a non-empty string")

    labels = DiagnosisVector()
    if "labels" in raw:
        if not isinstance(raw["labels"], str):
            raise SchemaViolation(f"{loc}/labels", "labels must be a string like 'MI;STTC'")
        try:
            labels = DiagnosisVector.from_string(raw["labels"])
        except ValueError as e:
            raise SchemaViolation(f"{loc}/labels", str(e)) from e

    corners = None
    if "corners" in raw and raw["corners"] is not None:
        pts = raw["corners"]
        if (not isinstance(pts, list) or len(pts) != 4
                or any(not isinstance(p, list) or len(p) != 2 for p in pts)):
            raise SchemaViolation(f"{loc}/corners", "corners must be [[x,y]*4] TL,TR,BR,BL")
        try:
            corners = Quad(np.asarray(pts, dtype=np.float64))
        except Exception as e:
            raise SchemaViolation(f"{loc}/corners", str(e)) from e

    recipe = None
    if "recipe" in raw and raw["recipe"] is not None:
        recipe = DistortionRecipe.from_dict(raw["recipe"], f"{loc}/recipe")

    fold = None
    if "fold" in raw and raw["fold"] is not None:
        if not isinstance(raw["fold"], int) or isinstance(raw["fold"], bool) or raw["fold"] < 0:
            raise SchemaViolation(f"{loc}/fold", "fold must be a non-negative integer")
        fold = raw["fold"]

    try:
        return ManifestEntry(raw["id"], raw["image_path"], labels, corners, recipe, fold)
    except ValueError as e:
        raise SchemaViolation(loc, str(e)) from e


def read_manifest(path: str | Path) -> DatasetManifest:
    """Parse and validate a manifest file; locations in errors are
    JSON-pointer style ('/3/corners')."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text("utf-8"))
    except OSError as e:
        raise IoFailure(f"cannot read manifest {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise SchemaViolation("/", f"manifest is not valid JSON: {e}") from e
    if not isinstance(raw, list):
        raise SchemaViolation("/", "manifest must be a JSON array of entries")

    entries = []
    seen: dict[str, int] = {}
    for i, item in enumerate(raw):
        entry = _parse_entry(item, f"/{i}")
        if entry.id in seen:
            raise SchemaViolation(f"/{i}/id",
                                  f"duplicate id {entry.id!r} (first at /{seen[entry.id]})")
        seen[entry.id] = i
        entries.append(entry)
    return DatasetManifest(tuple(entries))


def write_manifest(manifest: DatasetManifest, path: str | Path) -> None:
    path = Path(path)
    payload = [e.to_dict() for e in manifest.entries]
    try:
        path.write_text(json.dumps(payload, indent=2) + "\n", "utf-8")
    except OSError as e:
        raise IoFailure(f"cannot write manifest {path}: {e}") from e


def resolve_image(manifest_path: str | Path, entry: ManifestEntry) -> Path:
    """Entry image paths are relative to the manifest's directory."""
    p = Path(entry.image_path)
    return p if p.is_absolute() else Path(manifest_path).parent / p
