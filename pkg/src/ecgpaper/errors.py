"""Exception hierarchy shared across the toolkit."""
from __future__ import annotations


class EcgPaperError(Exception):
    """Base class for all toolkit errors."""


# --- waveform / manifest ---

class BadHeader(EcgPaperError):
    """CSV header is missing, malformed, or names unknown columns."""


class MissingLead(EcgPaperError):
    def __init__(self, lead: str):
        super().__init__(f"lead {lead!r} is missing")
        self.lead = lead


class NonFiniteSample(EcgPaperError):
    def __init__(self, lead: str, index: int):
        super().__init__(f"non-finite sample in lead {lead!r} at index {index}")
        self.lead = lead
        self.index = index


class LengthMismatch(EcgPaperError):
    """Lead series have unequal lengths."""


class IoFailure(EcgPaperError):
    """File could not be read or written."""


class SchemaViolation(EcgPaperError):
    """Manifest JSON violates the documented schema.

    `location` is a JSON-pointer-style path to the offending element.
    """

    def __init__(self, location: str, message: str):
        super().__init__(f"{location}: {message}")
        self.location = location


# --- rendering ---

class TooShort(EcgPaperError):
    """Record cannot be tiled into four panel windows of at least 1 s."""


class BadDimensions(EcgPaperError):
    """Requested paper dimensions are not positive."""


# --- distortion ---

class DegeneratePolygon(EcgPaperError):
    """Shadow polygon encloses less than one square pixel."""


class SingularHomography(EcgPaperError):
    """Homography is not invertible."""


# --- rectification ---

class NoPaperFound(EcgPaperError):
    """No region matching the paper colour model exceeds the minimum area."""


class DegenerateQuad(EcgPaperError):
    """Detected hull is too close to collinear to carry four corners."""


class SingularSystem(EcgPaperError):
    """The DLT system has no unique solution (degenerate correspondences)."""


class TinyImage(EcgPaperError):
    """Image is smaller than the requested tile grid."""


# --- evaluation ---

class SingleClass(EcgPaperError):
    def __init__(self, label: str | None = None):
        detail = f" for label {label!r}" if label else ""
        super().__init__(f"AUROC undefined{detail}: needs both classes present")
        self.label = label


class ZeroPositives(EcgPaperError):
    def __init__(self, label: str):
        super().__init__(f"label {label!r} has zero positive samples")
        self.label = label


# --- CLI / batch ---

class MissingImage(EcgPaperError):
    def __init__(self, entry_id: str, path: str):
        super().__init__(f"image for entry {entry_id!r} not found: {path}")
        self.entry_id = entry_id


class MissingPrediction(EcgPaperError):
    def __init__(self, entry_id: str):
        super().__init__(f"no prediction for entry {entry_id!r}")
        self.entry_id = entry_id


class TooFewEntries(EcgPaperError):
    """Fewer entries than folds requested."""


class NonEmptyOutDir(EcgPaperError):
    """Output directory already holds files; pass --force to overwrite."""
