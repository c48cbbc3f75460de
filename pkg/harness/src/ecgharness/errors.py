"""Harness exception hierarchy."""


class HarnessError(Exception):
    """Base class for training-harness failures."""


class EmptyPool(HarnessError):
    """The pool manifest has no trainable entries."""


class MissingFolds(HarnessError):
    """Cross-validated training needs fold assignments on every entry."""


class ShapeMismatch(HarnessError):
    """Checkpoint parameters do not fit the model, or arrays disagree."""


class Divergence(HarnessError):
    """Training produced a non-finite loss."""
