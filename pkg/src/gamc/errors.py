"""Exception hierarchy for the gamc package.

Every error raised by gamc derives from :class:`GamcError` so callers can
catch the whole family with one clause. CLI entry points translate these
into exit code 2 (bad input / config) or 3 (internal invariant breach).
"""


class GamcError(Exception):
    """Base class for all gamc errors."""


# --- signal synthesis -------------------------------------------------------

class UnsupportedModulation(GamcError):
    """Requested modulation scheme is not one of the 24 supported classes."""


class InsufficientLength(GamcError):
    """Too few symbols to fill a 1024-sample frame at the given rate."""


class InvalidFrame(GamcError):
    """Frame contains non-finite samples or has the wrong length."""


class EmptyConfig(GamcError):
    """Dataset generation was asked for an empty class or SNR list."""


# --- sparse coding ----------------------------------------------------------

class InvalidSparsity(GamcError):
    """Sparsity budget k exceeds the number of dictionary atoms."""


class InsufficientData(GamcError):
    """Fewer training windows than dictionary atoms."""


class ConfigMismatch(GamcError):
    """Dictionary dimensions do not match the pyramid configuration."""


# --- features / selection ---------------------------------------------------

class LayoutViolation(GamcError):
    """A feature block came out with the wrong dimension."""


class EmptyInput(GamcError):
    """An operation received an empty column or matrix."""


class InvalidConfig(GamcError):
    """A configuration value is out of its documented range."""


# --- classifiers ------------------------------------------------------------

class DegenerateLabels(GamcError):
    """Training labels collapse to a single class."""


class ShapeError(GamcError):
    """Input dimension does not match what the model was trained on."""


# --- file formats -----------------------------------------------------------

class FormatError(GamcError):
    """Bad magic number or unsupported format version."""


class CorruptFile(GamcError):
    """File is truncated or internally inconsistent."""


class NotFittedError(GamcError):
    """Estimator used before fit() was called."""
