"""Exception types shared across the toolkit."""


class MwmError(Exception):
    """Base class for all toolkit errors."""


# --- grid / mask file I/O ---------------------------------------------------

class MagicMismatch(MwmError):
    """File does not start with the expected magic bytes."""


class TruncatedFile(MwmError):
    """Payload is shorter than the header claims."""


class NonFinite(MwmError):
    """Grid contains NaN or Inf values."""


class ConstantMap(MwmError):
    """Saliency map is constant and cannot be normalized or binarized."""


class NotPGM(MwmError):
    """File is not a binary (P5) PGM."""


class UnsupportedMaxval(MwmError):
    """PGM maxval is not 255."""


# --- localization -----------------------------------------------------------

class DegenerateClusters(MwmError):
    """K-Means produced an empty cluster (constant-map guard)."""


class EmptyMask(MwmError):
    """Mask has no foreground pixels where at least one is required."""


class ProviderFailure(MwmError):
    """Refinement provider exited nonzero or produced unreadable output."""


class ShapeMismatch(MwmError):
    """Array dimensions do not agree."""


# --- toy reconstruction engine ---------------------------------------------

class NoMaskedPatches(MwmError):
    """Plan masks nothing; reconstruction loss is undefined."""


# --- metrics ----------------------------------------------------------------

class EmptyPrediction(MwmError):
    """Predicted region has zero area."""


class EmptyGroundTruth(MwmError):
    """Ground-truth mask has zero area (signals a data problem)."""


class EmptyList(MwmError):
    """Aggregation over an empty score list."""


# --- CLI --------------------------------------------------------------------

class MissingSlot(MwmError):
    """Prompt template lacks a required substitution slot."""


class ConfigInvalid(MwmError):
    """Run configuration failed validation."""


class IOFailure(MwmError):
    """A filesystem read or write failed during a run."""
