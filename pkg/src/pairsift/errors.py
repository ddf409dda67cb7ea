"""Exception hierarchy. Every error carries a machine-readable category string
so the CLI can map failures to stable exit diagnostics."""


class PairsiftError(Exception):
    category = "error"


class ConfigError(PairsiftError):
    """Invalid or inconsistent configuration input."""

    category = "config"


class FileFormatError(PairsiftError):
    """Unreadable or corrupt tag/histogram/calibration file."""

    category = "file-format"


class DegenerateInputError(PairsiftError):
    """Statistics requested for an all-vacuum population (0/0 case)."""

    category = "degenerate-input"


class DivergenceError(PairsiftError):
    """Generating function evaluated outside its convergence region."""

    category = "divergence"


class EmptyStreamError(PairsiftError):
    """Operation needs detector events but the stream has none."""

    category = "empty-stream"


class NoTriggerError(PairsiftError):
    """Pulsed-regime analysis on a stream without trigger events."""

    category = "no-trigger"


class MissingTruthError(PairsiftError):
    """Truth-label operation on a stream without origin labels."""

    category = "missing-truth"


class NoPeakError(PairsiftError):
    """Gate search on a statistically flat histogram."""

    category = "no-peak"


class NonPhysicalError(PairsiftError):
    """Spectroscopy input outside the physically meaningful domain."""

    category = "non-physical"


class RankDeficientError(PairsiftError):
    """Calibration fit with too few distinct abscissae."""

    category = "rank-deficient"
