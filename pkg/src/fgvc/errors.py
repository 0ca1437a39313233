"""Exception hierarchy for the fgvc codec.

Every error carries an ``exit_code`` so the CLI can map failures to stable,
documented process exit statuses.
"""


class FgvcError(Exception):
    """Base class for all codec errors."""

    exit_code = 6


# -- schedule ---------------------------------------------------------------

class InvalidSchedule(FgvcError):
    """Schedule bounds violated or a derived coefficient left (0, 1)."""


class ShapeMismatch(FgvcError):
    """Operands have incompatible array shapes."""


# -- prior ------------------------------------------------------------------

class ProfileMismatch(FgvcError):
    """Variance profile length does not match the latent coefficient count."""


class EmptyCorpus(FgvcError):
    """No latents (or no sequences) supplied where at least one is required."""


# -- rcc --------------------------------------------------------------------

class NonpositiveVariance(FgvcError):
    """Gaussian pair variance must be strictly positive."""


class ZeroDensity(FgvcError):
    """Target density is zero at a candidate drawn from the proposal."""


class ChunkTooHot(FgvcError):
    """A single coefficient exceeds the per-chunk KL cap; cannot split further."""


class MalformedCode(FgvcError):
    """Truncated or invalid universal integer code."""

    exit_code = 4


# -- pipeline ---------------------------------------------------------------

class VideoTooShort(FgvcError):
    """Input has fewer frames than the minimum codable segment."""


class BadDims(FgvcError):
    """Array dimensions not divisible by the transform block factors."""


class OverlapTooLarge(FgvcError):
    """Requested latent overlap exceeds the segment length."""


class BadGopParams(FgvcError):
    """Inconsistent segmentation parameters (need l > m >= 0, K >= 1)."""


# -- metrics ----------------------------------------------------------------

class ZeroDims(FgvcError):
    """Rate normalisation over an empty pixel volume."""


class TooSmallForScales(FgvcError):
    """Frame too small for even a single-scale structural similarity pass."""


class NoBoundaries(FgvcError):
    """Boundary discontinuity requires at least one segment boundary."""


# -- qctrl ------------------------------------------------------------------

class DegenerateFit(FgvcError):
    """Surrogate fit is underdetermined (all rates identical)."""


class NonInvertibleSurrogate(FgvcError):
    """Fitted exponent is zero; the surrogate cannot be inverted for a rate."""


class MissingAlignmentAnchor(FgvcError):
    """History alignment timestep is absent from the previous sample set."""


class NoConvergence(FgvcError):
    """Quality control hit its iteration cap; carries the best result so far."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


# -- analysis ---------------------------------------------------------------

class NotPositiveDefinite(FgvcError):
    """Source covariance is not symmetric positive definite."""


# -- container / io ---------------------------------------------------------

class MalformedBitstream(FgvcError):
    """Bitstream failed structural validation; offset/GOP recorded in message."""

    exit_code = 4

    def __init__(self, message, offset=None, gop=None):
        super().__init__(message)
        self.offset = offset
        self.gop = gop


class SeedOutOfRange(FgvcError):
    """Decoded PFR seed index exceeds the global candidate cap."""

    exit_code = 4


class MalformedY4M(FgvcError):
    """Y4M parse failure; message carries the byte position of the bad token."""

    exit_code = 4


class UnsupportedChroma(FgvcError):
    """Only mono and 4:4:4 Y4M inputs are accepted."""

    exit_code = 5


class SizeMismatch(FgvcError):
    """Raw payload length disagrees with the dimension sidecar."""

    exit_code = 4


class ConfigError(FgvcError):
    """Bad config file line or flag value."""

    exit_code = 2
