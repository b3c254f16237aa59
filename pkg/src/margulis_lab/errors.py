"""Exception types shared across the library."""


class MargulisLabError(Exception):
    """Base class for all library errors."""


class OutOfChart(MargulisLabError):
    """Matrix logarithm requested outside the chart around the identity."""


class TrivialU(MargulisLabError):
    """The diagonal flow has no expanding directions."""


class BadSpec(MargulisLabError):
    """Quadrature specification produces no nodes."""


class ZeroVector(MargulisLabError):
    """Operation requires a nonzero vector."""


class BadDelta(MargulisLabError):
    """Exponent delta outside the admissible open interval."""


class NotFoundWithinHorizon(MargulisLabError):
    """Contraction-time scan exhausted its grid.

    Carries the horizon that was scanned; usually means delta is too
    large for the representation at hand.
    """

    def __init__(self, t_max, max_ratio=None):
        self.t_max = t_max
        self.max_ratio = max_ratio
        msg = f"no contraction time found on the grid up to t={t_max}"
        if max_ratio is not None:
            msg += f" (best ratio {max_ratio:.4g})"
        super().__init__(msg)


class CompositionEscapesBall(MargulisLabError):
    """Iterated-operator contraction check failed: t too small."""


class FitDegenerate(MargulisLabError):
    """Decay-curve fit attempted on a flat curve."""


class EnumerationOverflow(MargulisLabError):
    """Lattice enumeration region exceeds the candidate budget."""


class AnchorNotFound(MargulisLabError):
    """No positive-weight component with positive sup was found."""


class NotReturned(MargulisLabError):
    """No quadrature node re-entered the compact part within the horizon."""


class ConfigError(MargulisLabError):
    """Invalid experiment configuration; message names the field path."""

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")
