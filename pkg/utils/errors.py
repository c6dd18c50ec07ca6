"""Exception hierarchy for the gauge-theory toolkit."""
import numpy as np


class GaugeError(Exception):
    """Root of every numerical or structural failure raised by the library."""


class CompositionMismatch(GaugeError):
    """Endpoints of two arrows or pseudosurfaces do not match."""

    def __init__(self, message, u=None, residual=None):
        super().__init__(message)
        self.u = u
        self.residual = residual


class BranchFailure(GaugeError):
    """A matrix logarithm was requested too close to the branch cut."""


class RankDeficient(GaugeError):
    """A frame does not have full column rank."""


class OutOfChart(GaugeError):
    """A projector is not covered by the requested chart."""

    def __init__(self, message, chart=None):
        super().__init__(message)
        self.chart = chart


class NotLinkable(GaugeError):
    """Two projectors are at Fubini-Study distance pi/2 or beyond."""

    def __init__(self, message, t=None, distance=None):
        super().__init__(message)
        self.t = t
        self.distance = distance


class IllConditioned(GaugeError):
    """A subspace inverse exceeded the condition bound."""


class NotElementary(GaugeError):
    """The operation needs a skeleton of length at most two."""


class NotInImage(GaugeError):
    """A group or algebra element has no preimage under t."""


class NotAbelian(GaugeError):
    """The operation needs a crossed module with abelian H."""


class LinkabilityHypothesisFailed(GaugeError):
    """Surface construction met a pair of points that are not linkable."""


class NoChartCover(GaugeError):
    """No chart of the atlas covers a sample of a pseudosurface."""

    def __init__(self, message, u=None):
        super().__init__(message)
        self.u = u


class GapClosure(GaugeError):
    """The tracked band came closer to the rest of the spectrum than allowed."""

    def __init__(self, message, t=None, gap=None):
        super().__init__(message)
        self.t = t
        self.gap = gap


class NoCompatibleSubspace(GaugeError):
    """No spectral subspace is linkable with the reference projector."""


class EffectiveDegeneracy(GaugeError):
    """Eigenvalues of the effective Hamiltonian collided."""

    def __init__(self, message, t=None):
        super().__init__(message)
        self.t = t


class DeterminantCollapse(GaugeError):
    """A path-ordered exponential left the invertible matrices."""


class ConfigError(ValueError):
    """Invalid scenario configuration."""


# Failures mapped to exit code 3 by the command line
NumericalFailure = (
    GaugeError,
    np.linalg.LinAlgError,
    FloatingPointError,
    ArithmeticError,
)
