"""Exception hierarchy shared across the package."""


class SonoscanError(Exception):
    """Base class for all package-specific failures."""


class DegenerateMotions(SonoscanError):
    """Hand-eye motion set has (near-)parallel rotation axes."""


class DegenerateMarkers(SonoscanError):
    """Marker observations are too close to collinear for a plane fit."""


class InsufficientCoverage(SonoscanError):
    """Too many heightmap cells received no depth samples."""


class NonDiskTopology(SonoscanError):
    """Mesh is not a single-boundary, genus-zero patch."""


class FlippedTriangles(SonoscanError):
    """Parametrization produced non-injective (folded) uv triangles."""


class OutsideDomain(SonoscanError):
    """Query point lies outside the charted surface region."""


class NearSingularChart(SonoscanError):
    """Chart triangle at the query is degenerate or folded."""


class IndefiniteInertia(SonoscanError):
    """Task-space inertia is not positive definite after regularisation."""


class NumericalDivergence(SonoscanError):
    """Simulation state left the trusted velocity envelope."""

    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state
