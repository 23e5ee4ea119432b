"""Exception hierarchy shared across the pipeline."""


class TrailTraceError(Exception):
    """Base class for all errors raised by this package."""


# -- georeferencing --------------------------------------------------------

class DegenerateGcps(TrailTraceError):
    """Fewer than three GCPs, or their pixel positions are collinear."""


class SingularTransform(TrailTraceError):
    """Affine transform has (near-)zero determinant and cannot be inverted."""


class OutOfBand(TrailTraceError):
    """Latitude outside the transverse-Mercator validity band."""


# -- raster -----------------------------------------------------------------

class MalformedImage(TrailTraceError):
    """File exists but is not a readable raster image."""


# -- trail graph ------------------------------------------------------------

class EmptySkeleton(TrailTraceError):
    """Skeleton has no foreground pixels; nothing to build a graph from."""


class SnapFailure(TrailTraceError):
    """Start or goal position is too far from every graph node."""


class DisconnectedGraph(TrailTraceError):
    """Graph expected to be connected has more than one component."""


# -- routing ----------------------------------------------------------------

class BackendUnreachable(TrailTraceError):
    """Routing service could not be reached (timeout / connection refused)."""


class NoRouteFound(TrailTraceError):
    """A waypoint snaps to no road, or the road graph is disconnected."""


class MalformedResponse(TrailTraceError):
    """Routing service answered with something we cannot parse."""


class ParseError(TrailTraceError):
    """OSM XML input is structurally invalid."""


class EmptyNetwork(TrailTraceError):
    """OSM input contains no usable road edges."""


class MalformedGpx(TrailTraceError):
    """GPX input is not a valid single-track document."""


# -- refinement & metrics ---------------------------------------------------

class EmptySet(TrailTraceError):
    """A point set required to be nonempty is empty."""


class DimensionMismatch(TrailTraceError):
    """Two masks compared pixelwise have different shapes."""


# -- harness ----------------------------------------------------------------

class InvalidConfig(TrailTraceError):
    """Scene or pipeline configuration is out of range or inconsistent."""
