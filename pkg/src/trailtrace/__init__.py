"""trailtrace: extract navigable GPX routes from trails drawn on scanned maps.

The pipeline georeferences a scanned map with ground control points,
segments the drawn trail into a binary mask, reduces the mask to a
simplified trail graph, plans a waypoint sequence covering the trail, and
iteratively refines a routing-engine route until it hugs the drawn trail.
"""

from . import errors, georef, harness, raster, refine, routing, trailgraph

__all__ = ["errors", "georef", "harness", "raster", "refine", "routing", "trailgraph"]

__version__ = "0.1.0"
