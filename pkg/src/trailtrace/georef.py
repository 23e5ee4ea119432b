"""Affine georeferencing and metric projection.

Coordinate conventions used throughout the package:

* pixel coordinates are ``(row, col)`` with the origin at the top-left
  pixel center, so a valid pixel lies in ``[1, H] x [1, W]``;
* geographic coordinates are ``(latitude, longitude)`` in WGS84 degrees;
* metric coordinates are UTM zone 54N (EPSG:32654) easting/northing in
  meters, which covers the Japanese map region this toolkit targets.

The pixel ordering is a documented choice: GCP files must store pixels as
``[row, col]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import DegenerateGcps, OutOfBand, SingularTransform

__all__ = [
    "GroundControlPoint",
    "GcpSet",
    "AffineTransform",
    "MetricPoint",
    "fit_affine",
    "to_metric",
    "to_metric_many",
]

# Ratio of smallest to largest singular value of the centered pixel matrix
# below which the GCP geometry is treated as collinear.
COLLINEARITY_RTOL = 1e-6

# Determinants below this are considered singular (transforms map pixels to
# degrees, so legitimate determinants are ~1e-10 for meter-scale pixels).
SINGULAR_DET = 1e-12


@dataclass(frozen=True)
class GroundControlPoint:
    """One manually identified pixel <-> geographic correspondence."""

    pixel: tuple[float, float]  # (row, col)
    geo: tuple[float, float]  # (lat, lon) degrees

    def __post_init__(self) -> None:
        lat, lon = self.geo
        if not (-90.0 <= lat <= 90.0 and -180.0 <= lon <= 180.0):
            raise ValueError(f"geographic coordinate out of range: {self.geo}")


@dataclass(frozen=True)
class GcpSet:
    """Ordered collection of ground control points for one map."""

    points: tuple[GroundControlPoint, ...]

    def __init__(self, points: Iterable[GroundControlPoint]):
        object.__setattr__(self, "points", tuple(points))

    def __len__(self) -> int:
        return len(self.points)

    def pixel_array(self) -> np.ndarray:
        return np.array([p.pixel for p in self.points], dtype=float)

    def geo_array(self) -> np.ndarray:
        return np.array([p.geo for p in self.points], dtype=float)


@dataclass(frozen=True)
class AffineTransform:
    """Affine map from pixel ``(row, col)`` to geographic ``(lat, lon)``.

    ``geo = matrix @ pixel + offset``.
    """

    matrix: np.ndarray  # shape (2, 2)
    offset: np.ndarray  # shape (2,)

    def __post_init__(self) -> None:
        object.__setattr__(self, "matrix", np.asarray(self.matrix, dtype=float).reshape(2, 2))
        object.__setattr__(self, "offset", np.asarray(self.offset, dtype=float).reshape(2))

    @property
    def det(self) -> float:
        m = self.matrix
        return float(m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0])

    def apply(self, pixel: Sequence[float]) -> np.ndarray:
        """Map one pixel (row, col) to (lat, lon)."""
        return self.matrix @ np.asarray(pixel, dtype=float) + self.offset

    def apply_many(self, pixels: np.ndarray) -> np.ndarray:
        """Map an (N, 2) array of pixels to an (N, 2) array of (lat, lon)."""
        pts = np.asarray(pixels, dtype=float).reshape(-1, 2)
        return pts @ self.matrix.T + self.offset

    def invert(self) -> "AffineTransform":
        """Return the geographic -> pixel transform.

        Raises SingularTransform when the determinant is below 1e-12,
        which signals degenerate GCP geometry.
        """
        d = self.det
        if abs(d) < SINGULAR_DET:
            raise SingularTransform(f"determinant {d:g} below {SINGULAR_DET:g}")
        m = self.matrix
        inv = np.array([[m[1, 1], -m[0, 1]], [-m[1, 0], m[0, 0]]], dtype=float) / d
        return AffineTransform(matrix=inv, offset=-inv @ self.offset)


def fit_affine(gcps: GcpSet) -> AffineTransform:
    """Least-squares affine fit mapping GCP pixels onto their geo targets.

    Solves the two decoupled linear systems (one per output coordinate) via
    normal equations on centered coordinates, so the fit is exact for three
    non-collinear GCPs and is the global least-squares minimizer otherwise.

    Raises DegenerateGcps when fewer than three points are given or the
    pixel positions are collinear.
    """
    if len(gcps) < 3:
        raise DegenerateGcps(f"need at least 3 GCPs, got {len(gcps)}")
    pixels = gcps.pixel_array()
    geos = gcps.geo_array()

    pixel_mean = pixels.mean(axis=0)
    geo_mean = geos.mean(axis=0)
    pc = pixels - pixel_mean
    gc = geos - geo_mean

    singular = np.linalg.svd(pc, compute_uv=False)
    if singular[-1] < COLLINEARITY_RTOL * singular[0]:
        raise DegenerateGcps("GCP pixel positions are collinear")

    # Normal equations: (pc^T pc) a_k = pc^T gc[:, k] for each output row.
    gram = pc.T @ pc
    matrix = np.linalg.solve(gram, pc.T @ gc).T
    offset = geo_mean - matrix @ pixel_mean
    return AffineTransform(matrix=matrix, offset=offset)


# ---------------------------------------------------------------------------
# Transverse Mercator, UTM zone 54N (EPSG:32654)
# ---------------------------------------------------------------------------

_WGS84_A = 6378137.0
_WGS84_F = 1.0 / 298.257223563
_ECC = math.sqrt(_WGS84_F * (2.0 - _WGS84_F))

UTM_SCALE = 0.9996
CENTRAL_MERIDIAN_DEG = 141.0  # UTM zone 54
FALSE_EASTING = 500000.0
LAT_BAND = (-80.0, 84.0)

_N3 = _WGS84_F / (2.0 - _WGS84_F)  # third flattening

# Rectifying radius and the 6th-order Krueger series coefficients.
_RECTIFYING_RADIUS = _WGS84_A / (1.0 + _N3) * (
    1.0 + _N3**2 / 4.0 + _N3**4 / 64.0 + _N3**6 / 256.0
)
_ALPHA = (
    _N3 / 2.0 - 2.0 * _N3**2 / 3.0 + 5.0 * _N3**3 / 16.0 + 41.0 * _N3**4 / 180.0
    - 127.0 * _N3**5 / 288.0 + 7891.0 * _N3**6 / 37800.0,
    13.0 * _N3**2 / 48.0 - 3.0 * _N3**3 / 5.0 + 557.0 * _N3**4 / 1440.0
    + 281.0 * _N3**5 / 630.0 - 1983433.0 * _N3**6 / 1935360.0,
    61.0 * _N3**3 / 240.0 - 103.0 * _N3**4 / 140.0 + 15061.0 * _N3**5 / 26880.0
    + 167603.0 * _N3**6 / 181440.0,
    49561.0 * _N3**4 / 161280.0 - 179.0 * _N3**5 / 168.0 + 6601661.0 * _N3**6 / 7257600.0,
    34729.0 * _N3**5 / 80640.0 - 3418889.0 * _N3**6 / 1995840.0,
    212378941.0 * _N3**6 / 319334400.0,
)


@dataclass(frozen=True)
class MetricPoint:
    """Planar UTM zone 54N position in meters."""

    easting: float
    northing: float

    def distance_to(self, other: "MetricPoint") -> float:
        return math.hypot(self.easting - other.easting, self.northing - other.northing)


def to_metric(geo: Sequence[float]) -> MetricPoint:
    """Project (lat, lon) degrees to UTM zone 54N meters.

    Raises OutOfBand for latitudes outside [-80, 84].
    """
    lat, lon = float(geo[0]), float(geo[1])
    if not (LAT_BAND[0] <= lat <= LAT_BAND[1]):
        raise OutOfBand(f"latitude {lat} outside {LAT_BAND}")
    e, n = _project(np.array([lat]), np.array([lon]))
    return MetricPoint(easting=float(e[0]), northing=float(n[0]))


def to_metric_many(geos: np.ndarray) -> np.ndarray:
    """Project an (N, 2) array of (lat, lon) to an (N, 2) easting/northing array."""
    arr = np.asarray(geos, dtype=float).reshape(-1, 2)
    if arr.size and (arr[:, 0].min() < LAT_BAND[0] or arr[:, 0].max() > LAT_BAND[1]):
        raise OutOfBand("latitude outside transverse-Mercator validity band")
    e, n = _project(arr[:, 0], arr[:, 1])
    return np.column_stack([e, n])


def _project(lat_deg: np.ndarray, lon_deg: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    phi = np.radians(lat_deg)
    lam = np.radians(lon_deg - CENTRAL_MERIDIAN_DEG)

    sphi = np.sin(phi)
    # tan of the conformal latitude via the isometric latitude.
    tau = np.sinh(np.arctanh(sphi) - _ECC * np.arctanh(_ECC * sphi))
    coslam = np.cos(lam)

    xi0 = np.arctan2(tau, coslam)
    eta0 = np.arcsinh(np.sin(lam) / np.hypot(tau, coslam))
    xi = xi0.copy()
    eta = eta0.copy()
    for j, alpha in enumerate(_ALPHA, start=1):
        xi += alpha * np.sin(2 * j * xi0) * np.cosh(2 * j * eta0)
        eta += alpha * np.cos(2 * j * xi0) * np.sinh(2 * j * eta0)

    easting = FALSE_EASTING + UTM_SCALE * _RECTIFYING_RADIUS * eta
    northing = UTM_SCALE * _RECTIFYING_RADIUS * xi
    return easting, northing
