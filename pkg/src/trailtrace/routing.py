"""Routing backends and the GPX/OSM wire formats.

Two interchangeable backends turn an ordered waypoint list into a route
polyline: ``LocalRouter`` runs exact shortest-path search over a road
network parsed from OSM XML, and ``HttpRouter`` speaks the HTTP dialect of
a GraphHopper-compatible service (GET with repeated ``point=lat,lon``
parameters, ``profile=foot``, unencoded coordinate response in
longitude-first order). Routes are encoded as GPX 1.1 tracks.
"""

from __future__ import annotations

import heapq
import math
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from itertools import count
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import requests

from . import georef
from .errors import (
    BackendUnreachable,
    EmptyNetwork,
    MalformedGpx,
    MalformedResponse,
    NoRouteFound,
    ParseError,
)

__all__ = [
    "RoutePolyline",
    "RoadNetwork",
    "RoadEdge",
    "RoutingRequest",
    "LocalRouter",
    "HttpRouter",
    "route",
    "load_osm",
    "save_osm",
    "encode_gpx",
    "decode_gpx",
]

MAX_SNAP_DISTANCE_M = 200.0
HTTP_TIMEOUT_S = 30.0

# pedestrian profile: road classes never walkable
_UNWALKABLE_HIGHWAYS = {"motorway", "motorway_link", "trunk"}

GeoPoint = tuple[float, float]  # (lat, lon) degrees


@dataclass(frozen=True)
class RoutePolyline:
    """Ordered geographic track of a generated route.

    Consecutive duplicate points are removed on construction; a route that
    collapses to a single position is kept as a two-point degenerate
    polyline so every polyline has at least two points.
    """

    points: tuple[GeoPoint, ...]

    def __init__(self, points: Iterable[Sequence[float]]):
        cleaned: list[GeoPoint] = []
        for p in points:
            q = (float(p[0]), float(p[1]))
            if not cleaned or cleaned[-1] != q:
                cleaned.append(q)
        if len(cleaned) == 1:
            cleaned.append(cleaned[0])
        if len(cleaned) < 2:
            raise ValueError("a route polyline needs at least two points")
        object.__setattr__(self, "points", tuple(cleaned))

    def __len__(self) -> int:
        return len(self.points)

    def as_array(self) -> np.ndarray:
        return np.array(self.points, dtype=float)


@dataclass(frozen=True)
class RoutingRequest:
    """Ordered waypoints to route through with the pedestrian profile."""

    waypoints: tuple[GeoPoint, ...]
    profile: str = "foot"

    def __init__(self, waypoints: Iterable[Sequence[float]], profile: str = "foot"):
        pts = tuple((float(p[0]), float(p[1])) for p in waypoints)
        if len(pts) < 2:
            raise ValueError("a routing request needs at least two waypoints")
        if profile != "foot":
            raise ValueError(f"unsupported profile {profile!r} (only 'foot')")
        object.__setattr__(self, "waypoints", pts)
        object.__setattr__(self, "profile", profile)


@dataclass(frozen=True)
class RoadEdge:
    u: int
    v: int
    length_m: float
    walkable: bool = True


@dataclass(frozen=True)
class RoadNetwork:
    """Undirected road graph with geographic node positions."""

    nodes: dict[int, GeoPoint]
    edges: tuple[RoadEdge, ...]

    @classmethod
    def from_segments(
        cls,
        nodes: dict[int, GeoPoint],
        segments: Iterable[tuple[int, int]],
        unwalkable: Iterable[tuple[int, int]] = (),
    ) -> "RoadNetwork":
        """Build a network, computing metric edge lengths from node positions."""
        blocked = {frozenset(s) for s in unwalkable}
        edges = []
        for u, v in segments:
            length = _metric_distance(nodes[u], nodes[v])
            edges.append(RoadEdge(u=u, v=v, length_m=length, walkable=frozenset((u, v)) not in blocked))
        return cls(nodes=dict(nodes), edges=tuple(edges))


def _metric_distance(a: GeoPoint, b: GeoPoint) -> float:
    pts = georef.to_metric_many(np.array([a, b], dtype=float))
    return float(np.hypot(*(pts[0] - pts[1])))


# ---------------------------------------------------------------------------
# Local backend
# ---------------------------------------------------------------------------


class LocalRouter:
    """Exact pedestrian router over an in-memory road network.

    Waypoints snap to the nearest road node by metric distance (at most
    MAX_SNAP_DISTANCE_M away); consecutive snapped waypoints are joined by
    uniform-cost shortest paths over walkable edges.
    """

    def __init__(self, network: RoadNetwork, max_snap_m: float = MAX_SNAP_DISTANCE_M):
        self.network = network
        self.max_snap_m = float(max_snap_m)
        self._node_ids = sorted(network.nodes)
        geo = np.array([network.nodes[i] for i in self._node_ids], dtype=float)
        self._metric = georef.to_metric_many(geo)
        self._adjacency: dict[int, list[tuple[int, float]]] = {i: [] for i in self._node_ids}
        for e in network.edges:
            if e.walkable:
                self._adjacency[e.u].append((e.v, e.length_m))
                self._adjacency[e.v].append((e.u, e.length_m))
        for nbrs in self._adjacency.values():
            nbrs.sort()

    def _snap(self, point: GeoPoint) -> int:
        m = georef.to_metric_many(np.array([point], dtype=float))[0]
        d = np.hypot(self._metric[:, 0] - m[0], self._metric[:, 1] - m[1])
        best = int(np.argmin(d))
        if d[best] > self.max_snap_m:
            raise NoRouteFound(
                f"waypoint {point} is {d[best]:.0f} m from the nearest road node"
            )
        return self._node_ids[best]

    def _shortest(self, a: int, b: int) -> list[int]:
        if a == b:
            return [a]
        dist = {a: 0.0}
        prev: dict[int, int] = {}
        counter = count()
        heap = [(0.0, next(counter), a)]
        while heap:
            d, _, node = heapq.heappop(heap)
            if node == b:
                path = [b]
                while path[-1] != a:
                    path.append(prev[path[-1]])
                return path[::-1]
            if d > dist.get(node, math.inf):
                continue
            for nbr, w in self._adjacency[node]:
                nd = d + w
                if nd < dist.get(nbr, math.inf) - 1e-9:
                    dist[nbr] = nd
                    prev[nbr] = node
                    heapq.heappush(heap, (nd, next(counter), nbr))
        raise NoRouteFound(f"road graph has no walkable path between nodes {a} and {b}")

    def route(self, request: RoutingRequest) -> RoutePolyline:
        snapped = [self._snap(p) for p in request.waypoints]
        node_path: list[int] = [snapped[0]]
        for a, b in zip(snapped, snapped[1:]):
            node_path.extend(self._shortest(a, b)[1:])
        return RoutePolyline(self.network.nodes[i] for i in node_path)


# ---------------------------------------------------------------------------
# HTTP backend (GraphHopper dialect)
# ---------------------------------------------------------------------------


class HttpRouter:
    """Client for a GraphHopper-compatible routing endpoint."""

    def __init__(self, base_url: str, timeout_s: float = HTTP_TIMEOUT_S):
        self.base_url = base_url.rstrip("/")
        self.timeout_s = timeout_s

    def route(self, request: RoutingRequest) -> RoutePolyline:
        params = [("point", f"{lat:.7f},{lon:.7f}") for lat, lon in request.waypoints]
        params += [("profile", request.profile), ("points_encoded", "false")]
        response = self._get(params)
        if response.status_code != 200:
            try:
                message = response.json().get("message", "")
            except ValueError:
                raise MalformedResponse(
                    f"routing service answered HTTP {response.status_code}"
                ) from None
            raise NoRouteFound(f"routing service: {message or response.status_code}")
        try:
            payload = response.json()
            paths = payload["paths"]
            if not paths:
                raise NoRouteFound("routing service returned no path")
            coords = paths[0]["points"]["coordinates"]
            # response is longitude-first
            points = [(float(c[1]), float(c[0])) for c in coords]
        except NoRouteFound:
            raise
        except (ValueError, KeyError, TypeError, IndexError) as exc:
            raise MalformedResponse(f"cannot parse routing response: {exc}") from exc
        return RoutePolyline(points)

    def _get(self, params):
        last_exc: Exception | None = None
        for _ in range(2):  # one retry on transport failure
            try:
                return requests.get(
                    f"{self.base_url}/route", params=params, timeout=self.timeout_s
                )
            except (requests.ConnectionError, requests.Timeout) as exc:
                last_exc = exc
        raise BackendUnreachable(f"routing service unreachable: {last_exc}")


def route(backend, request: RoutingRequest) -> RoutePolyline:
    """Send one routing request to whichever backend is configured."""
    return backend.route(request)


# ---------------------------------------------------------------------------
# OSM XML parsing
# ---------------------------------------------------------------------------


def load_osm(path: str | Path) -> RoadNetwork:
    """Parse the highway subset of an OSM XML file into a road network.

    Ways carrying a ``highway`` tag become edge chains between their node
    references; motorways, trunks, and ``foot=no`` ways are kept but
    flagged unwalkable. Node coordinates are preserved exactly.
    """
    nodes: dict[int, GeoPoint] = {}
    edges: list[RoadEdge] = []
    try:
        for _, elem in ET.iterparse(str(path), events=("end",)):
            tag = elem.tag.rpartition("}")[2]
            if tag == "node":
                nodes[int(elem.attrib["id"])] = (
                    float(elem.attrib["lat"]),
                    float(elem.attrib["lon"]),
                )
            elif tag == "way":
                tags = {
                    t.attrib.get("k"): t.attrib.get("v")
                    for t in elem
                    if t.tag.rpartition("}")[2] == "tag"
                }
                highway = tags.get("highway")
                if highway is None:
                    elem.clear()
                    continue
                walkable = highway not in _UNWALKABLE_HIGHWAYS and tags.get("foot") != "no"
                refs = [
                    int(nd.attrib["ref"])
                    for nd in elem
                    if nd.tag.rpartition("}")[2] == "nd"
                ]
                way_id = elem.attrib.get("id", "?")
                for u, v in zip(refs, refs[1:]):
                    for ref in (u, v):
                        if ref not in nodes:
                            raise ParseError(
                                f"way {way_id} references missing node {ref}"
                            )
                    edges.append(
                        RoadEdge(
                            u=u,
                            v=v,
                            length_m=_metric_distance(nodes[u], nodes[v]),
                            walkable=walkable,
                        )
                    )
                elem.clear()
    except ET.ParseError as exc:
        raise ParseError(f"{path}: invalid OSM XML at {exc.position}: {exc.msg}") from exc
    except (KeyError, ValueError) as exc:
        raise ParseError(f"{path}: malformed OSM element: {exc}") from exc
    if not edges:
        raise EmptyNetwork(f"{path}: no highway ways found")
    return RoadNetwork(nodes=nodes, edges=tuple(edges))


def save_osm(network: RoadNetwork, path: str | Path, id_offset: int = 0) -> None:
    """Write a road network as the OSM XML subset ``load_osm`` reads.

    Each edge becomes its own two-node way; walkable edges are tagged
    ``highway=path``, unwalkable ones ``highway=motorway``.
    """
    lines = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        '<osm version="0.6" generator="trailtrace">',
    ]
    for node_id in sorted(network.nodes):
        lat, lon = network.nodes[node_id]
        lines.append(
            f'  <node id="{node_id + id_offset}" lat="{lat:.9f}" lon="{lon:.9f}"/>'
        )
    for i, edge in enumerate(network.edges, start=1):
        highway = "path" if edge.walkable else "motorway"
        lines.append(f'  <way id="{i + id_offset}">')
        lines.append(f'    <nd ref="{edge.u + id_offset}"/>')
        lines.append(f'    <nd ref="{edge.v + id_offset}"/>')
        lines.append(f'    <tag k="highway" v="{highway}"/>')
        lines.append("  </way>")
    lines.append("</osm>")
    Path(path).write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# GPX 1.1
# ---------------------------------------------------------------------------

GPX_NAMESPACE = "http://www.topografix.com/GPX/1/1"


def encode_gpx(route: RoutePolyline, creator: str = "trailtrace") -> str:
    """Serialize a route as a GPX 1.1 document with a single trk/trkseg."""
    lines = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<gpx version="1.1" creator="{creator}" xmlns="{GPX_NAMESPACE}">',
        "  <trk>",
        "    <trkseg>",
    ]
    for lat, lon in route.points:
        lines.append(f'      <trkpt lat="{lat:.7f}" lon="{lon:.7f}"></trkpt>')
    lines += ["    </trkseg>", "  </trk>", "</gpx>", ""]
    return "\n".join(lines)


def decode_gpx(text: str) -> RoutePolyline:
    """Parse a single-track GPX document back into a route polyline.

    Only ``trk`` tracks are accepted; documents holding routes (``rte``)
    or waypoints instead raise MalformedGpx.
    """
    try:
        root = ET.fromstring(text)
    except ET.ParseError as exc:
        raise MalformedGpx(f"invalid XML: {exc}") from exc
    if root.tag.rpartition("}")[2] != "gpx":
        raise MalformedGpx(f"root element is {root.tag!r}, expected gpx")
    tracks = [el for el in root if el.tag.rpartition("}")[2] == "trk"]
    if not tracks:
        raise MalformedGpx("document contains no trk element (tracks only)")
    if len(tracks) > 1:
        raise MalformedGpx("document contains more than one trk element")
    points: list[GeoPoint] = []
    for seg in tracks[0]:
        if seg.tag.rpartition("}")[2] != "trkseg":
            continue
        for pt in seg:
            if pt.tag.rpartition("}")[2] != "trkpt":
                continue
            try:
                points.append((float(pt.attrib["lat"]), float(pt.attrib["lon"])))
            except (KeyError, ValueError) as exc:
                raise MalformedGpx(f"bad trkpt: {exc}") from exc
    if len(points) < 2:
        raise MalformedGpx("track has fewer than two points")
    return RoutePolyline(points)
