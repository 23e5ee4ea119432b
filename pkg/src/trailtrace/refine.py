"""Chamfer metric, divergence detection, and iterative route refinement.

All distances are planar meters (UTM zone 54N). The trail enters as the
foreground pixels of its mask; the route enters as a geographic polyline.
Each refinement iteration finds where route and trail diverge most,
proposes one corrective waypoint per divergence kind, re-routes, and keeps
the candidate with the lower Chamfer distance while it keeps improving.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from . import georef, routing
from .errors import (
    BackendUnreachable,
    EmptySet,
    MalformedResponse,
    NoRouteFound,
)
from .georef import AffineTransform
from .raster import TrailMask
from .routing import RoutePolyline, RoutingRequest
from .trailgraph import WaypointPlan

__all__ = [
    "TrailPointSet",
    "RefinementState",
    "Strategy",
    "StrategyChoice",
    "chamfer",
    "densify_polyline",
    "polyline_point_distances",
    "detect_high_error",
    "insert_waypoint",
    "refine_route",
    "run_strategy",
]

log = logging.getLogger("trailtrace.refine")

DEFAULT_EPS_ROUTE_M = 25.0
DEFAULT_EPS_TRAIL_M = 25.0
DEFAULT_MAX_ITERS = 10
DENSIFY_SPACING_M = 10.0
MAX_TRAIL_POINTS = 20_000
SUBSAMPLE_SEED = 0


@dataclass(frozen=True)
class TrailPointSet:
    """Trail mask pixels with their projected metric positions."""

    pixels: np.ndarray  # (N, 2) int rows/cols
    metric: np.ndarray  # (N, 2) easting/northing meters

    @classmethod
    def from_mask(
        cls,
        mask: TrailMask,
        transform: AffineTransform,
        max_points: int = MAX_TRAIL_POINTS,
        seed: int = SUBSAMPLE_SEED,
    ) -> "TrailPointSet":
        pixels = mask.pixels()
        if len(pixels) == 0:
            raise EmptySet("trail mask has no foreground pixels")
        if len(pixels) > max_points:
            rng = np.random.default_rng(seed)
            keep = np.sort(rng.choice(len(pixels), size=max_points, replace=False))
            pixels = pixels[keep]
        metric = georef.to_metric_many(transform.apply_many(pixels.astype(float)))
        return cls(pixels=pixels, metric=metric)

    def tree(self) -> cKDTree:
        if not hasattr(self, "_tree"):
            object.__setattr__(self, "_tree", cKDTree(self.metric))
        return self._tree


def chamfer(route_pts: np.ndarray, trail_pts: np.ndarray) -> float:
    """Symmetric mean nearest-neighbor distance between two point sets.

    ``(1/2|R|) sum_r min_t |r-t| + (1/2|T|) sum_t min_r |t-r|`` in meters.
    """
    r = np.asarray(route_pts, dtype=float).reshape(-1, 2)
    t = np.asarray(trail_pts, dtype=float).reshape(-1, 2)
    if len(r) == 0 or len(t) == 0:
        raise EmptySet("chamfer distance needs two nonempty point sets")
    d_rt, _ = cKDTree(t).query(r)
    d_tr, _ = cKDTree(r).query(t)
    return float(d_rt.mean() / 2.0 + d_tr.mean() / 2.0)


def densify_polyline(points_m: np.ndarray, spacing: float = DENSIFY_SPACING_M) -> np.ndarray:
    """Resample a metric polyline so consecutive points are <= spacing apart.

    Original vertices are kept; extra points are interpolated on the
    segments. Makes the point-based Chamfer term reflect the path rather
    than the backend's vertex density.
    """
    pts = np.asarray(points_m, dtype=float).reshape(-1, 2)
    if len(pts) < 2:
        return pts
    out = [pts[0]]
    for a, b in zip(pts, pts[1:]):
        gap = float(np.hypot(*(b - a)))
        if gap > spacing:
            steps = int(np.ceil(gap / spacing))
            for k in range(1, steps):
                out.append(a + (b - a) * (k / steps))
        out.append(b)
    return np.array(out)


def polyline_point_distances(points_m: np.ndarray, polyline_m: np.ndarray) -> np.ndarray:
    """Distance from each point to the nearest polyline segment."""
    pts = np.asarray(points_m, dtype=float).reshape(-1, 2)
    poly = np.asarray(polyline_m, dtype=float).reshape(-1, 2)
    if len(poly) == 1:
        return np.hypot(*(pts - poly[0]).T)
    best = np.full(len(pts), np.inf)
    for a, b in zip(poly, poly[1:]):
        ab = b - a
        denom = float(ab @ ab)
        if denom == 0.0:
            d = np.hypot(*(pts - a).T)
        else:
            t = np.clip(((pts - a) @ ab) / denom, 0.0, 1.0)
            proj = a + t[:, None] * ab
            d = np.hypot(*(pts - proj).T)
        np.minimum(best, d, out=best)
    return best


def route_metric(route: RoutePolyline) -> np.ndarray:
    return georef.to_metric_many(route.as_array())


def route_chamfer(route: RoutePolyline, trail: TrailPointSet, densify: bool = True) -> float:
    pts = route_metric(route)
    if densify:
        pts = densify_polyline(pts)
    return chamfer(pts, trail.metric)


def detect_high_error(
    route: RoutePolyline,
    trail: TrailPointSet,
    eps_route: float = DEFAULT_EPS_ROUTE_M,
    eps_trail: float = DEFAULT_EPS_TRAIL_M,
) -> tuple[tuple[float, float] | None, tuple[int, int] | None]:
    """Find the two kinds of route/trail divergence, if any exceed bounds.

    Returns (worst route point as (lat, lon) or None, worst trail pixel as
    (row, col) or None). The route point is the one farthest from every
    trail pixel; the trail pixel is the one farthest from the route
    polyline (point-to-segment distance).
    """
    route_m = route_metric(route)
    d_route, _ = trail.tree().query(route_m)
    worst_route = None
    i = int(np.argmax(d_route))
    if d_route[i] > eps_route:
        worst_route = route.points[i]

    d_trail = polyline_point_distances(trail.metric, route_m)
    worst_trail = None
    j = int(np.argmax(d_trail))
    if d_trail[j] > eps_trail:
        worst_trail = (int(trail.pixels[j][0]), int(trail.pixels[j][1]))
    return worst_route, worst_trail


def insert_waypoint(
    waypoints: list[tuple[float, float]], new_point: tuple[float, float]
) -> list[tuple[float, float]]:
    """Insert a geographic point between its metrically nearest waypoint pair.

    Endpoints are never displaced: the insertion index is always interior.
    """
    if len(waypoints) < 2:
        raise ValueError("waypoint list needs at least two entries")
    metric = georef.to_metric_many(np.array(waypoints, dtype=float))
    target = georef.to_metric_many(np.array([new_point], dtype=float))[0]
    best_seg, best_d = 0, np.inf
    for k in range(len(metric) - 1):
        d = float(polyline_point_distances(target[None, :], metric[k : k + 2])[0])
        if d < best_d:
            best_seg, best_d = k, d
    out = list(waypoints)
    out.insert(best_seg + 1, (float(new_point[0]), float(new_point[1])))
    return out


@dataclass(frozen=True)
class RefinementState:
    """Best route found so far and the loop bookkeeping that produced it.

    ``history`` holds the best Chamfer after the seed query and after each
    adopted iteration; it is non-increasing by construction.
    """

    route: RoutePolyline
    waypoints: tuple[tuple[float, float], ...]
    chamfer_m: float
    iterations: int
    history: tuple[float, ...] = ()


_ROUTING_FAILURES = (NoRouteFound, BackendUnreachable, MalformedResponse)


def refine_route(
    initial_waypoints,
    trail: TrailPointSet,
    transform: AffineTransform,
    backend,
    max_iters: int = DEFAULT_MAX_ITERS,
    eps_route: float = DEFAULT_EPS_ROUTE_M,
    eps_trail: float = DEFAULT_EPS_TRAIL_M,
    densify: bool = True,
) -> RefinementState:
    """Iteratively insert corrective waypoints while Chamfer improves.

    Per iteration two candidates are built from the current best
    waypoints: one inserts the trail pixel nearest the worst route point,
    the other inserts the worst trail pixel directly (both mapped to
    geographic space). Each candidate costs one routing request; the lower
    Chamfer result is adopted only if it beats the current best. The loop
    stops on no divergence, no improvement, candidate failures, or after
    ``max_iters`` iterations. Errors from the initial query propagate.
    """
    waypoints = [(float(p[0]), float(p[1])) for p in initial_waypoints]
    best_route = routing.route(backend, RoutingRequest(waypoints))
    best_chamfer = route_chamfer(best_route, trail, densify)
    history = [best_chamfer]
    iterations = 0

    for index in range(1, max_iters + 1):
        worst_route, worst_trail = detect_high_error(best_route, trail, eps_route, eps_trail)
        if worst_route is None and worst_trail is None:
            break

        candidates: list[tuple[str, tuple[float, float]]] = []
        if worst_route is not None:
            m = georef.to_metric_many(np.array([worst_route]))[0]
            _, idx = trail.tree().query(m)
            pixel = trail.pixels[int(idx)]
            candidates.append(("route-error", tuple(transform.apply(pixel.astype(float)))))
        if worst_trail is not None:
            candidates.append(("trail-error", tuple(transform.apply(worst_trail))))

        iterations = index
        outcomes = []
        for label, geo_point in candidates:
            trial_waypoints = insert_waypoint(waypoints, geo_point)
            try:
                trial_route = routing.route(backend, RoutingRequest(trial_waypoints))
            except _ROUTING_FAILURES as exc:
                log.info("iteration %d: %s candidate failed (%s)", index, label, exc)
                continue
            outcomes.append(
                (route_chamfer(trial_route, trail, densify), label, trial_waypoints, trial_route)
            )

        if not outcomes:
            log.info("iteration %d: all candidates failed; keeping best", index)
            break
        winner = min(outcomes, key=lambda o: o[0])  # stable: route-error wins ties
        log.info(
            "iteration %d: %s adopted=%s",
            index,
            " ".join(f"{label}={c:.2f}m" for c, label, *_ in outcomes),
            winner[1] if winner[0] < best_chamfer else "none",
        )
        if winner[0] >= best_chamfer:
            break
        best_chamfer, _, waypoints, best_route = winner
        history.append(best_chamfer)

    return RefinementState(
        route=best_route,
        waypoints=tuple(waypoints),
        chamfer_m=best_chamfer,
        iterations=iterations,
        history=tuple(history),
    )


class Strategy(enum.Enum):
    END_TO_END = "e2e"
    GRAPH_BASED = "graph"
    HYBRID = "hybrid"


@dataclass(frozen=True)
class StrategyChoice:
    """Initial-query strategy plus the iterative-refinement switch."""

    strategy: Strategy
    refine: bool = True

    def label(self) -> str:
        return f"{self.strategy.value}{'+ir' if self.refine else ''}"


def _seed_waypoints(
    strategy: Strategy,
    start: tuple[float, float],
    goal: tuple[float, float],
    transform: AffineTransform,
    plan: WaypointPlan | None,
) -> list[list[tuple[float, float]]]:
    seeds = []
    if strategy in (Strategy.END_TO_END, Strategy.HYBRID):
        seeds.append([start, goal])
    if strategy in (Strategy.GRAPH_BASED, Strategy.HYBRID):
        if plan is None:
            raise ValueError("graph-based strategy needs a waypoint plan")
        pixels = np.array(plan.waypoints, dtype=float)
        seeds.append([tuple(p) for p in transform.apply_many(pixels)])
    if strategy is Strategy.HYBRID:
        seeds.reverse()  # graph seed first: it wins exact Chamfer ties
    return seeds


def run_strategy(
    choice: StrategyChoice,
    start: tuple[float, float],
    goal: tuple[float, float],
    trail: TrailPointSet,
    transform: AffineTransform,
    backend,
    plan: WaypointPlan | None = None,
    max_iters: int = DEFAULT_MAX_ITERS,
    eps_route: float = DEFAULT_EPS_ROUTE_M,
    eps_trail: float = DEFAULT_EPS_TRAIL_M,
    densify: bool = True,
) -> RefinementState:
    """Route with the chosen seeding strategy, then optionally refine.

    End-to-end seeds with [start, goal]; graph-based seeds with the plan's
    sampled waypoints; hybrid routes both seeds and continues with the
    lower-Chamfer one. With refinement off the seed route is returned
    directly (end-to-end then costs exactly one routing request).
    """
    seeds = _seed_waypoints(choice.strategy, start, goal, transform, plan)

    best: tuple[float, list, RoutePolyline] | None = None
    for waypoints in seeds:
        route_out = routing.route(backend, RoutingRequest(waypoints))
        score = route_chamfer(route_out, trail, densify)
        if best is None or score < best[0]:
            best = (score, waypoints, route_out)
    seed_chamfer, seed_waypoints_, seed_route = best

    if not choice.refine:
        return RefinementState(
            route=seed_route,
            waypoints=tuple(seed_waypoints_),
            chamfer_m=seed_chamfer,
            iterations=0,
            history=(seed_chamfer,),
        )
    return refine_route(
        seed_waypoints_,
        trail,
        transform,
        backend,
        max_iters=max_iters,
        eps_route=eps_route,
        eps_trail=eps_trail,
        densify=densify,
    )
