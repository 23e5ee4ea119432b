import math

import numpy as np
import pytest

from trailtrace import georef, raster, refine
from trailtrace.errors import EmptySet
from trailtrace.georef import AffineTransform
from trailtrace.raster import TrailMask
from trailtrace.refine import (
    RefinementState,
    Strategy,
    StrategyChoice,
    TrailPointSet,
    chamfer,
    densify_polyline,
    detect_high_error,
    insert_waypoint,
    polyline_point_distances,
    refine_route,
    run_strategy,
)
from trailtrace.routing import LocalRouter, RoadNetwork

LAT0, LON0 = 35.36, 139.62
M_PER_DEG_LAT = 111_000.0
M_PER_DEG_LON = 111_000.0 * math.cos(math.radians(LAT0))

# one pixel = one meter; row grows southward
PIXEL_TRANSFORM = AffineTransform(
    matrix=np.array([[-1.0 / M_PER_DEG_LAT, 0.0], [0.0, 1.0 / M_PER_DEG_LON]]),
    offset=np.array([LAT0, LON0]),
)


def px_geo(row, col):
    return tuple(PIXEL_TRANSFORM.apply((row, col)))


def chamfer_brute(r, t):
    r = np.asarray(r, float)
    t = np.asarray(t, float)
    d_rt = np.sqrt(((r[:, None, :] - t[None, :, :]) ** 2).sum(-1))
    return d_rt.min(axis=1).mean() / 2 + d_rt.min(axis=0).mean() / 2


# -- chamfer ---------------------------------------------------------------------


def test_chamfer_identical_sets_is_zero():
    pts = np.array([[0.0, 0.0], [5.0, 1.0], [9.0, -3.0]])
    assert chamfer(pts, pts) == 0.0


def test_chamfer_single_pair_hand_value():
    assert chamfer(np.array([[0.0, 0.0]]), np.array([[3.0, 4.0]])) == pytest.approx(5.0)


def test_chamfer_matches_brute_force():
    rng = np.random.default_rng(21)
    for _ in range(100):
        r = rng.uniform(-100, 100, size=(int(rng.integers(1, 51)), 2))
        t = rng.uniform(-100, 100, size=(int(rng.integers(1, 51)), 2))
        assert abs(chamfer(r, t) - chamfer_brute(r, t)) < 1e-9


def test_chamfer_symmetry_and_positivity():
    rng = np.random.default_rng(2)
    r = rng.uniform(0, 10, size=(20, 2))
    t = rng.uniform(0, 10, size=(30, 2))
    assert chamfer(r, t) == pytest.approx(chamfer(t, r))
    assert chamfer(r, t) > 0.0


def test_chamfer_zero_iff_equal_point_sets():
    a = np.array([[0.0, 0.0], [1.0, 1.0]])
    b = np.array([[1.0, 1.0], [0.0, 0.0]])  # same set, different order
    assert chamfer(a, b) == 0.0
    c = np.array([[0.0, 0.0], [1.0, 1.000001]])
    assert chamfer(a, c) > 0.0


def test_chamfer_empty_rejected():
    with pytest.raises(EmptySet):
        chamfer(np.empty((0, 2)), np.array([[0.0, 0.0]]))


# -- geometry helpers --------------------------------------------------------------


def test_polyline_distances_match_segment_brute_force():
    rng = np.random.default_rng(33)
    for _ in range(25):
        poly = rng.uniform(-50, 50, size=(int(rng.integers(2, 31)), 2))
        pts = rng.uniform(-60, 60, size=(40, 2))
        got = polyline_point_distances(pts, poly)
        want = np.full(len(pts), np.inf)
        for a, b in zip(poly, poly[1:]):
            ab = b - a
            denom = ab @ ab
            for i, p in enumerate(pts):
                if denom == 0:
                    d = np.linalg.norm(p - a)
                else:
                    s = np.clip((p - a) @ ab / denom, 0, 1)
                    d = np.linalg.norm(p - (a + s * ab))
                want[i] = min(want[i], d)
        np.testing.assert_allclose(got, want, atol=1e-9)


def test_densify_respects_spacing_and_keeps_vertices():
    poly = np.array([[0.0, 0.0], [0.0, 35.0], [40.0, 35.0]])
    dense = densify_polyline(poly, spacing=10.0)
    steps = np.hypot(*np.diff(dense, axis=0).T)
    assert steps.max() <= 10.0 + 1e-9
    for v in poly:
        assert (np.abs(dense - v).sum(axis=1) < 1e-12).any()


# -- divergence detection ----------------------------------------------------------


def straight_trail_mask(row=50, cols=(50, 250), shape=(300, 300)):
    bits = np.zeros(shape, np.uint8)
    bits[row, cols[0] : cols[1] + 1] = 1
    return TrailMask(bits=bits)


def test_detect_route_on_trail_reports_nothing():
    trail = TrailPointSet.from_mask(straight_trail_mask(), PIXEL_TRANSFORM)
    route_pts = [px_geo(50, c) for c in range(50, 251, 10)]
    from trailtrace.routing import RoutePolyline

    worst_route, worst_trail = detect_high_error(RoutePolyline(route_pts), trail)
    assert worst_route is None and worst_trail is None


def test_detect_reports_displaced_route_point():
    from trailtrace.routing import RoutePolyline

    trail = TrailPointSet.from_mask(straight_trail_mask(), PIXEL_TRANSFORM)
    displaced = px_geo(150, 150)  # 100 m south of the trail
    route = RoutePolyline([px_geo(50, 50), displaced, px_geo(50, 250)])
    worst_route, _ = detect_high_error(route, trail, eps_route=20.0)
    assert worst_route is not None
    np.testing.assert_allclose(worst_route, displaced, atol=1e-12)


def test_detect_reports_skipped_spur_tip():
    from trailtrace.routing import RoutePolyline

    bits = np.zeros((300, 300), np.uint8)
    bits[50, 50:251] = 1
    bits[50:151, 150] = 1  # spur heading south, tip at (150, 150)
    trail = TrailPointSet.from_mask(TrailMask(bits=bits), PIXEL_TRANSFORM)
    route = RoutePolyline([px_geo(50, c) for c in range(50, 251, 5)])
    worst_route, worst_trail = detect_high_error(route, trail, eps_route=20.0, eps_trail=20.0)
    assert worst_route is None
    assert worst_trail == (150, 150)


# -- waypoint insertion -------------------------------------------------------------


def test_insert_near_midpoint_of_pair():
    wps = [px_geo(0, 0), px_geo(0, 100)]
    out = insert_waypoint(wps, px_geo(5, 50))
    assert len(out) == 3 and out[1] == px_geo(5, 50)
    assert out[0] == wps[0] and out[-1] == wps[-1]


def test_insert_near_last_leg_of_five():
    wps = [px_geo(0, c) for c in (0, 100, 200, 300, 400)]
    out = insert_waypoint(wps, px_geo(8, 350))
    assert out.index(px_geo(8, 350)) == 4
    assert len(out) == 6


def test_insert_duplicate_lands_adjacent():
    wps = [px_geo(0, 0), px_geo(0, 100), px_geo(0, 200)]
    out = insert_waypoint(wps, px_geo(0, 100))
    assert len(out) == 4
    k = out.index(px_geo(0, 100))
    assert out[k + 1] == px_geo(0, 100)


# -- refinement loop ----------------------------------------------------------------


def u_shape_fixture():
    """Trail draws three sides of a rectangle; the road grid has a shortcut."""
    nodes_px = {
        0: (50, 50),     # A: start
        1: (50, 350),    # B
        2: (250, 350),   # C
        3: (250, 50),    # D: goal
        4: (150, 50),    # midpoint of the shortcut, breaks up the long edge
    }
    nodes = {i: px_geo(*p) for i, p in nodes_px.items()}
    net = RoadNetwork.from_segments(nodes, [(0, 1), (1, 2), (2, 3), (3, 4), (4, 0)])
    bits = np.zeros((400, 400), np.uint8)
    bits[50, 50:351] = 1     # A-B
    bits[50:251, 350] = 1    # B-C
    bits[250, 50:351] = 1    # C-D
    trail = TrailPointSet.from_mask(TrailMask(bits=bits), PIXEL_TRANSFORM)
    return nodes, LocalRouter(net), trail


def test_refine_returns_initial_route_when_already_good():
    nodes_px = {0: (50, 50), 1: (50, 350)}
    nodes = {i: px_geo(*p) for i, p in nodes_px.items()}
    net = RoadNetwork.from_segments(nodes, [(0, 1)])
    trail = TrailPointSet.from_mask(straight_trail_mask(50, (50, 350), (400, 400)), PIXEL_TRANSFORM)
    state = refine_route([nodes[0], nodes[1]], trail, PIXEL_TRANSFORM, LocalRouter(net))
    assert state.iterations == 0
    assert state.waypoints == (nodes[0], nodes[1])


def test_refine_covers_detour_and_improves_monotonically():
    nodes, router, trail = u_shape_fixture()
    baseline = refine_route([nodes[0], nodes[3]], trail, PIXEL_TRANSFORM, router, max_iters=0)
    state = refine_route([nodes[0], nodes[3]], trail, PIXEL_TRANSFORM, router)
    assert state.iterations <= 3
    assert state.chamfer_m < baseline.chamfer_m / 5  # detour actually covered
    # best chamfer after k iterations is non-increasing in k
    results = [
        refine_route([nodes[0], nodes[3]], trail, PIXEL_TRANSFORM, router, max_iters=k).chamfer_m
        for k in range(4)
    ]
    assert all(a >= b - 1e-12 for a, b in zip(results, results[1:]))


def test_refine_max_iters_zero_returns_initial():
    nodes, router, trail = u_shape_fixture()
    state = refine_route([nodes[0], nodes[3]], trail, PIXEL_TRANSFORM, router, max_iters=0)
    assert state.iterations == 0
    assert state.waypoints == (nodes[0], nodes[3])


class CountingRouter:
    def __init__(self, inner):
        self.inner = inner
        self.calls = 0

    def route(self, request):
        self.calls += 1
        return self.inner.route(request)


def test_end_to_end_without_refinement_is_single_request():
    nodes, router, trail = u_shape_fixture()
    counting = CountingRouter(router)
    choice = StrategyChoice(Strategy.END_TO_END, refine=False)
    state = run_strategy(choice, nodes[0], nodes[3], trail, PIXEL_TRANSFORM, counting)
    assert counting.calls == 1
    assert state.iterations == 0


def test_hybrid_refined_beats_unrefined_on_detour():
    from trailtrace import trailgraph

    nodes, router, trail = u_shape_fixture()
    skel = raster.skeletonize(TrailMask(bits=trail_pixels_to_mask(trail)))
    dense = trailgraph.build_dense_graph(skel)
    g = trailgraph.simplify(dense)
    plan = trailgraph.plan_visit(g, (50, 50), (250, 50))
    on = run_strategy(
        StrategyChoice(Strategy.HYBRID, refine=True),
        nodes[0], nodes[3], trail, PIXEL_TRANSFORM, router, plan=plan,
    )
    off = run_strategy(
        StrategyChoice(Strategy.HYBRID, refine=False),
        nodes[0], nodes[3], trail, PIXEL_TRANSFORM, router, plan=plan,
    )
    assert on.chamfer_m <= off.chamfer_m + 1e-12


def trail_pixels_to_mask(trail: TrailPointSet, shape=(400, 400)):
    bits = np.zeros(shape, np.uint8)
    bits[trail.pixels[:, 0], trail.pixels[:, 1]] = 1
    return bits


def test_graph_seed_beats_end_to_end_on_detour_without_refinement():
    from trailtrace import trailgraph

    nodes, router, trail = u_shape_fixture()
    skel = raster.skeletonize(TrailMask(bits=trail_pixels_to_mask(trail)))
    g = trailgraph.simplify(trailgraph.build_dense_graph(skel))
    plan = trailgraph.plan_visit(g, (50, 50), (250, 50))
    graph_state = run_strategy(
        StrategyChoice(Strategy.GRAPH_BASED, refine=False),
        nodes[0], nodes[3], trail, PIXEL_TRANSFORM, router, plan=plan,
    )
    e2e_state = run_strategy(
        StrategyChoice(Strategy.END_TO_END, refine=False),
        nodes[0], nodes[3], trail, PIXEL_TRANSFORM, router,
    )
    assert graph_state.chamfer_m < e2e_state.chamfer_m
