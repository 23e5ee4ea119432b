"""Trail graph construction, simplification, and waypoint planning.

A skeleton becomes a dense pixel graph (8-connected foreground pixels), is
contracted to its structural nodes, denoised by clustering nearby nodes,
contracted again, and finally stitched into one connected component. The
simplified graph keeps, per edge, the pixel chain it contracted, so routes
can be recovered at pixel resolution.

Node roles after full simplification:

* ``leaf``         degree 1 (trail terminus),
* ``junction``     degree >= 3 (branching point),
* ``connector``    former leaf that gained a stitching edge (degree 2),
* ``cycle_anchor`` node introduced to keep a closed loop representable as
  two parallel edges (degree 2).
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, replace
from itertools import count

import numpy as np

from .errors import DisconnectedGraph, EmptySkeleton, SnapFailure
from .raster import Skeleton

__all__ = [
    "Pixel",
    "DenseGraph",
    "GraphEdge",
    "SimplifiedGraph",
    "WaypointPlan",
    "build_dense_graph",
    "contract_linear_paths",
    "collapse_nodes",
    "connect_components",
    "simplify",
    "plan_visit",
]

Pixel = tuple[int, int]

DEFAULT_TAU = 8.0
DEFAULT_SNAP_RADIUS = 50.0
DEFAULT_WAYPOINT_SPACING = 64.0

_OFFSETS = [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)]


def _dist(a: Pixel, b: Pixel) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1])


def _chain_length(chain: tuple[Pixel, ...]) -> float:
    return sum(_dist(chain[i], chain[i + 1]) for i in range(len(chain) - 1))


# ---------------------------------------------------------------------------
# Dense pixel graph
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DenseGraph:
    """Pixel-level graph: skeleton pixels joined to their 8-neighbors."""

    adjacency: dict[Pixel, tuple[Pixel, ...]]

    @property
    def nodes(self) -> list[Pixel]:
        return list(self.adjacency)

    def edges(self) -> set[frozenset]:
        return {
            frozenset((u, v))
            for u, nbrs in self.adjacency.items()
            for v in nbrs
        }

    def component_labels(self) -> dict[Pixel, int]:
        labels: dict[Pixel, int] = {}
        next_label = 0
        for seed in sorted(self.adjacency):
            if seed in labels:
                continue
            labels[seed] = next_label
            stack = [seed]
            while stack:
                node = stack.pop()
                for nbr in self.adjacency[node]:
                    if nbr not in labels:
                        labels[nbr] = next_label
                        stack.append(nbr)
            next_label += 1
        return labels


def build_dense_graph(skeleton: Skeleton) -> DenseGraph:
    """Nodes are foreground pixels; edges join pixels at Chebyshev distance 1."""
    pixels = sorted((int(r), int(c)) for r, c in skeleton.pixels())
    if not pixels:
        raise EmptySkeleton("no foreground pixels")
    pixel_set = set(pixels)
    adjacency = {}
    for r, c in pixels:
        nbrs = tuple(
            sorted((r + dr, c + dc) for dr, dc in _OFFSETS if (r + dr, c + dc) in pixel_set)
        )
        adjacency[(r, c)] = nbrs
    return DenseGraph(adjacency=adjacency)


# ---------------------------------------------------------------------------
# Simplified multigraph
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GraphEdge:
    """Undirected edge annotated with the pixel chain it contracted.

    ``chain`` starts at ``u`` and ends at ``v``; synthetic edges were added
    while stitching components and have a two-pixel chain.
    """

    eid: int
    u: Pixel
    v: Pixel
    chain: tuple[Pixel, ...]
    synthetic: bool = False

    def other(self, node: Pixel) -> Pixel:
        return self.v if node == self.u else self.u

    def chain_from(self, node: Pixel) -> tuple[Pixel, ...]:
        return self.chain if node == self.u else tuple(reversed(self.chain))

    @property
    def length(self) -> float:
        return _chain_length(self.chain)


@dataclass(frozen=True)
class SimplifiedGraph:
    """Contracted trail graph; may hold parallel edges between a node pair."""

    incident: dict[Pixel, tuple[int, ...]]
    edges: dict[int, GraphEdge]
    anchors: frozenset = frozenset()
    connectors: frozenset = frozenset()
    dense: DenseGraph | None = None

    @property
    def nodes(self) -> list[Pixel]:
        return list(self.incident)

    def degree(self, node: Pixel) -> int:
        return len(self.incident[node])

    def role(self, node: Pixel) -> str:
        d = self.degree(node)
        if d == 1 or d == 0:
            return "leaf"
        if d >= 3:
            return "junction"
        if node in self.anchors:
            return "cycle_anchor"
        if node in self.connectors:
            return "connector"
        return "interior"  # only in intermediate (pre-contraction) graphs

    def nodes_with_role(self, role: str) -> list[Pixel]:
        return [n for n in self.incident if self.role(n) == role]

    def key_nodes(self) -> list[Pixel]:
        """Nodes a route must reach: leaves, junctions, and cycle anchors."""
        return [n for n in self.incident if self.role(n) in ("leaf", "junction", "cycle_anchor")]

    def components(self) -> list[list[Pixel]]:
        seen: set[Pixel] = set()
        comps = []
        for seed in sorted(self.incident):
            if seed in seen:
                continue
            comp = [seed]
            seen.add(seed)
            stack = [seed]
            while stack:
                node = stack.pop()
                for eid in self.incident[node]:
                    nbr = self.edges[eid].other(node)
                    if nbr not in seen:
                        seen.add(nbr)
                        comp.append(nbr)
                        stack.append(nbr)
            comps.append(sorted(comp))
        return comps

    def synthetic_edge_count(self) -> int:
        return sum(1 for e in self.edges.values() if e.synthetic)

    def total_chain_length(self) -> float:
        return sum(e.length for e in self.edges.values())


class _Builder:
    def __init__(self) -> None:
        self.incident: dict[Pixel, list[int]] = {}
        self.edges: dict[int, GraphEdge] = {}
        self.anchors: set[Pixel] = set()
        self.connectors: set[Pixel] = set()
        self._ids = count()

    def ensure_node(self, node: Pixel) -> None:
        self.incident.setdefault(node, [])

    def add_edge(self, u: Pixel, v: Pixel, chain: tuple[Pixel, ...], synthetic: bool = False) -> None:
        eid = next(self._ids)
        self.edges[eid] = GraphEdge(eid=eid, u=u, v=v, chain=tuple(chain), synthetic=synthetic)
        self.incident.setdefault(u, []).append(eid)
        self.incident.setdefault(v, []).append(eid)

    def build(self, dense: DenseGraph | None = None) -> SimplifiedGraph:
        return SimplifiedGraph(
            incident={n: tuple(ids) for n, ids in self.incident.items()},
            edges=dict(self.edges),
            anchors=frozenset(self.anchors),
            connectors=frozenset(self.connectors),
            dense=dense,
        )


def _from_dense(dense: DenseGraph) -> SimplifiedGraph:
    builder = _Builder()
    for node in sorted(dense.adjacency):
        builder.ensure_node(node)
    for u in sorted(dense.adjacency):
        for v in dense.adjacency[u]:
            if u < v:
                builder.add_edge(u, v, (u, v))
    return builder.build(dense=dense)


# ---------------------------------------------------------------------------
# Stage 1 & 3: linear path contraction
# ---------------------------------------------------------------------------


def _walk_chain(
    g: SimplifiedGraph, start: Pixel, first_eid: int, stop_at
) -> tuple[list[Pixel], Pixel, list[int], bool]:
    """Follow edges through degree-2 nodes until a stopping node.

    Returns (pixel chain, end node, edge ids used, any-synthetic flag).
    """
    chain = [start]
    ids = []
    synthetic = False
    current = start
    eid = first_eid
    while True:
        edge = g.edges[eid]
        chain.extend(edge.chain_from(current)[1:])
        ids.append(eid)
        synthetic |= edge.synthetic
        nxt = edge.other(current)
        if stop_at(nxt) or nxt == start:
            return chain, nxt, ids, synthetic
        first, second = g.incident[nxt]
        eid = second if first == eid else first
        current = nxt


def _cycle_midpoint(chain: list[Pixel]) -> int:
    """Index of the interior chain pixel closest to half the arc length."""
    total = _chain_length(tuple(chain))
    acc = 0.0
    best_idx, best_err = 1, float("inf")
    for i in range(1, len(chain) - 1):
        acc += _dist(chain[i - 1], chain[i])
        err = abs(acc - total / 2.0)
        if err < best_err:
            best_idx, best_err = i, err
    return best_idx


def _add_closed_chain(builder: _Builder, chain: list[Pixel], synthetic: bool) -> None:
    """Split a closed loop into two parallel edges at its arc midpoint."""
    anchor = chain[0]
    mid = _cycle_midpoint(chain)
    midpoint = chain[mid]
    builder.add_edge(anchor, midpoint, tuple(chain[: mid + 1]), synthetic=synthetic)
    builder.add_edge(midpoint, anchor, tuple(chain[mid:]), synthetic=synthetic)
    builder.anchors.add(anchor)
    builder.anchors.add(midpoint)


def contract_linear_paths(g: SimplifiedGraph) -> SimplifiedGraph:
    """Replace every maximal chain of degree-2 nodes with a single edge.

    Parallel edges between the same endpoints are kept with their distinct
    chains. A chain that closes on itself (a loop hanging off one node, or
    a component that is entirely a cycle) is split at its arc midpoint into
    two parallel edges; the split nodes are recorded as cycle anchors.
    Connector nodes from component stitching are never contracted away.
    """
    protected = set(g.connectors)

    def is_terminal(node: Pixel) -> bool:
        return g.degree(node) != 2 or node in protected

    builder = _Builder()
    builder.connectors = set(g.connectors)
    visited: set[int] = set()

    for t in sorted(g.incident):
        if not is_terminal(t):
            continue
        builder.ensure_node(t)
        for eid in g.incident[t]:
            if eid in visited:
                continue
            chain, end, ids, synthetic = _walk_chain(g, t, eid, is_terminal)
            visited.update(ids)
            if end == t:
                _add_closed_chain(builder, chain, synthetic)
            else:
                builder.add_edge(t, end, tuple(chain), synthetic=synthetic)

    # components made entirely of degree-2 nodes: pure cycles
    remaining = sorted(set(g.edges) - visited)
    while remaining:
        nodes_left = sorted({n for eid in remaining for n in (g.edges[eid].u, g.edges[eid].v)})
        anchor = nodes_left[0]
        options = [eid for eid in g.incident[anchor] if eid not in visited]
        start_eid = min(options, key=lambda e: g.edges[e].chain_from(anchor)[1])
        chain, _, ids, synthetic = _walk_chain(g, anchor, start_eid, lambda n: False)
        visited.update(ids)
        _add_closed_chain(builder, chain, synthetic)
        remaining = sorted(set(g.edges) - visited)

    return builder.build(dense=g.dense)


# ---------------------------------------------------------------------------
# Stage 2: node collapsing
# ---------------------------------------------------------------------------


def _chains_overlap(a: tuple[Pixel, ...], b: tuple[Pixel, ...], tol: float) -> bool:
    """True when the two chains stay within ``tol`` of each other everywhere."""
    arr_a = np.asarray(a, dtype=float)
    arr_b = np.asarray(b, dtype=float)

    def one_way(src: np.ndarray, dst: np.ndarray) -> float:
        if len(src) > 32:
            idx = np.linspace(0, len(src) - 1, 32).round().astype(int)
            src = src[idx]
        d = np.hypot(
            src[:, None, 0] - dst[None, :, 0], src[:, None, 1] - dst[None, :, 1]
        )
        return float(d.min(axis=1).max())

    return one_way(arr_a, arr_b) <= tol and one_way(arr_b, arr_a) <= tol


def collapse_nodes(g: SimplifiedGraph, tau: float) -> SimplifiedGraph:
    """Merge clusters of nodes closer than ``tau`` (single linkage).

    Each cluster is replaced by the member nearest its centroid (ties go to
    the lexicographically smallest pixel). Edges whose endpoints land on
    the same representative are dropped. Edges that became parallel through
    the merge are deduplicated only when they trace the same corridor
    (chains within ``2 tau`` of each other), keeping the shortest chain;
    genuinely distinct routes between the merged endpoints, such as the two
    sides of a loop, stay parallel. Pre-existing parallel edges are never
    touched.
    """
    if tau < 0:
        raise ValueError("tau must be >= 0")
    nodes = sorted(g.incident)
    parent = {n: n for n in nodes}

    def find(n: Pixel) -> Pixel:
        while parent[n] != n:
            parent[n] = parent[parent[n]]
            n = parent[n]
        return n

    if tau > 0 and len(nodes) > 1:
        from scipy.spatial import cKDTree

        arr = np.array(nodes, dtype=float)
        for i, j in sorted(cKDTree(arr).query_pairs(tau)):
            ri, rj = find(nodes[i]), find(nodes[j])
            if ri != rj:
                parent[max(ri, rj)] = min(ri, rj)

    clusters: dict[Pixel, list[Pixel]] = {}
    for n in nodes:
        clusters.setdefault(find(n), []).append(n)

    rep_of: dict[Pixel, Pixel] = {}
    for members in clusters.values():
        centroid = np.mean(np.array(members, dtype=float), axis=0)
        rep = min(members, key=lambda m: (_dist(m, (centroid[0], centroid[1])), m))
        for m in members:
            rep_of[m] = rep

    builder = _Builder()
    builder.anchors = {rep_of[n] for n in g.anchors}
    builder.connectors = {rep_of[n] for n in g.connectors}
    for n in sorted(set(rep_of.values())):
        builder.ensure_node(n)

    untouched: dict[tuple[Pixel, Pixel], list[tuple[Pixel, ...]]] = {}
    retargeted: dict[tuple[Pixel, Pixel], list[tuple[float, tuple[Pixel, ...], bool]]] = {}
    for eid in sorted(g.edges):
        edge = g.edges[eid]
        u2, v2 = rep_of[edge.u], rep_of[edge.v]
        if u2 == v2:
            continue
        if (u2, v2) == (edge.u, edge.v):
            builder.add_edge(edge.u, edge.v, edge.chain, synthetic=edge.synthetic)
            untouched.setdefault((min(u2, v2), max(u2, v2)), []).append(edge.chain)
            continue
        chain = edge.chain
        if u2 != edge.u:
            chain = (u2,) + chain
        if v2 != edge.v:
            chain = chain + (v2,)
        key = (min(u2, v2), max(u2, v2))
        oriented = chain if chain[0] == key[0] else tuple(reversed(chain))
        retargeted.setdefault(key, []).append((_chain_length(chain), oriented, edge.synthetic))

    tol = max(2.0 * tau, 2.0)
    for key in sorted(retargeted):
        kept: list[tuple[Pixel, ...]] = list(untouched.get(key, []))
        for _, chain, synthetic in sorted(retargeted[key], key=lambda c: (c[0], c[1])):
            if any(_chains_overlap(chain, other, tol) for other in kept):
                continue  # same corridor as a surviving edge: redundant
            builder.add_edge(key[0], key[1], chain, synthetic=synthetic)
            kept.append(chain)

    return builder.build(dense=g.dense)


# ---------------------------------------------------------------------------
# Stage 4: component stitching
# ---------------------------------------------------------------------------


def connect_components(g: SimplifiedGraph) -> SimplifiedGraph:
    """Add edges between closest component pairs until one component remains.

    Every added edge joins the globally closest node pair between two
    components at that iteration and is flagged synthetic. Former leaves
    (or isolated nodes) left with degree 2 afterwards become connectors.
    """
    comps = [list(c) for c in g.components()]
    if len(comps) <= 1:
        return g

    builder = _Builder()
    builder.anchors = set(g.anchors)
    builder.connectors = set(g.connectors)
    for n in sorted(g.incident):
        builder.ensure_node(n)
    for eid in sorted(g.edges):
        e = g.edges[eid]
        builder.add_edge(e.u, e.v, e.chain, synthetic=e.synthetic)

    gained: set[Pixel] = set()
    while len(comps) > 1:
        best = None
        for i in range(len(comps)):
            for j in range(i + 1, len(comps)):
                for p in comps[i]:
                    for q in comps[j]:
                        cand = (_dist(p, q), min(p, q), max(p, q), i, j)
                        if best is None or cand[:3] < best[:3]:
                            best = cand
        _, p, q, i, j = best
        if (p, q) != (min(p, q), max(p, q)):
            p, q = q, p
        builder.add_edge(p, q, (p, q), synthetic=True)
        gained.update((p, q))
        comps[i] = comps[i] + comps[j]
        del comps[j]

    result = builder.build(dense=g.dense)
    new_connectors = set(g.connectors)
    for node in gained:
        if result.degree(node) == 2 and node not in result.anchors:
            new_connectors.add(node)
    return replace(result, connectors=frozenset(new_connectors))


def simplify(dense: DenseGraph, tau: float = DEFAULT_TAU) -> SimplifiedGraph:
    """Run the full four-stage reduction over a dense pixel graph.

    Contract linear paths, collapse nearby nodes at threshold ``tau``,
    contract again, then stitch components. No simplification happens
    after stitching, so connector nodes survive.
    """
    if not dense.adjacency:
        raise EmptySkeleton("dense graph has no nodes")
    g = _from_dense(dense)
    g = contract_linear_paths(g)
    g = collapse_nodes(g, tau)
    g = contract_linear_paths(g)
    g = connect_components(g)
    return replace(g, dense=dense)


# ---------------------------------------------------------------------------
# Visit planning
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class WaypointPlan:
    """Key-node tour plus its pixel-level realization."""

    visit_order: tuple[Pixel, ...]
    dense_path: tuple[Pixel, ...]
    waypoints: tuple[Pixel, ...]


def _gprime_shortest(
    g: SimplifiedGraph, source: Pixel
) -> tuple[dict[Pixel, float], dict[Pixel, tuple[Pixel, int]]]:
    dist = {source: 0.0}
    prev: dict[Pixel, tuple[Pixel, int]] = {}
    counter = count()
    heap = [(0.0, next(counter), source)]
    while heap:
        d, _, node = heapq.heappop(heap)
        if d > dist.get(node, float("inf")):
            continue
        for eid in g.incident[node]:
            edge = g.edges[eid]
            nbr = edge.other(node)
            nd = d + edge.length
            if nd < dist.get(nbr, float("inf")) - 1e-12:
                dist[nbr] = nd
                prev[nbr] = (node, eid)
                heapq.heappush(heap, (nd, next(counter), nbr))
    return dist, prev


def _dense_astar(
    dense: DenseGraph, start: Pixel, goal: Pixel, banned: set[frozenset]
) -> list[Pixel] | None:
    if start == goal:
        return [start]
    counter = count()
    best = {start: 0.0}
    prev: dict[Pixel, Pixel] = {}
    heap = [(_dist(start, goal), next(counter), start)]
    while heap:
        _, _, node = heapq.heappop(heap)
        if node == goal:
            path = [goal]
            while path[-1] != start:
                path.append(prev[path[-1]])
            return path[::-1]
        d = best[node]
        for nbr in dense.adjacency[node]:
            if banned and frozenset((node, nbr)) in banned:
                continue
            nd = d + _dist(node, nbr)
            if nd < best.get(nbr, float("inf")) - 1e-12:
                best[nbr] = nd
                prev[nbr] = node
                heapq.heappush(heap, (nd + _dist(nbr, goal), next(counter), nbr))
    return None


# Multiplier applied to already-walked edges while expanding tour legs:
# high enough that an unwalked loop side is preferred over retracing, yet
# retracing still happens where it is the only option (spur backtracking).
USED_EDGE_PENALTY = 8.0


def _gprime_route(
    g: SimplifiedGraph, u: Pixel, w: Pixel, used: set[int]
) -> list[tuple[Pixel, int]]:
    """Edge sequence of the cheapest u->w path, penalizing walked edges.

    Returns [(node, edge id), ...] hops leading from u to w.
    """
    dist = {u: 0.0}
    prev: dict[Pixel, tuple[Pixel, int]] = {}
    counter = count()
    heap = [(0.0, next(counter), u)]
    while heap:
        d, _, node = heapq.heappop(heap)
        if node == w:
            break
        if d > dist.get(node, float("inf")):
            continue
        for eid in g.incident[node]:
            edge = g.edges[eid]
            nbr = edge.other(node)
            cost = edge.length * (USED_EDGE_PENALTY if eid in used else 1.0)
            nd = d + cost
            if nd < dist.get(nbr, float("inf")) - 1e-12:
                dist[nbr] = nd
                prev[nbr] = (node, eid)
                heapq.heappush(heap, (nd, next(counter), nbr))
    if w not in dist:
        raise DisconnectedGraph(f"no path between {u} and {w}")
    hops: list[tuple[Pixel, int]] = []
    node = w
    while node != u:
        parent, eid = prev[node]
        hops.append((parent, eid))
        node = parent
    return hops[::-1]


def _leg_between(
    g: SimplifiedGraph, u: Pixel, w: Pixel, used: set[int]
) -> list[Pixel]:
    """Pixel path for one tour leg: expand the chains along a graph route."""
    if u == w:
        return [u]
    path = [u]
    for node, eid in _gprime_route(g, u, w, used):
        path.extend(g.edges[eid].chain_from(node)[1:])
        used.add(eid)
    return path


def _stitch_seams(path: list[Pixel], dense: DenseGraph, comp: dict[Pixel, int]) -> list[Pixel]:
    """Bridge non-adjacent consecutive pixels through the dense graph.

    Chains that were re-targeted during node collapsing can jump a few
    pixels at their ends; when both sides of a jump lie in the same
    skeleton component the gap is replaced by an actual pixel walk.
    Cross-component jumps (synthetic edges) are kept as-is.
    """
    out = [path[0]]
    for b in path[1:]:
        a = out[-1]
        if max(abs(a[0] - b[0]), abs(a[1] - b[1])) > 1 and comp.get(a) == comp.get(b):
            bridge = _dense_astar(dense, a, b, set())
            if bridge:
                out.extend(bridge[1:])
                continue
        out.append(b)
    return out


def _sample_waypoints(path: tuple[Pixel, ...], spacing: float) -> tuple[Pixel, ...]:
    if len(path) <= 1:
        return tuple(path)
    points = [path[0]]
    acc = 0.0
    for i in range(1, len(path)):
        step = _dist(path[i - 1], path[i])
        if acc + step > spacing and path[i - 1] != points[-1]:
            points.append(path[i - 1])
            acc = step
        else:
            acc += step
    points.append(path[-1])
    if len(points) > 2 and points[-2] == points[-1]:
        del points[-2]
    return tuple(points)


def plan_visit(
    g: SimplifiedGraph,
    start: Pixel,
    goal: Pixel,
    snap_radius: float = DEFAULT_SNAP_RADIUS,
    spacing: float = DEFAULT_WAYPOINT_SPACING,
) -> WaypointPlan:
    """Plan a start-to-goal tour through every leaf, junction, and anchor.

    The visit order is greedy nearest-neighbor over the remaining key
    nodes (shortest-path distances in the simplified graph), forced to end
    at the goal. Each consecutive pair is realized by expanding edge
    chains along the cheapest graph route, where edges already walked cost
    extra, so loop sides get covered instead of retraced; where retracing
    is the only option (spur backtracking) it still happens. Waypoints are
    sampled along the result every ``spacing`` pixels of arc length.
    """
    if g.dense is None:
        raise ValueError("graph is missing its dense source (use simplify())")
    if len(g.components()) != 1:
        raise DisconnectedGraph("visit planning requires a connected graph")

    def snap(p: Pixel, label: str) -> Pixel:
        node = min(g.incident, key=lambda n: (_dist(n, p), n))
        if _dist(node, p) > snap_radius:
            raise SnapFailure(f"{label} {p} is {_dist(node, p):.1f} px from the nearest node")
        return node

    start_node = snap(start, "start")
    goal_node = snap(goal, "goal")

    targets = set(g.key_nodes()) - {start_node, goal_node}
    order = [start_node]
    current = start_node
    while targets:
        dist, _ = _gprime_shortest(g, current)
        nxt = min(targets, key=lambda n: (dist.get(n, float("inf")), n))
        order.append(nxt)
        targets.discard(nxt)
        current = nxt
    if order[-1] != goal_node or len(order) == 1:
        order.append(goal_node)

    used: set[int] = set()
    path: list[Pixel] = [order[0]]
    for u, w in zip(order, order[1:]):
        leg = _leg_between(g, u, w, used)
        path.extend(leg[1:])

    comp = g.dense.component_labels()
    dense_path = tuple(_stitch_seams(path, g.dense, comp))
    return WaypointPlan(
        visit_order=tuple(order),
        dense_path=dense_path,
        waypoints=_sample_waypoints(dense_path, spacing),
    )


# ---------------------------------------------------------------------------
# Debug rendering
# ---------------------------------------------------------------------------

_ROLE_COLORS = {
    "leaf": (240, 200, 20),        # yellow
    "junction": (40, 180, 60),     # green
    "connector": (60, 110, 230),   # blue
    "cycle_anchor": (60, 110, 230),
}


def render_graph_overlay(image_rgb: np.ndarray, g: SimplifiedGraph, path) -> None:
    """Write the simplified graph drawn over the map as a PNG.

    Edge chains are orange (synthetic stitches gray); leaf nodes yellow,
    junctions green, connectors and cycle anchors blue.
    """
    from PIL import Image, ImageDraw

    img = Image.fromarray(np.asarray(image_rgb, dtype=np.uint8)).convert("RGB")
    draw = ImageDraw.Draw(img)
    for edge in g.edges.values():
        xy = [(c, r) for r, c in edge.chain]
        color = (130, 130, 130) if edge.synthetic else (235, 110, 35)
        draw.line(xy, fill=color, width=2)
    for node in g.incident:
        color = _ROLE_COLORS.get(g.role(node), (200, 40, 40))
        r, c = node
        draw.ellipse([c - 4, r - 4, c + 4, r + 4], fill=color, outline=(0, 0, 0))
    img.save(path, format="PNG")
