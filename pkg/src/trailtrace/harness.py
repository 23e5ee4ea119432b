"""Dataset manifest handling, metrics, synthetic scenes, and experiments.

Synthetic scenes provide desk-scale ground truth for the whole pipeline: a
jittered road grid anchored near 35N 139.6E at roughly one meter per
pixel, a trail walked over its edges, the rendered map image, the exact
georeferencing transform with five exact control points, and the true
trail mask (the rendered stroke). Because the drawn trail follows road
edges exactly, a pedestrian router can in principle reproduce it, which
pins down what the extraction pipeline should achieve.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from PIL import Image

from . import georef, raster, refine, routing, trailgraph
from .errors import DimensionMismatch, EmptySet, InvalidConfig, TrailTraceError
from .georef import AffineTransform, GcpSet, GroundControlPoint
from .raster import MapImage, TrailColor, TrailMask
from .refine import StrategyChoice, TrailPointSet
from .routing import LocalRouter, RoadNetwork, RoutePolyline

__all__ = [
    "TrailEntry",
    "MapEntry",
    "DatasetManifest",
    "load_gcp_file",
    "save_gcp_file",
    "iou",
    "directional_distances",
    "SceneConfig",
    "SyntheticScene",
    "generate_scene",
    "TrialResult",
    "EvalReport",
    "evaluate_trail",
    "evaluate_manifest",
    "run_ablation",
]

BACKGROUND_RGB = (245, 241, 230)
ROAD_RGB = (150, 150, 150)
TRAIL_RGB = (170, 79, 55)
ROAD_WIDTH_PX = 3

ANCHOR_LAT = 35.36
ANCHOR_LON = 139.62
M_PER_DEG_LAT = 111_132.0


# ---------------------------------------------------------------------------
# Manifest & GCP files
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TrailEntry:
    trail_id: str
    color: tuple[int, int, int]
    start: tuple[float, float]  # (lat, lon)
    goal: tuple[float, float]
    mask_path: str  # ground-truth mask, relative to the manifest

    def to_json(self) -> dict:
        return {
            "id": self.trail_id,
            "color": list(self.color),
            "start": list(self.start),
            "goal": list(self.goal),
            "mask": self.mask_path,
        }


@dataclass(frozen=True)
class MapEntry:
    map_id: str
    image_path: str
    gcp_path: str
    trails: tuple[TrailEntry, ...]

    def to_json(self) -> dict:
        return {
            "id": self.map_id,
            "image": self.image_path,
            "gcps": self.gcp_path,
            "trails": [t.to_json() for t in self.trails],
        }


@dataclass(frozen=True)
class DatasetManifest:
    """Index of maps and their trails; all paths relative to ``root``."""

    maps: tuple[MapEntry, ...]
    root: Path

    @classmethod
    def load(cls, path: str | Path) -> "DatasetManifest":
        path = Path(path)
        data = json.loads(path.read_text())
        maps = []
        for m in data["maps"]:
            trails = tuple(
                TrailEntry(
                    trail_id=t["id"],
                    color=tuple(int(c) for c in t["color"]),
                    start=tuple(float(x) for x in t["start"]),
                    goal=tuple(float(x) for x in t["goal"]),
                    mask_path=t["mask"],
                )
                for t in m["trails"]
            )
            colors = [t.color for t in trails]
            if len(set(colors)) != len(colors):
                raise InvalidConfig(f"map {m['id']}: trail colors are not distinct")
            maps.append(
                MapEntry(
                    map_id=m["id"],
                    image_path=m["image"],
                    gcp_path=m["gcps"],
                    trails=trails,
                )
            )
        manifest = cls(maps=tuple(maps), root=path.parent)
        for entry in manifest.maps:
            for rel in [entry.image_path, entry.gcp_path] + [t.mask_path for t in entry.trails]:
                if not (manifest.root / rel).exists():
                    raise InvalidConfig(f"manifest references missing file: {rel}")
        return manifest

    def save(self, path: str | Path) -> None:
        payload = {"maps": [m.to_json() for m in self.maps]}
        Path(path).write_text(json.dumps(payload, indent=2) + "\n")


def load_gcp_file(path: str | Path) -> GcpSet:
    """Read a GCP JSON file: a list of {"pixel": [row, col], "geo": [lat, lon]}."""
    data = json.loads(Path(path).read_text())
    return GcpSet(
        GroundControlPoint(pixel=tuple(map(float, item["pixel"])), geo=tuple(map(float, item["geo"])))
        for item in data
    )


def save_gcp_file(gcps: GcpSet, path: str | Path) -> None:
    payload = [{"pixel": list(p.pixel), "geo": list(p.geo)} for p in gcps.points]
    Path(path).write_text(json.dumps(payload, indent=2) + "\n")


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------


def iou(a: TrailMask, b: TrailMask) -> float:
    """Intersection over union of two masks; 1.0 when both are empty."""
    if a.bits.shape != b.bits.shape:
        raise DimensionMismatch(f"mask shapes differ: {a.bits.shape} vs {b.bits.shape}")
    inter = int(np.logical_and(a.bits, b.bits).sum())
    union = int(np.logical_or(a.bits, b.bits).sum())
    return 1.0 if union == 0 else inter / union


def directional_distances(
    route: RoutePolyline, trail: TrailPointSet, densify: bool = True
) -> tuple[float, float]:
    """(route-to-trail, trail-to-route) mean distances in meters.

    The first is the mean distance from route points (resampled every 10 m
    unless ``densify`` is off) to their nearest trail pixel; the second is
    the mean distance from trail pixels to the nearest route segment.
    """
    if len(trail.metric) == 0:
        raise EmptySet("trail point set is empty")
    route_m = refine.route_metric(route)
    pts = refine.densify_polyline(route_m) if densify else route_m
    d_route, _ = trail.tree().query(pts)
    d_trail = refine.polyline_point_distances(trail.metric, route_m)
    return float(d_route.mean()), float(d_trail.mean())


# ---------------------------------------------------------------------------
# Synthetic scenes
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SceneConfig:
    grid: int = 7                # road nodes per side
    spacing_px: float = 90.0     # grid pitch
    jitter_px: float = 10.0      # node position noise
    stroke_px: int = 5           # trail stroke width
    trail_edges: int = 12        # walk length for path trails
    image_px: int = 768
    kind: str = "path"           # "path" or "loop"
    spurs: int = 0               # out-and-back detours drawn on the trail
    noise: float = 0.0           # RGB noise sigma for the degraded rendering
    margin_px: float = 60.0
    anchor: tuple[float, float] | None = None  # fixed (lat, lon) of pixel (0, 0)

    def validate(self) -> None:
        if self.grid < 2:
            raise InvalidConfig("grid needs at least 2 nodes per side")
        if self.kind not in ("path", "loop"):
            raise InvalidConfig(f"unknown scene kind {self.kind!r}")
        if self.kind == "loop" and self.grid < 3:
            raise InvalidConfig("loop scenes need a grid of at least 3x3")
        if self.stroke_px < 1 or self.trail_edges < 1:
            raise InvalidConfig("stroke width and trail length must be positive")
        needed = 2 * self.margin_px + (self.grid - 1) * self.spacing_px + 4 * self.jitter_px
        if needed > self.image_px:
            raise InvalidConfig(
                f"grid does not fit: needs {needed:.0f} px, image is {self.image_px} px"
            )
        if self.noise < 0:
            raise InvalidConfig("noise sigma must be >= 0")


@dataclass(frozen=True)
class SyntheticScene:
    seed: int
    config: SceneConfig
    network: RoadNetwork
    trail_nodes: tuple[int, ...]     # ground-truth node sequence, spurs included
    node_pixels: dict[int, tuple[float, float]]
    image: MapImage
    transform: AffineTransform       # true pixel -> geo mapping
    gcps: GcpSet
    true_mask: TrailMask

    @property
    def start(self) -> tuple[float, float]:
        return self.network.nodes[self.trail_nodes[0]]

    @property
    def goal(self) -> tuple[float, float]:
        return self.network.nodes[self.trail_nodes[-1]]

    def trail_polyline_px(self) -> list[tuple[float, float]]:
        return [self.node_pixels[i] for i in self.trail_nodes]

    def router(self) -> LocalRouter:
        return LocalRouter(self.network)


def _stroke_mask(
    shape: tuple[int, int], points_rc: Sequence[tuple[float, float]], width: float
) -> np.ndarray:
    """Rasterize a constant-width polyline: pixel centers within width/2.

    Exact Euclidean stamping keeps the stroke width independent of segment
    angle (library line drawing measures width along an axis and thins
    oblique strokes).
    """
    h, w = shape
    canvas = np.zeros(shape, dtype=bool)
    half = width / 2.0
    pts = np.asarray(points_rc, dtype=float).reshape(-1, 2)
    segments = list(zip(pts, pts[1:])) if len(pts) > 1 else [(pts[0], pts[0])]
    for a, b in segments:
        r0 = max(int(math.floor(min(a[0], b[0]) - half - 1)), 0)
        r1 = min(int(math.ceil(max(a[0], b[0]) + half + 1)), h - 1)
        c0 = max(int(math.floor(min(a[1], b[1]) - half - 1)), 0)
        c1 = min(int(math.ceil(max(a[1], b[1]) + half + 1)), w - 1)
        if r1 < r0 or c1 < c0:
            continue
        rr, cc = np.meshgrid(np.arange(r0, r1 + 1), np.arange(c0, c1 + 1), indexing="ij")
        ab = b - a
        denom = float(ab @ ab)
        if denom == 0.0:
            d = np.hypot(rr - a[0], cc - a[1])
        else:
            t = np.clip(((rr - a[0]) * ab[0] + (cc - a[1]) * ab[1]) / denom, 0.0, 1.0)
            d = np.hypot(rr - (a[0] + t * ab[0]), cc - (a[1] + t * ab[1]))
        canvas[r0 : r1 + 1, c0 : c1 + 1] |= d <= half
    return canvas


def _true_transform(rng: np.random.Generator, anchor: tuple[float, float] | None) -> AffineTransform:
    if anchor is None:
        lat0 = ANCHOR_LAT + float(rng.uniform(-0.05, 0.05))
        lon0 = ANCHOR_LON + float(rng.uniform(-0.1, 0.1))
    else:
        lat0, lon0 = anchor
    m_per_deg_lon = M_PER_DEG_LAT * math.cos(math.radians(lat0))
    matrix = np.array([[-1.0 / M_PER_DEG_LAT, 0.0], [0.0, 1.0 / m_per_deg_lon]])
    return AffineTransform(matrix=matrix, offset=np.array([lat0, lon0]))


def _grid_walk(rng: np.random.Generator, grid: int, steps: int) -> list[int]:
    """Self-avoiding random walk over the grid, indexed row-major."""

    def neighbors(idx: int) -> list[int]:
        r, c = divmod(idx, grid)
        out = []
        if r > 0:
            out.append(idx - grid)
        if r < grid - 1:
            out.append(idx + grid)
        if c > 0:
            out.append(idx - 1)
        if c < grid - 1:
            out.append(idx + 1)
        return out

    start = int(rng.integers(0, grid * grid))
    walk = [start]
    seen = {start}
    for _ in range(steps):
        options = [n for n in neighbors(walk[-1]) if n not in seen]
        if not options:
            break
        nxt = int(options[rng.integers(0, len(options))])
        walk.append(nxt)
        seen.add(nxt)
    return walk


def _grid_loop(rng: np.random.Generator, grid: int) -> list[int]:
    """Rectangle cycle over grid cells, starting/ending at its top-left.

    The top-left corner stays off the grid boundary so a spur can always
    be grafted at the start (loop trails need a junction there to snap).
    """
    r0 = int(rng.integers(1, grid - 1))
    r1 = int(rng.integers(r0 + 1, grid))
    c0 = int(rng.integers(1, grid - 1))
    c1 = int(rng.integers(c0 + 1, grid))
    top = [r0 * grid + c for c in range(c0, c1 + 1)]
    right = [r * grid + c1 for r in range(r0 + 1, r1 + 1)]
    bottom = [r1 * grid + c for c in range(c1 - 1, c0 - 1, -1)]
    left = [r * grid + c0 for r in range(r1 - 1, r0 - 1, -1)]
    return top + right + bottom + left


def _insert_spurs(
    rng: np.random.Generator, walk: list[int], grid: int, spurs: int, at_start: bool
) -> list[int]:
    """Graft out-and-back detours onto the walk at distinct positions."""

    def neighbors(idx: int) -> list[int]:
        r, c = divmod(idx, grid)
        out = []
        if r > 0:
            out.append(idx - grid)
        if r < grid - 1:
            out.append(idx + grid)
        if c > 0:
            out.append(idx - 1)
        if c < grid - 1:
            out.append(idx + 1)
        return out

    result = list(walk)
    on_trail = set(result)
    remaining = spurs
    # a spur at the start guarantees the trail begins at a graph junction,
    # which loop trails need for snapping
    positions = ([0] if at_start else []) + sorted(
        rng.choice(range(1, len(result) - 1), size=min(spurs, max(len(result) - 2, 0)), replace=False).tolist()
        if len(result) > 2
        else []
    )
    inserted = 0
    offset = 0
    for pos in positions:
        if remaining <= 0:
            break
        node = result[pos + offset]
        options = [n for n in neighbors(node) if n not in on_trail]
        if not options:
            continue
        tip = int(options[rng.integers(0, len(options))])
        result[pos + offset + 1 : pos + offset + 1] = [tip, node]
        on_trail.add(tip)
        offset += 2
        remaining -= 1
        inserted += 1
    return result


def generate_scene(seed: int, config: SceneConfig = SceneConfig()) -> SyntheticScene:
    """Deterministically build a synthetic map with full ground truth."""
    config.validate()
    rng = np.random.default_rng(seed)
    grid = config.grid

    transform = _true_transform(rng, config.anchor)

    node_pixels: dict[int, tuple[float, float]] = {}
    for r in range(grid):
        for c in range(grid):
            idx = r * grid + c
            row = config.margin_px + r * config.spacing_px + float(rng.uniform(-config.jitter_px, config.jitter_px))
            col = config.margin_px + c * config.spacing_px + float(rng.uniform(-config.jitter_px, config.jitter_px))
            node_pixels[idx] = (row, col)

    nodes_geo = {i: tuple(transform.apply(p)) for i, p in node_pixels.items()}
    segments = []
    for r in range(grid):
        for c in range(grid):
            idx = r * grid + c
            if c + 1 < grid:
                segments.append((idx, idx + 1))
            if r + 1 < grid:
                segments.append((idx, idx + grid))
    network = RoadNetwork.from_segments(nodes_geo, segments)

    if config.kind == "loop":
        walk = _grid_loop(rng, grid)
    else:
        walk = _grid_walk(rng, grid, config.trail_edges)
        if len(walk) < 3:
            walk = [0, 1, 2] if grid >= 3 else [0, 1]
    walk = _insert_spurs(rng, walk, grid, config.spurs, at_start=config.kind == "loop" and config.spurs > 0)

    shape = (config.image_px, config.image_px)
    roads = np.zeros(shape, dtype=bool)
    for u, v in segments:
        roads |= _stroke_mask(shape, [node_pixels[u], node_pixels[v]], ROAD_WIDTH_PX)
    trail_rc = [node_pixels[i] for i in walk]
    trail_bits = _stroke_mask(shape, trail_rc, config.stroke_px)
    true_mask = TrailMask(bits=trail_bits)

    rgb = np.empty((*shape, 3), dtype=np.uint8)
    rgb[:] = BACKGROUND_RGB
    rgb[roads] = ROAD_RGB
    rgb[trail_bits] = TRAIL_RGB
    if config.noise > 0:
        noisy = rgb.astype(float) + rng.normal(0.0, config.noise, size=rgb.shape)
        rgb = np.clip(noisy, 0, 255).astype(np.uint8)

    h, w = config.image_px, config.image_px
    gcp_pixels = [(20.0, 20.0), (20.0, w - 20.0), (h - 20.0, 20.0), (h - 20.0, w - 20.0), (h / 2.0, w / 2.0)]
    gcps = GcpSet(
        GroundControlPoint(pixel=p, geo=tuple(transform.apply(p))) for p in gcp_pixels
    )

    return SyntheticScene(
        seed=seed,
        config=config,
        network=network,
        trail_nodes=tuple(walk),
        node_pixels=node_pixels,
        image=MapImage(rgb=rgb),
        transform=transform,
        gcps=gcps,
        true_mask=true_mask,
    )


# ---------------------------------------------------------------------------
# Evaluation & ablation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TrialResult:
    map_id: str
    trail_id: str
    strategy: str
    input_kind: str  # "truth" or "predicted"
    iou: float | None
    chamfer_m: float | None
    gpx_to_trail_m: float | None
    trail_to_gpx_m: float | None
    iterations: int | None
    error: str | None = None


@dataclass(frozen=True)
class EvalReport:
    rows: tuple[TrialResult, ...]

    def ok_rows(self, strategy: str | None = None) -> list[TrialResult]:
        return [
            r
            for r in self.rows
            if r.error is None and (strategy is None or r.strategy == strategy)
        ]

    def aggregate(self, strategy: str) -> dict[str, float]:
        values = np.array([r.chamfer_m for r in self.ok_rows(strategy)], dtype=float)
        if len(values) == 0:
            return {"n": 0}
        q25, q75 = np.percentile(values, [25, 75])  # linear interpolation
        return {
            "n": int(len(values)),
            "mean": float(values.mean()),
            "std": float(values.std()),  # population std
            "median": float(np.median(values)),
            "iqr": float(q75 - q25),
        }

    def strategies(self) -> list[str]:
        seen: list[str] = []
        for r in self.rows:
            if r.strategy not in seen:
                seen.append(r.strategy)
        return seen

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(
            [
                "map_id", "trail_id", "strategy", "input", "iou",
                "chamfer_m", "gpx_to_trail_m", "trail_to_gpx_m", "iterations", "error",
            ]
        )
        for r in self.rows:
            writer.writerow(
                [
                    r.map_id, r.trail_id, r.strategy, r.input_kind,
                    "" if r.iou is None else f"{r.iou:.4f}",
                    "" if r.chamfer_m is None else f"{r.chamfer_m:.3f}",
                    "" if r.gpx_to_trail_m is None else f"{r.gpx_to_trail_m:.3f}",
                    "" if r.trail_to_gpx_m is None else f"{r.trail_to_gpx_m:.3f}",
                    "" if r.iterations is None else r.iterations,
                    r.error or "",
                ]
            )
        return buf.getvalue()

    def format_table(self) -> str:
        lines = [f"{'strategy':<14} {'n':>4} {'mean':>9} {'std':>9} {'median':>9} {'iqr':>9}"]
        for strategy in self.strategies():
            agg = self.aggregate(strategy)
            if agg["n"] == 0:
                lines.append(f"{strategy:<14} {0:>4} {'-':>9} {'-':>9} {'-':>9} {'-':>9}")
                continue
            lines.append(
                f"{strategy:<14} {agg['n']:>4} {agg['mean']:>9.2f} {agg['std']:>9.2f}"
                f" {agg['median']:>9.2f} {agg['iqr']:>9.2f}"
            )
        return "\n".join(lines)


def evaluate_trail(
    input_mask: TrailMask,
    true_mask: TrailMask,
    transform: AffineTransform,
    start: tuple[float, float],
    goal: tuple[float, float],
    choice: StrategyChoice,
    backend,
    map_id: str = "map",
    trail_id: str = "trail",
    input_kind: str = "truth",
    tau: float = trailgraph.DEFAULT_TAU,
    snap_radius: float = trailgraph.DEFAULT_SNAP_RADIUS,
    spacing: float = trailgraph.DEFAULT_WAYPOINT_SPACING,
    max_iters: int = refine.DEFAULT_MAX_ITERS,
) -> TrialResult:
    """Run mask -> graph -> strategy -> metrics for one trail.

    The refinement target comes from the input mask (truth or predicted);
    reported distances always compare against the ground-truth mask.
    """
    mask_iou = None if input_kind == "truth" else iou(input_mask, true_mask)
    try:
        inverse = transform.invert()
        plan = None
        if choice.strategy in (refine.Strategy.GRAPH_BASED, refine.Strategy.HYBRID):
            skel = raster.skeletonize(input_mask)
            graph = trailgraph.simplify(trailgraph.build_dense_graph(skel), tau=tau)
            start_px = tuple(np.round(inverse.apply(start)).astype(int))
            goal_px = tuple(np.round(inverse.apply(goal)).astype(int))
            plan = trailgraph.plan_visit(
                graph, start_px, goal_px, snap_radius=snap_radius, spacing=spacing
            )
        target = TrailPointSet.from_mask(input_mask, transform)
        state = refine.run_strategy(
            choice, start, goal, target, transform, backend, plan=plan, max_iters=max_iters
        )
        truth = TrailPointSet.from_mask(true_mask, transform)
        g2t, t2g = directional_distances(state.route, truth)
        return TrialResult(
            map_id=map_id,
            trail_id=trail_id,
            strategy=choice.label(),
            input_kind=input_kind,
            iou=mask_iou,
            chamfer_m=(g2t + t2g) / 2.0,
            gpx_to_trail_m=g2t,
            trail_to_gpx_m=t2g,
            iterations=state.iterations,
        )
    except TrailTraceError as exc:
        return TrialResult(
            map_id=map_id,
            trail_id=trail_id,
            strategy=choice.label(),
            input_kind=input_kind,
            iou=mask_iou,
            chamfer_m=None,
            gpx_to_trail_m=None,
            trail_to_gpx_m=None,
            iterations=None,
            error=f"{type(exc).__name__}: {exc}",
        )


def evaluate_manifest(
    manifest: DatasetManifest,
    strategies: Sequence[StrategyChoice],
    backend,
    predicted: bool = False,
    color_threshold: float = raster.DEFAULT_COLOR_THRESHOLD,
    **knobs,
) -> EvalReport:
    """Evaluate every manifest trail under each strategy.

    Georeferencing is fitted from each map's GCP file. With ``predicted``
    the input mask comes from color segmentation of the map image;
    otherwise the ground-truth mask drives the pipeline. Per-trail
    failures are recorded on their rows rather than raised.
    """
    rows: list[TrialResult] = []
    for entry in manifest.maps:
        image = raster.load_image(manifest.root / entry.image_path)
        transform = georef.fit_affine(load_gcp_file(manifest.root / entry.gcp_path))
        for trail in entry.trails:
            true_mask = raster.load_mask(manifest.root / trail.mask_path)
            if predicted:
                input_mask = raster.segment_by_color(
                    image, TrailColor(trail.color), threshold=color_threshold
                )
                input_kind = "predicted"
            else:
                input_mask, input_kind = true_mask, "truth"
            for choice in strategies:
                rows.append(
                    evaluate_trail(
                        input_mask,
                        true_mask,
                        transform,
                        trail.start,
                        trail.goal,
                        choice,
                        backend,
                        map_id=entry.map_id,
                        trail_id=trail.trail_id,
                        input_kind=input_kind,
                        **knobs,
                    )
                )
    return EvalReport(rows=tuple(rows))


def run_ablation(
    scenes: Sequence[SyntheticScene],
    strategies: Sequence[StrategyChoice],
    backend=None,
    predicted: bool = False,
    color_threshold: float = raster.DEFAULT_COLOR_THRESHOLD,
) -> EvalReport:
    """Evaluate every (scene, strategy) pair into one report.

    Without an explicit backend each scene routes over its own road
    network. With ``predicted`` the input mask comes from color
    segmentation of the (optionally noisy) rendering instead of the truth.
    """
    rows: list[TrialResult] = []
    for scene in scenes:
        scene_backend = backend if backend is not None else scene.router()
        if predicted:
            input_mask = raster.segment_by_color(
                scene.image, TrailColor(TRAIL_RGB), threshold=color_threshold
            )
            input_kind = "predicted"
        else:
            input_mask = scene.true_mask
            input_kind = "truth"
        for choice in strategies:
            rows.append(
                evaluate_trail(
                    input_mask,
                    scene.true_mask,
                    scene.transform,
                    scene.start,
                    scene.goal,
                    choice,
                    scene_backend,
                    map_id=f"scene_{scene.seed:03d}",
                    trail_id="trail_0",
                    input_kind=input_kind,
                )
            )
    return EvalReport(rows=tuple(rows))
