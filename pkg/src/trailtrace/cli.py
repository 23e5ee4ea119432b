"""Command-line pipeline: extract, segment, synth, evaluate, ablate.

``extract`` runs the full map-to-GPX pipeline on one trail and logs one
line per stage (stages a configuration skips still get their line). Exit
codes: 0 success, 2 configuration error, 3 pipeline error; either failure
prints a one-line diagnostic naming the failing stage.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw

from . import georef, harness, raster, refine, routing, trailgraph
from .errors import TrailTraceError
from .refine import Strategy, StrategyChoice

log = logging.getLogger("trailtrace.pipeline")

_STRATEGIES = {
    "e2e": Strategy.END_TO_END,
    "graph": Strategy.GRAPH_BASED,
    "hybrid": Strategy.HYBRID,
}


class ConfigError(Exception):
    pass


@dataclass
class PipelineConfig:
    image: str | None
    gcps: str | None
    color: tuple[int, int, int] | None
    mask: str | None
    start: tuple[float, float]
    goal: tuple[float, float]
    strategy: str
    refine_enabled: bool
    router: str | None
    osm: str | None
    gpx: str
    truth_mask: str | None = None
    color_threshold: float = raster.DEFAULT_COLOR_THRESHOLD
    tau: float = trailgraph.DEFAULT_TAU
    snap_radius: float = trailgraph.DEFAULT_SNAP_RADIUS
    spacing: float = trailgraph.DEFAULT_WAYPOINT_SPACING
    eps_route: float = refine.DEFAULT_EPS_ROUTE_M
    eps_trail: float = refine.DEFAULT_EPS_TRAIL_M
    max_iters: int = refine.DEFAULT_MAX_ITERS
    seed: int = 0
    debug_mask: str | None = None
    debug_graph: str | None = None
    debug_route: str | None = None

    def validate(self) -> None:
        if (self.color is None) == (self.mask is None):
            raise ConfigError("exactly one of --color or --mask is required")
        if (self.router is None) == (self.osm is None):
            raise ConfigError("exactly one of --router or --osm is required")
        if self.mask is None and self.image is None:
            raise ConfigError("--image is required when segmenting by color")
        if self.gcps is None:
            raise ConfigError("--gcps is required")
        if self.strategy not in _STRATEGIES:
            raise ConfigError(f"unknown strategy {self.strategy!r}")
        for label, path in [
            ("image", self.image),
            ("GCP file", self.gcps),
            ("mask", self.mask),
            ("truth mask", self.truth_mask),
            ("OSM file", self.osm),
        ]:
            if path is not None and not Path(path).exists():
                raise ConfigError(f"{label} not found: {path}")


def _parse_color(text: str) -> tuple[int, int, int]:
    parts = text.split(",")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("color must be R,G,B")
    return tuple(int(p) for p in parts)


def _parse_geo(text: str) -> tuple[float, float]:
    parts = text.split(",")
    if len(parts) != 2:
        raise argparse.ArgumentTypeError("position must be LAT,LON")
    return (float(parts[0]), float(parts[1]))


def _make_backend(config: PipelineConfig):
    if config.router is not None:
        return routing.HttpRouter(config.router)
    return routing.LocalRouter(routing.load_osm(config.osm))


def _render_route_overlay(image_rgb, route_px, truth_px, path) -> None:
    img = Image.fromarray(np.asarray(image_rgb, dtype=np.uint8)).convert("RGB")
    draw = ImageDraw.Draw(img)
    if truth_px is not None:
        draw.line([(c, r) for r, c in truth_px], fill=(20, 20, 20), width=2)
    draw.line([(c, r) for r, c in route_px], fill=(255, 140, 0), width=3)
    img.save(path, format="PNG")


def run_extract(config: PipelineConfig) -> int:
    """Full pipeline for one trail; returns the process exit code."""
    config.validate()
    stage = "load"
    try:
        image = raster.load_image(config.image) if config.image else None
        log.info("load: image=%s", config.image or "none (mask input)")

        stage = "georeference"
        gcps = harness.load_gcp_file(config.gcps)
        transform = georef.fit_affine(gcps)
        log.info("georeference: %d GCPs fitted", len(gcps))

        stage = "segment"
        if config.mask is not None:
            mask = raster.load_mask(config.mask)
            log.info("segment: skipped (mask provided)")
        else:
            mask = raster.segment_by_color(
                image, raster.TrailColor(config.color), threshold=config.color_threshold
            )
            log.info(
                "segment: color=%s threshold=%g pixels=%d",
                config.color, config.color_threshold, mask.count(),
            )
        if config.debug_mask:
            raster.save_mask(mask, config.debug_mask)

        choice = StrategyChoice(_STRATEGIES[config.strategy], refine=config.refine_enabled)
        needs_graph = choice.strategy in (Strategy.GRAPH_BASED, Strategy.HYBRID)

        stage = "skeletonize"
        skeleton = raster.skeletonize(mask) if needs_graph else None
        log.info("skeletonize: %s", f"{int(skeleton.bits.sum())} pixels" if skeleton else "skipped (end-to-end query)")

        stage = "graph"
        plan = None
        if needs_graph:
            graph = trailgraph.simplify(trailgraph.build_dense_graph(skeleton), tau=config.tau)
            log.info(
                "graph: %d nodes (%d leaves, %d junctions), %d edges",
                len(graph.incident),
                len(graph.nodes_with_role("leaf")),
                len(graph.nodes_with_role("junction")),
                len(graph.edges),
            )
            if config.debug_graph and image is not None:
                trailgraph.render_graph_overlay(image.rgb, graph, config.debug_graph)
        else:
            log.info("graph: skipped (end-to-end query)")

        stage = "plan"
        inverse = transform.invert()
        if needs_graph:
            start_px = tuple(np.round(inverse.apply(config.start)).astype(int))
            goal_px = tuple(np.round(inverse.apply(config.goal)).astype(int))
            plan = trailgraph.plan_visit(
                graph, start_px, goal_px,
                snap_radius=config.snap_radius, spacing=config.spacing,
            )
            log.info(
                "plan: %d key nodes visited, %d waypoints",
                len(plan.visit_order), len(plan.waypoints),
            )
        else:
            log.info("plan: skipped (end-to-end query)")

        stage = "route"
        backend = _make_backend(config)
        trail = refine.TrailPointSet.from_mask(mask, transform, seed=config.seed)
        state = refine.run_strategy(
            choice, config.start, config.goal, trail, transform, backend,
            plan=plan, max_iters=config.max_iters,
            eps_route=config.eps_route, eps_trail=config.eps_trail,
        )
        log.info("route: %d points via %s", len(state.route), config.strategy)

        stage = "refine"
        log.info(
            "refine: %s, %d iterations, chamfer vs input mask %.2f m",
            "enabled" if config.refine_enabled else "disabled",
            state.iterations, state.chamfer_m,
        )

        stage = "write"
        Path(config.gpx).write_text(routing.encode_gpx(state.route))
        log.info("write: %s (%d track points)", config.gpx, len(state.route))
        if config.debug_route and image is not None:
            route_px = [tuple(inverse.apply(p)) for p in state.route.points]
            _render_route_overlay(image.rgb, route_px, None, config.debug_route)

        if config.truth_mask:
            truth = raster.load_mask(config.truth_mask)
            truth_set = refine.TrailPointSet.from_mask(truth, transform, seed=config.seed)
            g2t, t2g = harness.directional_distances(state.route, truth_set)
            print(f"chamfer_vs_truth_m={(g2t + t2g) / 2.0:.3f}")
        return 0
    except TrailTraceError as exc:
        print(f"error at stage {stage}: {exc}", file=sys.stderr)
        return 3


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


_EXTRACT_KEYS = [
    "image", "gcps", "color", "mask", "start", "goal", "strategy",
    "refine_enabled", "router", "osm", "gpx", "truth_mask", "color_threshold",
    "tau", "snap_radius", "spacing", "eps_route", "eps_trail", "max_iters",
    "seed", "debug_mask", "debug_graph", "debug_route",
]

_EXTRACT_DEFAULTS = dict(
    strategy="graph",
    refine_enabled=True,
    gpx="route.gpx",
    color_threshold=raster.DEFAULT_COLOR_THRESHOLD,
    tau=trailgraph.DEFAULT_TAU,
    snap_radius=trailgraph.DEFAULT_SNAP_RADIUS,
    spacing=trailgraph.DEFAULT_WAYPOINT_SPACING,
    eps_route=refine.DEFAULT_EPS_ROUTE_M,
    eps_trail=refine.DEFAULT_EPS_TRAIL_M,
    max_iters=refine.DEFAULT_MAX_ITERS,
    seed=0,
)


def cmd_extract(args) -> int:
    # precedence: explicit flags, then --config file entries, then defaults
    file_values = {}
    if args.config:
        file_values = json.loads(Path(args.config).read_text())
        unknown = set(file_values) - set(_EXTRACT_KEYS)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    values = {}
    for key in _EXTRACT_KEYS:
        flag = getattr(args, key)
        if flag is not None:
            values[key] = flag
        elif key in file_values:
            raw = file_values[key]
            values[key] = tuple(raw) if key in ("color", "start", "goal") and raw else raw
        else:
            values[key] = _EXTRACT_DEFAULTS.get(key)
    if values["start"] is None or values["goal"] is None:
        raise ConfigError("--start and --goal are required")
    return run_extract(PipelineConfig(**values))


def cmd_segment(args) -> int:
    image = raster.load_image(args.image)
    mask = raster.segment_by_color(
        image, raster.TrailColor(args.color), threshold=args.color_threshold
    )
    raster.save_mask(mask, args.out)
    log.info("segment: wrote %s (%d trail pixels)", args.out, mask.count())
    return 0


def cmd_synth(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    maps = []
    networks = []
    for index in range(args.scenes):
        kind = "loop" if index % 2 else "path"
        anchor = (35.0 + 0.02 * (index % 25), 139.0 + 0.05 * (index // 25))
        config = harness.SceneConfig(
            kind=kind,
            spurs=1 + index % 2,
            trail_edges=args.trail_edges,
            image_px=args.image_px,
            stroke_px=args.stroke,
            noise=args.noise,
            anchor=anchor,
        )
        scene = harness.generate_scene(args.seed + index, config)
        scene_dir = out / f"scene_{index:03d}"
        scene_dir.mkdir(exist_ok=True)
        Image.fromarray(scene.image.rgb).save(scene_dir / "map.png")
        raster.save_mask(scene.true_mask, scene_dir / "truth.png")
        harness.save_gcp_file(scene.gcps, scene_dir / "gcps.json")
        networks.append(scene.network)
        maps.append(
            harness.MapEntry(
                map_id=f"scene_{index:03d}",
                image_path=f"scene_{index:03d}/map.png",
                gcp_path=f"scene_{index:03d}/gcps.json",
                trails=(
                    harness.TrailEntry(
                        trail_id="trail_0",
                        color=harness.TRAIL_RGB,
                        start=scene.start,
                        goal=scene.goal,
                        mask_path=f"scene_{index:03d}/truth.png",
                    ),
                ),
            )
        )
    merged_nodes: dict[int, tuple[float, float]] = {}
    merged_edges = []
    for index, net in enumerate(networks):
        offset = (index + 1) * 1_000_000
        for node_id, pos in net.nodes.items():
            merged_nodes[node_id + offset] = pos
        for e in net.edges:
            merged_edges.append(
                routing.RoadEdge(u=e.u + offset, v=e.v + offset, length_m=e.length_m, walkable=e.walkable)
            )
    routing.save_osm(routing.RoadNetwork(nodes=merged_nodes, edges=tuple(merged_edges)), out / "roads.osm")
    harness.DatasetManifest(maps=tuple(maps), root=out).save(out / "manifest.json")
    log.info("synth: wrote %d scenes under %s", args.scenes, out)
    return 0


def _strategy_choices(text: str) -> list[StrategyChoice]:
    choices = []
    for token in text.split(","):
        token = token.strip()
        refine_on = token.endswith("+ir")
        name = token[:-3] if refine_on else token
        if name not in _STRATEGIES:
            raise ConfigError(f"unknown strategy {token!r}")
        choices.append(StrategyChoice(_STRATEGIES[name], refine=refine_on))
    return choices


def _manifest_backend(args):
    if args.router:
        return routing.HttpRouter(args.router)
    if args.osm:
        return routing.LocalRouter(routing.load_osm(args.osm))
    raise ConfigError("exactly one of --router or --osm is required")


def cmd_evaluate(args) -> int:
    manifest = harness.DatasetManifest.load(args.manifest)
    backend = _manifest_backend(args)
    report = harness.evaluate_manifest(
        manifest, _strategy_choices(args.strategies), backend, predicted=args.predicted
    )
    print(report.format_table())
    if args.csv:
        Path(args.csv).write_text(report.to_csv())
    failures = [r for r in report.rows if r.error]
    for r in failures:
        log.warning("%s/%s %s failed: %s", r.map_id, r.trail_id, r.strategy, r.error)
    return 0


def cmd_ablate(args) -> int:
    manifest = harness.DatasetManifest.load(args.manifest)
    backend = _manifest_backend(args)
    strategies = _strategy_choices(args.strategies)
    frames = []
    for predicted in ([False, True] if args.input == "both" else [args.input == "predicted"]):
        frames.append(
            harness.evaluate_manifest(manifest, strategies, backend, predicted=predicted)
        )
    report = harness.EvalReport(rows=tuple(r for f in frames for r in f.rows))
    print(report.format_table())
    if args.csv:
        Path(args.csv).write_text(report.to_csv())
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="trailtrace",
        description="Extract navigable GPX routes from trails drawn on scanned maps.",
    )
    parser.add_argument("--log", help="write stage/iteration logs to this file instead of stderr")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug-level logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", help="run the full map-to-GPX pipeline for one trail")
    p.add_argument("--image", help="scanned map PNG")
    p.add_argument("--gcps", help="ground control points JSON")
    p.add_argument("--color", type=_parse_color, help="trail color R,G,B (segment by color)")
    p.add_argument("--mask", help="precomputed trail mask PNG (skips segmentation)")
    p.add_argument("--start", type=_parse_geo, help="trail start LAT,LON")
    p.add_argument("--goal", type=_parse_geo, help="trail goal LAT,LON")
    p.add_argument("--strategy", choices=sorted(_STRATEGIES), help="initial query strategy (default graph)")
    p.add_argument("--no-refine", dest="refine_enabled", action="store_false", default=None,
                   help="skip iterative refinement")
    p.add_argument("--router", help="GraphHopper-compatible routing endpoint URL")
    p.add_argument("--osm", help="OSM XML file for the built-in local router")
    p.add_argument("--gpx", help="output GPX path (default route.gpx)")
    p.add_argument("--truth-mask", help="ground-truth mask; prints final Chamfer against it")
    p.add_argument("--color-threshold", type=float)
    p.add_argument("--tau", type=float, help="node-collapse distance threshold in pixels")
    p.add_argument("--snap-radius", type=float)
    p.add_argument("--spacing", type=float, help="waypoint sampling interval in pixels")
    p.add_argument("--eps-route", type=float)
    p.add_argument("--eps-trail", type=float)
    p.add_argument("--max-iters", type=int)
    p.add_argument("--seed", type=int, help="seed for every stochastic choice")
    p.add_argument("--debug-mask", help="write the segmentation mask PNG here")
    p.add_argument("--debug-graph", help="write the simplified-graph overlay PNG here")
    p.add_argument("--debug-route", help="write the route-over-map overlay PNG here")
    p.add_argument("--config", help="JSON file supplying any of the above values")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("segment", help="color-threshold segmentation only")
    p.add_argument("--image", required=True)
    p.add_argument("--color", type=_parse_color, required=True)
    p.add_argument("--color-threshold", type=float, default=raster.DEFAULT_COLOR_THRESHOLD)
    p.add_argument("--out", required=True, help="output mask PNG")
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("synth", help="generate synthetic scenes with ground truth")
    p.add_argument("--out", required=True, help="output dataset directory")
    p.add_argument("--scenes", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--image-px", type=int, default=768)
    p.add_argument("--stroke", type=int, default=5)
    p.add_argument("--trail-edges", type=int, default=12)
    p.add_argument("--noise", type=float, default=0.0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("evaluate", help="run the pipeline over a dataset manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--router")
    p.add_argument("--osm")
    p.add_argument("--strategies", default="graph+ir")
    p.add_argument("--predicted", action="store_true",
                   help="segment by color instead of using ground-truth masks")
    p.add_argument("--csv", help="write per-trail rows to this CSV file")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("ablate", help="strategy ablation over a dataset manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--router")
    p.add_argument("--osm")
    p.add_argument("--strategies", default="e2e+ir,graph+ir,hybrid+ir,hybrid")
    p.add_argument("--input", choices=["truth", "predicted", "both"], default="truth")
    p.add_argument("--csv", help="write per-trial rows to this CSV file")
    p.set_defaults(func=cmd_ablate)
    return parser


def _setup_logging(args) -> None:
    handler: logging.Handler
    if args.log:
        handler = logging.FileHandler(args.log)
    else:
        handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(name)s %(message)s"))
    root = logging.getLogger("trailtrace")
    root.handlers.clear()
    root.addHandler(handler)
    root.setLevel(logging.DEBUG if args.verbose else logging.INFO)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _setup_logging(args)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except TrailTraceError as exc:
        print(f"pipeline error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
