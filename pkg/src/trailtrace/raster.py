"""Map image loading, color-based trail segmentation, and skeletonization.

Masks are 8-bit {0,1} arrays with the same (H, W) shape as the source
image; mask PNGs store 255 for trail pixels. Skeletons are thin masks: no
2x2 all-foreground block survives thinning.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError
from scipy import ndimage

from .errors import MalformedImage

__all__ = [
    "MapImage",
    "TrailColor",
    "TrailMask",
    "Skeleton",
    "load_image",
    "segment_by_color",
    "threshold_color",
    "skeletonize",
    "load_mask",
    "save_mask",
]

# Components below this size are dropped during mask cleanup.
MIN_COMPONENT_PX = 50
DEFAULT_COLOR_THRESHOLD = 30.0

_EIGHT = np.ones((3, 3), dtype=bool)


@dataclass(frozen=True)
class MapImage:
    """RGB scan of a paper map; ``rgb`` is an (H, W, 3) uint8 array."""

    rgb: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.rgb, dtype=np.uint8)
        if arr.ndim != 3 or arr.shape[2] != 3 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise MalformedImage(f"expected (H, W, 3) image, got shape {arr.shape}")
        object.__setattr__(self, "rgb", arr)

    @property
    def height(self) -> int:
        return self.rgb.shape[0]

    @property
    def width(self) -> int:
        return self.rgb.shape[1]


@dataclass(frozen=True)
class TrailColor:
    """Representative RGB value sampled from the drawn trail."""

    rgb: tuple[int, int, int]

    def __post_init__(self) -> None:
        if len(self.rgb) != 3 or any(not (0 <= int(c) <= 255) for c in self.rgb):
            raise ValueError(f"RGB components must be in [0, 255]: {self.rgb}")
        object.__setattr__(self, "rgb", tuple(int(c) for c in self.rgb))


@dataclass(frozen=True)
class TrailMask:
    """Binary raster marking the pixels of one trail."""

    bits: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.bits)
        if arr.ndim != 2:
            raise MalformedImage(f"mask must be 2-D, got shape {arr.shape}")
        object.__setattr__(self, "bits", (arr != 0).astype(np.uint8))

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    def count(self) -> int:
        return int(self.bits.sum())

    def pixels(self) -> np.ndarray:
        """Foreground positions as an (N, 2) array of (row, col)."""
        rows, cols = np.nonzero(self.bits)
        return np.column_stack([rows, cols])


@dataclass(frozen=True)
class Skeleton:
    """Thinned trail mask (1-pixel-wide centerline)."""

    bits: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.bits)
        object.__setattr__(self, "bits", (arr != 0).astype(np.uint8))

    def pixels(self) -> np.ndarray:
        rows, cols = np.nonzero(self.bits)
        return np.column_stack([rows, cols])


def load_image(path: str | Path) -> MapImage:
    """Read a map scan as RGB. Raises MalformedImage for non-image files."""
    try:
        with Image.open(path) as img:
            return MapImage(rgb=np.asarray(img.convert("RGB")))
    except UnidentifiedImageError as exc:
        raise MalformedImage(f"{path}: {exc}") from exc


def threshold_color(image: MapImage, color: TrailColor, threshold: float) -> TrailMask:
    """Raw color segmentation: 1 iff Euclidean RGB distance <= threshold.

    This is the pre-cleanup stage; thresholds are monotone here.
    """
    if threshold < 0:
        raise ValueError("threshold must be >= 0")
    diff = image.rgb.astype(np.int32) - np.array(color.rgb, dtype=np.int32)
    dist2 = np.einsum("ijk,ijk->ij", diff, diff)
    return TrailMask(bits=dist2 <= threshold * threshold)


def segment_by_color(
    image: MapImage,
    color: TrailColor,
    threshold: float = DEFAULT_COLOR_THRESHOLD,
) -> TrailMask:
    """Baseline trail segmenter: color thresholding plus denoise cleanup.

    Cleanup removes 8-connected components smaller than MIN_COMPONENT_PX,
    then applies one 3x3 morphological closing to bridge 1-pixel gaps. An
    empty mask is a legal output.
    """
    raw = threshold_color(image, color, threshold).bits.astype(bool)
    labels, n = ndimage.label(raw, structure=_EIGHT)
    if n:
        counts = np.bincount(labels.ravel())
        keep = counts >= MIN_COMPONENT_PX
        keep[0] = False
        raw = keep[labels]
    # closing = dilate then erode; border_value=1 on the erosion keeps the
    # operation extensive at image edges
    dilated = ndimage.binary_dilation(raw, structure=_EIGHT, border_value=0)
    closed = ndimage.binary_erosion(dilated, structure=_EIGHT, border_value=1)
    return TrailMask(bits=closed)


# ---------------------------------------------------------------------------
# Zhang-Suen thinning
# ---------------------------------------------------------------------------


def _neighbor_planes(img: np.ndarray) -> list[np.ndarray]:
    """Shifted views in ring order: N, NE, E, SE, S, SW, W, NW."""
    p = np.pad(img, 1)
    return [
        p[:-2, 1:-1],  # N
        p[:-2, 2:],    # NE
        p[1:-1, 2:],   # E
        p[2:, 2:],     # SE
        p[2:, 1:-1],   # S
        p[2:, :-2],    # SW
        p[1:-1, :-2],  # W
        p[:-2, :-2],   # NW
    ]


def _thin_subiteration(img: np.ndarray, second: bool) -> bool:
    n, ne, e, se, s, sw, w, nw = _neighbor_planes(img)
    ring = [n, ne, e, se, s, sw, w, nw, n]
    neighbor_count = sum(ring[:8])
    transitions = sum(((ring[i] == 0) & (ring[i + 1] == 1)).astype(np.uint8) for i in range(8))
    if not second:
        direction_ok = (n * e * s == 0) & (e * s * w == 0)
    else:
        direction_ok = (n * e * w == 0) & (n * s * w == 0)
    removable = (
        (img == 1)
        & (neighbor_count >= 2)
        & (neighbor_count <= 6)
        & (transitions == 1)
        & direction_ok
    )
    if removable.any():
        img[removable] = 0
        return True
    return False


_RING_OFFSETS = [(-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1), (-1, -1)]


def _is_simple(img: np.ndarray, r: int, c: int) -> bool:
    """Simple-point test for (8-foreground, 4-background) connectivity.

    Deleting a simple pixel changes neither the foreground 8-components
    nor the background 4-components, so it is always safe to remove.
    """
    h, w = img.shape

    def value(dr: int, dc: int) -> int:
        rr, cc = r + dr, c + dc
        return int(img[rr, cc]) if 0 <= rr < h and 0 <= cc < w else 0

    fg = [off for off in _RING_OFFSETS if value(*off) == 1]
    if not fg:
        return False
    # one 8-connected component among the foreground neighbors
    seen = {fg[0]}
    stack = [fg[0]]
    while stack:
        a = stack.pop()
        for b in fg:
            if b not in seen and max(abs(a[0] - b[0]), abs(a[1] - b[1])) <= 1:
                seen.add(b)
                stack.append(b)
    if len(seen) != len(fg):
        return False
    # one 4-connected background component touching an edge neighbor
    bg = [off for off in _RING_OFFSETS if value(*off) == 0]
    edge_bg = [off for off in bg if abs(off[0]) + abs(off[1]) == 1]
    if not edge_bg:
        return False
    seen_bg = {edge_bg[0]}
    stack = [edge_bg[0]]
    while stack:
        a = stack.pop()
        for b in bg:
            if b not in seen_bg and abs(a[0] - b[0]) + abs(a[1] - b[1]) == 1:
                seen_bg.add(b)
                stack.append(b)
    return all(off in seen_bg for off in edge_bg)


def _deletion_keeps_component(img: np.ndarray, r: int, c: int) -> bool:
    """Exact global check: do the pixel's neighbors stay mutually connected?"""
    h, w = img.shape
    neighbors = [
        (r + dr, c + dc)
        for dr, dc in _RING_OFFSETS
        if 0 <= r + dr < h and 0 <= c + dc < w and img[r + dr, c + dc]
    ]
    if len(neighbors) <= 1:
        return True
    img[r, c] = 0
    try:
        targets = set(neighbors)
        seen = {neighbors[0]}
        stack = [neighbors[0]]
        while stack and not targets <= seen:
            rr, cc = stack.pop()
            for dr, dc in _RING_OFFSETS:
                nr, nc = rr + dr, cc + dc
                if 0 <= nr < h and 0 <= nc < w and img[nr, nc] and (nr, nc) not in seen:
                    seen.add((nr, nc))
                    stack.append((nr, nc))
        return targets <= seen
    finally:
        img[r, c] = 1


def _break_blocks(img: np.ndarray) -> bool:
    """Delete safe pixels until no 2x2 all-foreground block remains.

    Prefers locally simple pixels; falls back to an exact reachability
    check for crossing patterns the local test rejects. A block whose four
    pixels are all unsafe to delete is left alone (splitting a component
    would be worse than residual thickness).
    """
    changed = False
    while True:
        blocks = (img[:-1, :-1] & img[1:, :-1] & img[:-1, 1:] & img[1:, 1:]).astype(bool)
        rows, cols = np.nonzero(blocks)
        if len(rows) == 0:
            return changed
        progressed = False
        for r, c in zip(rows, cols):
            if not (img[r, c] and img[r + 1, c] and img[r, c + 1] and img[r + 1, c + 1]):
                continue  # an earlier deletion already broke this block
            quad = ((r, c), (r, c + 1), (r + 1, c), (r + 1, c + 1))
            done = False
            for rr, cc in quad:
                if _is_simple(img, rr, cc):
                    img[rr, cc] = 0
                    done = True
                    break
            if not done:
                for rr, cc in quad:
                    if _deletion_keeps_component(img, rr, cc):
                        img[rr, cc] = 0
                        done = True
                        break
            progressed |= done
            changed |= done
        if not progressed:
            return changed


_FOUR = ndimage.generate_binary_structure(2, 1)

# Enclosed background pockets up to this size are treated as aliasing
# noise: thinning preserves holes, and a pinhole in a stroke otherwise
# becomes a tiny two-chain loop studded with fake junctions.
MAX_HOLE_PX = 8


def _fill_small_holes(img: np.ndarray, max_px: int = MAX_HOLE_PX) -> bool:
    """Fill enclosed background pockets of at most ``max_px`` pixels.

    A pocket is only filled when a single foreground component surrounds
    it, so filling can never merge separate components.
    """
    bg_labels, n_bg = ndimage.label(img == 0, structure=_FOUR)
    if n_bg == 0:
        return False
    border = set(
        np.unique(
            np.concatenate(
                [bg_labels[0, :], bg_labels[-1, :], bg_labels[:, 0], bg_labels[:, -1]]
            )
        )
    )
    sizes = np.bincount(bg_labels.ravel())
    fg_labels, _ = ndimage.label(img, structure=_EIGHT)
    changed = False
    for label in range(1, n_bg + 1):
        if label in border or sizes[label] > max_px:
            continue
        pocket = bg_labels == label
        ring = ndimage.binary_dilation(pocket, structure=_EIGHT) & (img == 1)
        if len(np.unique(fg_labels[ring])) == 1:
            img[pocket] = 1
            changed = True
    return changed


def _fg_neighbors(img: np.ndarray, r: int, c: int) -> list[tuple[int, int]]:
    h, w = img.shape
    return [
        (r + dr, c + dc)
        for dr, dc in _RING_OFFSETS
        if 0 <= r + dr < h and 0 <= c + dc < w and img[r + dr, c + dc]
    ]


def _remove_redundant(img: np.ndarray) -> bool:
    """Delete simple pixels with three or more neighbors.

    Thinning can converge with both pixels of a staircase step present,
    which reads as a pair of fake junctions. Such pixels are simple (their
    neighbors stay connected without them) and sit on at least three
    neighbors; genuinely branching pixels have separated arms and fail the
    simple-point test, and line pixels never have three neighbors.
    """
    changed = False
    rows, cols = np.nonzero(img)
    for p in sorted(zip(rows.tolist(), cols.tolist())):
        if img[p] and len(_fg_neighbors(img, *p)) >= 3 and _is_simple(img, *p):
            img[p] = 0
            changed = True
    return changed


def _prune_spurs(img: np.ndarray, max_len: float) -> bool:
    """Remove terminal whiskers shorter than ``max_len`` off junctions.

    Thinning a stroke with aliased (staircase) edges leaves short spur
    branches at each stair step; they would read as fake trail termini.
    Only branches ending at a junction are pruned, so genuine line ends
    and whole components are never deleted.
    """
    if max_len <= 0:
        return False
    changed = False
    progress = True
    while progress:
        progress = False
        rows, cols = np.nonzero(img)
        for leaf in zip(rows.tolist(), cols.tolist()):
            if not img[leaf]:
                continue
            nbrs = _fg_neighbors(img, *leaf)
            if len(nbrs) != 1:
                continue
            path = [leaf]
            length = 0.0
            prev, cur = leaf, nbrs[0]
            while True:
                length += math.hypot(cur[0] - prev[0], cur[1] - prev[1])
                if length >= max_len:
                    break
                onward = [n for n in _fg_neighbors(img, *cur) if n != prev]
                if len(onward) >= 2:  # junction reached: drop the whisker
                    for r, c in path:
                        img[r, c] = 0
                    changed = progress = True
                    break
                if len(onward) == 0:  # isolated path component, keep it
                    break
                path.append(cur)
                prev, cur = cur, onward[0]
    return changed


def skeletonize(mask: TrailMask, prune_px: float = 5.0) -> Skeleton:
    """Thin a mask to its 1-pixel-wide centerline.

    Tiny-hole filling, iterative Zhang-Suen thinning, a block-breaking
    pass, and short-spur pruning run to a joint fixpoint (making the
    operation idempotent); afterwards one representative pixel is restored
    for any input component that thinning erased, so the 8-connected
    component count is preserved.
    """
    img = mask.bits.astype(np.uint8).copy()
    while True:
        changed = _fill_small_holes(img)
        changed |= _thin_subiteration(img, second=False)
        changed |= _thin_subiteration(img, second=True)
        changed |= _break_blocks(img)
        changed |= _remove_redundant(img)
        changed |= _prune_spurs(img, prune_px)
        if not changed:
            break
    _restore_lost_components(img, mask.bits)
    return Skeleton(bits=img)


def _restore_lost_components(img: np.ndarray, original: np.ndarray) -> None:
    labels, n = ndimage.label(original, structure=_EIGHT)
    if n == 0:
        return
    # a component survives if any skeleton pixel touches it (hole filling
    # can leave the surviving centerline on what used to be background)
    h, w = img.shape
    surviving: set[int] = set()
    for r, c in zip(*np.nonzero(img)):
        window = labels[max(0, r - 1) : r + 2, max(0, c - 1) : c + 2]
        surviving.update(int(v) for v in np.unique(window))
    surviving.discard(0)
    for label in range(1, n + 1):
        if label in surviving:
            continue
        rows, cols = np.nonzero(labels == label)
        d2 = (rows - rows.mean()) ** 2 + (cols - cols.mean()) ** 2
        order = np.lexsort((cols, rows, d2))
        img[rows[order[0]], cols[order[0]]] = 1


# ---------------------------------------------------------------------------
# Mask raster I/O
# ---------------------------------------------------------------------------


def save_mask(mask: TrailMask, path: str | Path) -> None:
    """Write the mask as an 8-bit grayscale PNG (255 = trail)."""
    Image.fromarray(mask.bits * np.uint8(255), mode="L").save(path, format="PNG")


def load_mask(path: str | Path) -> TrailMask:
    """Read a grayscale or RGB PNG; luminance > 127 becomes foreground."""
    try:
        with Image.open(path) as img:
            gray = np.asarray(img.convert("L"))
    except UnidentifiedImageError as exc:
        raise MalformedImage(f"{path}: {exc}") from exc
    return TrailMask(bits=gray > 127)
