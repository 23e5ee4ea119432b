import numpy as np
import pytest
from PIL import Image, ImageDraw
from scipy import ndimage

from trailtrace import raster
from trailtrace.errors import MalformedImage

EIGHT = np.ones((3, 3), dtype=bool)


def count_components(bits):
    return ndimage.label(bits, structure=EIGHT)[1]


def has_2x2_block(bits):
    return bool((bits[:-1, :-1] & bits[1:, :-1] & bits[:-1, 1:] & bits[1:, 1:]).any())


def random_mask(rng):
    """Noise, dilated blobs, or dilated strokes: the shapes thinning meets."""
    h, w = rng.integers(4, 64, size=2)
    kind = rng.integers(0, 3)
    if kind == 0:
        m = rng.random((h, w)) < rng.uniform(0.05, 0.6)
    elif kind == 1:
        m = rng.random((h, w)) < 0.08
        m = ndimage.binary_dilation(m, structure=EIGHT, iterations=int(rng.integers(1, 3)))
    else:
        m = np.zeros((h, w), bool)
        for _ in range(rng.integers(1, 4)):
            r0, c0, r1, c1 = rng.integers(0, h), rng.integers(0, w), rng.integers(0, h), rng.integers(0, w)
            rr = np.linspace(r0, r1, 50).round().astype(int)
            cc = np.linspace(c0, c1, 50).round().astype(int)
            m[rr, cc] = True
        m = ndimage.binary_dilation(m, iterations=int(rng.integers(0, 3)))
    return raster.TrailMask(bits=m)


# -- segmentation -------------------------------------------------------------


def test_solid_color_image_segments_to_all_ones():
    color = raster.TrailColor((170, 79, 55))
    img = raster.MapImage(np.full((20, 30, 3), color.rgb, dtype=np.uint8))
    mask = raster.segment_by_color(img, color, threshold=0.0)
    assert mask.bits.all()


def test_no_pixel_near_color_segments_to_all_zeros():
    img = raster.MapImage(np.full((16, 16, 3), (255, 255, 255), dtype=np.uint8))
    mask = raster.segment_by_color(img, raster.TrailColor((0, 0, 0)), threshold=30)
    assert not mask.bits.any()


def test_synthetic_stroke_iou_at_least_0p95():
    color = (170, 79, 55)
    canvas = Image.new("RGB", (400, 300), (235, 228, 210))
    draw = ImageDraw.Draw(canvas)
    draw.line([(20, 40), (160, 90), (300, 60), (370, 240)], fill=(120, 150, 120), width=4)
    draw.rectangle([60, 180, 180, 260], fill=(90, 120, 220))
    stroke = [(30, 250), (120, 120), (260, 180), (380, 50)]
    draw.line(stroke, fill=color, width=5, joint="curve")

    truth_canvas = Image.new("L", (400, 300), 0)
    ImageDraw.Draw(truth_canvas).line(stroke, fill=255, width=5, joint="curve")
    truth = np.asarray(truth_canvas) > 0

    img = raster.MapImage(np.asarray(canvas))
    mask = raster.segment_by_color(img, raster.TrailColor(color), threshold=30).bits.astype(bool)
    iou = (mask & truth).sum() / (mask | truth).sum()
    assert iou >= 0.95


def test_threshold_monotonicity_before_cleanup():
    rng = np.random.default_rng(42)
    img = raster.MapImage(rng.integers(0, 256, size=(32, 32, 3), dtype=np.uint8))
    color = raster.TrailColor((100, 120, 80))
    previous = None
    for threshold in (0, 10, 25, 60, 120, 250):
        current = raster.threshold_color(img, color, threshold).bits
        if previous is not None:
            assert ((previous == 1) <= (current == 1)).all()
        previous = current


# -- skeletonization ----------------------------------------------------------


def test_thin_line_is_unchanged():
    m = np.zeros((5, 24), np.uint8)
    m[2, 2:22] = 1
    s = raster.skeletonize(raster.TrailMask(bits=m))
    assert np.array_equal(s.bits, m)


def test_empty_mask_gives_empty_skeleton():
    s = raster.skeletonize(raster.TrailMask(bits=np.zeros((10, 10))))
    assert not s.bits.any()


def test_wide_bar_thins_to_single_spanning_path():
    m = np.zeros((9, 44), np.uint8)
    m[2:7, 2:42] = 1  # 5 px wide, 40 px long
    s = raster.skeletonize(raster.TrailMask(bits=m)).bits
    assert count_components(s) == 1
    assert not has_2x2_block(s)
    # a path: exactly two endpoints, all other pixels have two neighbors
    kernel = np.ones((3, 3))
    kernel[1, 1] = 0
    degrees = ndimage.convolve(s.astype(int), kernel, mode="constant")[s == 1]
    assert sorted(degrees)[:2] == [1, 1] and (np.sort(degrees)[2:] == 2).all()
    cols = np.nonzero(s)[1]
    assert cols.min() <= 4 and cols.max() >= 39  # within 2 px of each bar end


def test_skeleton_invariants_on_random_masks():
    rng = np.random.default_rng(77)
    for _ in range(60):
        mask = random_mask(rng)
        skel = raster.skeletonize(mask)
        s = skel.bits
        assert not has_2x2_block(s)
        assert count_components(s) == count_components(mask.bits)
        again = raster.skeletonize(raster.TrailMask(bits=s)).bits
        assert np.array_equal(again, s)
        dilated = ndimage.binary_dilation(mask.bits, structure=EIGHT)
        assert not (s.astype(bool) & ~dilated).any()


def test_single_pixel_components_survive():
    m = np.zeros((8, 8), np.uint8)
    m[1, 1] = 1
    m[5:7, 5:7] = 1  # 2x2 blob would vanish under plain thinning
    s = raster.skeletonize(raster.TrailMask(bits=m)).bits
    assert count_components(s) == 2
    assert s[1, 1] == 1


# -- mask I/O -----------------------------------------------------------------


def test_mask_round_trip(tmp_path):
    rng = np.random.default_rng(3)
    mask = raster.TrailMask(bits=rng.random((33, 21)) < 0.4)
    path = tmp_path / "mask.png"
    raster.save_mask(mask, path)
    assert np.array_equal(raster.load_mask(path).bits, mask.bits)


def test_all_white_png_loads_as_ones(tmp_path):
    path = tmp_path / "white.png"
    Image.new("L", (4, 4), 255).save(path)
    assert raster.load_mask(path).bits.sum() == 16


def test_checkerboard_round_trip(tmp_path):
    board = np.indices((8, 8)).sum(axis=0) % 2
    path = tmp_path / "checker.png"
    raster.save_mask(raster.TrailMask(bits=board), path)
    assert np.array_equal(raster.load_mask(path).bits, board)


def test_rgb_mask_loads_via_luminance(tmp_path):
    rgb = np.zeros((6, 6, 3), np.uint8)
    rgb[:3] = 255
    path = tmp_path / "rgb.png"
    Image.fromarray(rgb).save(path)
    loaded = raster.load_mask(path)
    assert loaded.bits[:3].all() and not loaded.bits[3:].any()


def test_load_mask_rejects_non_image(tmp_path):
    path = tmp_path / "not_png.png"
    path.write_text("hello")
    with pytest.raises(MalformedImage):
        raster.load_mask(path)


def test_load_mask_missing_file_raises_oserror(tmp_path):
    with pytest.raises(OSError):
        raster.load_mask(tmp_path / "absent.png")
