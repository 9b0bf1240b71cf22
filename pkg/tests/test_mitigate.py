import math

import cv2
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vidkeys.frames import FrameSequence
from vidkeys.mitigate import (MitigationConfig, MitigationReport, apply_mitigation, blur_kernel_side, box_blur,
                              drop_windows, format_drop_log, frame_skip, pixelate, tile_size)


def image(seed=0, shape=(36, 48)):
    return np.random.default_rng(seed).integers(0, 256, shape, dtype=np.uint8)


@pytest.mark.parametrize("z", [0.05, 0.1, 0.2, 0.33])
@pytest.mark.parametrize("color", [False, True])
def test_blur_matches_opencv(z, color):
    img = image(int(z * 100), (36, 48, 3) if color else (36, 48))
    k = blur_kernel_side(z, img.shape)
    want = cv2.blur(img, (k, k), borderType=cv2.BORDER_REPLICATE)
    got = box_blur(img, z)
    assert got.shape == img.shape and got.dtype == np.uint8
    assert np.abs(got.astype(int) - want.astype(int)).max() <= 1


def naive_pixelate(img, th, tw):
    out = np.empty_like(img)
    for r in range(0, img.shape[0], th):
        for c in range(0, img.shape[1], tw):
            tile = img[r:r + th, c:c + tw].astype(float)
            out[r:r + th, c:c + tw] = np.clip(np.rint(tile.mean(axis=(0, 1))), 0, 255)
    return out


@settings(max_examples=30, deadline=None)
@given(st.integers(5, 40), st.integers(5, 40), st.floats(0.02, 0.5), st.booleans(), st.integers(0, 99))
def test_pixelate_matches_naive(h, w, z, color, seed):
    img = image(seed, (h, w, 3) if color else (h, w))
    th, tw = tile_size(z, img.shape)
    assert np.array_equal(pixelate(img, z), naive_pixelate(img, th, tw))


def test_kernel_sizes():
    assert blur_kernel_side(0.2, (360, 480)) == 72
    assert tile_size(0.07, (360, 480)) == (25, 34)
    assert np.array_equal(box_blur(image(), 0.001), image())
    with pytest.raises(ValueError):
        box_blur(image(), 0)
    with pytest.raises(ValueError):
        pixelate(image(), -1)


def test_drop_windows_merge_and_clip():
    assert drop_windows([10, 14, 40], 3, 1, 42) == [(7, 17), (37, 42)]
    assert drop_windows([2], 5, 1, 100) == [(1, 7)]
    assert drop_windows([10, 17], 3, 1, 50) == [(7, 20)]  # adjacent windows join


def seq(n=30, shape=(24, 24)):
    return FrameSequence.from_arrays([image(i, shape) for i in range(n)], 30)


def test_frame_skip_renumbers():
    s = seq()
    res = frame_skip(s, [10, 12], 2)
    assert res.dropped == tuple(range(8, 15))
    assert len(res.sequence) == 30 - 7
    assert [f.index for f in res.sequence] == list(range(1, 24))
    assert res.kept[7] == 15
    assert np.array_equal(res.sequence[7].pixels, s[14].pixels)
    assert format_drop_log(res.dropped[:2]) == "8\n9\n"


def test_frame_skip_errors():
    s = seq()
    with pytest.raises(ValueError, match="out of range"):
        frame_skip(s, [31], 2)
    with pytest.raises(ValueError):
        frame_skip(s, [5], 0)
    with pytest.raises(ValueError, match="every frame"):
        frame_skip(seq(5), [3], 5)


def test_touched_frames_and_untouched_copies():
    s = seq()
    cfg = MitigationConfig.blur(0.2)
    assert cfg.touched([10], 1, 30) == [8, 9, 10, 11, 12, 13]
    res = apply_mitigation(s, [10], cfg)
    for fr, orig in zip(res.sequence, s):
        same = np.array_equal(fr.pixels, orig.pixels)
        assert same == (fr.index not in range(8, 14))
    assert res.report.touched_frames == 6
    assert 0 < res.report.quality < 1
    assert math.isnan(res.report.effectiveness)


def test_overlapping_windows_touch_once():
    cfg = MitigationConfig.pixelate(0.1)
    res = apply_mitigation(seq(), [10, 12], cfg)
    assert res.report.touched_frames == len(range(8, 16))


def test_skip_report():
    res = apply_mitigation(seq(), [15], MitigationConfig.skip(3))
    assert res.report.quality == 1.0
    assert res.dropped == tuple(range(12, 19))
    assert len(res.kept) == len(res.sequence) == 23


def test_empty_keylog_is_noop():
    s = seq()
    for cfg in (MitigationConfig.blur(), MitigationConfig.skip()):
        res = apply_mitigation(s, [], cfg)
        assert len(res.sequence) == len(s) and res.report.quality == 1.0


def test_config_validation():
    with pytest.raises(ValueError, match="unknown mitigation"):
        MitigationConfig("smear", z=0.1)
    with pytest.raises(ValueError):
        MitigationConfig.blur(1.5)
    with pytest.raises(ValueError):
        MitigationConfig.skip(0)
    assert MitigationConfig.pixelate().strength == 0.07 and MitigationConfig.skip().strength == 5


def test_report_format():
    r = MitigationReport(math.nan, 1.25, 0.5)
    assert r.format() == "nan 1.2500 0.500000\n"
    assert r.with_effectiveness(60).format().startswith("60.0000 ")


def test_quality_decreases_with_strength():
    rng = np.random.default_rng(3)
    base = cv2.GaussianBlur(rng.integers(0, 256, (120, 160)).astype(np.float32), (0, 0), 3).astype(np.uint8)
    s = FrameSequence.from_arrays([base] * 10, 30)
    for kind, zs in (("blur", (0.05, 0.1, 0.2)), ("pixelate", (0.03, 0.05, 0.07))):
        q = [apply_mitigation(s, [5], MitigationConfig(kind, z=z)).report.quality for z in zs]
        assert q == sorted(q, reverse=True)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 99), st.floats(0.02, 0.4), st.sampled_from(["blur", "pixelate"]))
def test_frame_mean_preserved(seed, z, kind):
    rng = np.random.default_rng(seed)
    import cv2 as _cv2
    img = _cv2.GaussianBlur(rng.integers(0, 256, (48, 64)).astype(np.float32), (0, 0), 4).astype(np.uint8)
    op = box_blur if kind == "blur" else pixelate
    assert abs(op(img, z).mean() - img.mean()) <= 1.0


@settings(max_examples=50, deadline=None)
@given(st.integers(5, 60), st.lists(st.integers(1, 60), max_size=6), st.integers(1, 6))
def test_frame_skip_properties(n, keys, f):
    keys = [k for k in keys if k <= n]
    s = FrameSequence.from_arrays([np.full((4, 4), i, np.uint8) for i in range(n)], 30)
    windows = drop_windows(keys, f, 1, n)
    gone = {i for a, b in windows for i in range(a, b + 1)}
    if len(gone) == n:
        with pytest.raises(ValueError):
            frame_skip(s, keys, f)
        return
    res = frame_skip(s, keys, f)
    assert len(res.sequence) == n - len(gone)
    assert not gone & set(res.kept)
    assert [int(fr.pixels[0, 0]) + 1 for fr in res.sequence] == list(res.kept)


def test_recovery_never_rises_with_strength(small_clip):
    from vidkeys.evaluate import evaluate_clip
    from vidkeys.infer import bundled_dictionary
    d = {"4k": bundled_dictionary("4k")}
    keys = small_clip.truth.keystroke_frames()
    for kind, ladder in (("blur", (0.02, 0.05, 0.2)), ("pixelate", (0.01, 0.03, 0.07)), ("skip", (1, 3, 5))):
        rec = []
        for v in ladder:
            cfg = MitigationConfig.skip(v) if kind == "skip" else MitigationConfig(kind, z=v)
            m = apply_mitigation(small_clip.frames, keys, cfg, measure_quality=False)
            rec.append(evaluate_clip(m.sequence, small_clip.truth, d, ks=(50,), frame_map=m.kept).recovery["4k"][50])
        assert rec == sorted(rec, reverse=True), (kind, rec)
