import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays
from skimage.metrics import structural_similarity

from vidkeys.motion import C1, DssimSeries, dssim_series, dump_csv, ssim, ssim_values, SsimSeries
from vidkeys.preprocess import Hand


def oracle(a, b):
    return structural_similarity(a, b, gaussian_weights=True, sigma=1.5, use_sample_covariance=False,
                                 data_range=255)


@pytest.mark.parametrize("seed", range(5))
def test_matches_skimage(seed):
    rng = np.random.default_rng(seed)
    a = rng.integers(0, 256, (40, 57), dtype=np.uint8)
    b = np.clip(a.astype(int) + rng.integers(-40, 40, a.shape), 0, 255).astype(np.uint8)
    assert ssim(a, b) == pytest.approx(oracle(a, b), abs=1e-9)


def test_series_matches_pairwise():
    rng = np.random.default_rng(1)
    segs = [rng.integers(0, 256, (30, 30), dtype=np.uint8) for _ in range(5)]
    want = [ssim(segs[i], segs[i + 1]) for i in range(4)]
    assert np.allclose(ssim_values(segs), want, atol=1e-12)


frames = arrays(np.uint8, st.tuples(st.integers(11, 24), st.integers(11, 24)))


@settings(max_examples=40, deadline=None)
@given(frames, st.integers(0, 2 ** 31))
def test_ssim_properties(a, seed):
    rng = np.random.default_rng(seed)
    b = rng.integers(0, 256, a.shape, dtype=np.uint8)
    assert ssim(a, a) == pytest.approx(1.0, abs=1e-9)
    s = ssim(a, b)
    assert s == pytest.approx(ssim(b, a), abs=1e-12)
    assert -1.0 <= s <= 1.0 + 1e-12


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 255), st.integers(0, 255))
def test_constant_closed_form(x, y):
    a = np.full((16, 16), x, np.uint8)
    b = np.full((16, 16), y, np.uint8)
    want = (2 * x * y + C1) / (x * x + y * y + C1)
    assert ssim(a, b) == pytest.approx(want, abs=1e-6)


def test_small_images_fall_back_to_global():
    a = np.arange(25, dtype=np.uint8).reshape(5, 5)
    assert ssim(a, a) == pytest.approx(1.0)


def test_errors():
    with pytest.raises(ValueError, match="mismatch"):
        ssim(np.zeros((12, 12)), np.zeros((12, 13)))
    with pytest.raises(ValueError):
        ssim(np.zeros((0, 3)), np.zeros((0, 3)))
    with pytest.raises(ValueError):
        ssim_values([np.zeros((12, 12))])


def test_dssim_and_population_zscore():
    s = SsimSeries(Hand.LEFT, np.array([1.0, 0.8, 0.9, 0.9]))
    d = dssim_series(s)
    assert np.allclose(d.values, [0.2, -0.1, 0.0])
    assert d.std == pytest.approx(np.std(d.values, ddof=0))
    assert np.allclose(d.zscores(), (d.values - d.values.mean()) / d.values.std())
    assert not DssimSeries(Hand.LEFT, np.zeros(3)).zscores().any()


def test_dump_csv():
    assert dump_csv([0.5, 0.25]) == "index,value\n1,0.5000000000\n2,0.2500000000\n"


def test_dips_at_keystrokes(small_analysis, small_clip):
    # SSIM between consecutive segments drops at the strike frames
    for h in Hand:
        frames = [k.frame for k in small_clip.truth.keylog if k.hand is h]
        s = np.array(ssim_values(small_analysis.series[h].segments))
        base = np.median(s)
        for f in frames:
            # element i pairs frames (i+1, i+2)
            assert s[f - 2] < base
