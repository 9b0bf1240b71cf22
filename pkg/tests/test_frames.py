import numpy as np
import pytest

from vidkeys.frames import (Frame, FrameSequence, ManifestError, gray_array, load_manifest, parse_manifest,
                            save_sequence, to_grayscale)


def test_gray_uses_rec709_weights():
    px = np.zeros((2, 3, 3), np.uint8)
    px[..., 0] = 200
    px[..., 1] = 100
    px[..., 2] = 50
    want = round(0.2126 * 200 + 0.7152 * 100 + 0.0722 * 50)
    assert gray_array(px)[0, 0] == want
    assert to_grayscale(Frame(px, 1)).pixels.ndim == 2


def test_gray_passthrough():
    g = np.arange(12, dtype=np.uint8).reshape(3, 4)
    assert np.array_equal(gray_array(g), g)


def test_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    seq = FrameSequence.from_arrays([rng.integers(0, 256, (20, 30, 3), dtype=np.uint8) for _ in range(4)], 25)
    manifest = save_sequence(seq, tmp_path)
    back = load_manifest(manifest)
    assert back.fps == 25 and len(back) == 4
    assert [f.index for f in back] == [1, 2, 3, 4]
    for a, b in zip(seq, back):
        assert np.array_equal(a.pixels, b.pixels)


def test_missing_manifest(tmp_path):
    with pytest.raises(ManifestError, match="not found"):
        parse_manifest(tmp_path / "none.txt")


def test_bad_headers(tmp_path):
    p = tmp_path / "m.txt"
    p.write_text("rate=30\nresolution=4x4\na.png\n")
    with pytest.raises(ManifestError, match="fps"):
        parse_manifest(p)
    p.write_text("fps=30\nresolution=4x4\n")
    with pytest.raises(ManifestError, match="empty"):
        parse_manifest(p)
    p.write_text("fps=0\nresolution=4x4\na.png\n")
    with pytest.raises(ManifestError, match="positive"):
        parse_manifest(p)


def test_missing_frame_and_size_mismatch(tmp_path):
    seq = FrameSequence.from_arrays([np.zeros((8, 8), np.uint8)] * 2, 30)
    m = save_sequence(seq, tmp_path)
    text = m.read_text().replace("resolution=8x8", "resolution=8x9")
    m.write_text(text)
    with pytest.raises(ManifestError, match="size mismatch"):
        load_manifest(m)
    m.write_text("fps=30\nresolution=8x8\nnope.png\n")
    with pytest.raises(ManifestError, match="missing frame"):
        load_manifest(m)


def test_sequence_validation():
    with pytest.raises(ValueError):
        FrameSequence.from_arrays([np.zeros((4, 4), np.uint8), np.zeros((4, 5), np.uint8)], 30)
    with pytest.raises(ValueError):
        FrameSequence.from_arrays([np.zeros((4, 4), np.uint8)], 0)
