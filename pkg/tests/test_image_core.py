import warnings

import numpy as np
import pytest
from PIL import Image

from phasevib.image_core import (DegenerateContrastWarning, Frame, FrameIOError, VideoSequence,
                                 enhance_contrast, enhance_sequence, histogram, list_frame_files,
                                 load_sequence, read_frame, save_sequence, write_enhanced)


def test_frame_validation():
    with pytest.raises(ValueError):
        Frame(np.full((2, 2), 1.5))
    with pytest.raises(ValueError):
        Frame(np.zeros(4))
    f = Frame(np.zeros((3, 4)))
    assert (f.height, f.width) == (3, 4)
    with pytest.raises(ValueError):
        f.intensity[0, 0] = 1


def test_sequence_basics():
    v = VideoSequence(np.zeros((5, 3, 4)), 100.0)
    assert len(v) == 5 and v.shape == (3, 4)
    assert v.duration_s == pytest.approx(0.05)
    np.testing.assert_allclose(v.times(), np.arange(5) / 100)
    assert isinstance(v[2], Frame)
    with pytest.raises(ValueError, match="mixed"):
        VideoSequence([Frame(np.zeros((2, 2))), Frame(np.zeros((3, 2)))], 10)
    with pytest.raises(ValueError, match="2 frames"):
        VideoSequence(np.zeros((1, 2, 2)), 10).require_motion_length()


@pytest.mark.parametrize("depth", [8, 16])
def test_png_round_trip(tmp_path, depth):
    rng = np.random.default_rng(0)
    data = rng.integers(0, 2 ** depth, (3, 5, 7)) / (2 ** depth - 1)
    save_sequence(VideoSequence(data, 30.0, depth), tmp_path)
    names = [p.name for p in list_frame_files(tmp_path)]
    assert names == ["frame_00000.png", "frame_00001.png", "frame_00002.png"]
    v = load_sequence(tmp_path, 30.0)
    assert v.bit_depth == depth
    np.testing.assert_allclose(v.data, data, atol=1e-12)


def test_pgm_is_read(tmp_path):
    Image.fromarray(np.array([[0, 255], [51, 102]], np.uint8)).save(tmp_path / "a.pgm")
    f = read_frame(tmp_path / "a.pgm")
    np.testing.assert_allclose(f.intensity, [[0, 1], [0.2, 0.4]])


def test_load_errors_name_the_file(tmp_path):
    with pytest.raises(FrameIOError, match="no PNG"):
        load_sequence(tmp_path, 10)
    Image.fromarray(np.zeros((4, 4), np.uint8)).save(tmp_path / "f0.png")
    with pytest.raises(FrameIOError, match="need ≥ 2 frames"):
        load_sequence(tmp_path, 10)
    Image.fromarray(np.zeros((5, 4), np.uint8)).save(tmp_path / "f1.png")
    with pytest.raises(FrameIOError, match="f1.png"):
        load_sequence(tmp_path, 10)
    (tmp_path / "f1.png").write_bytes(b"junk")
    with pytest.raises(FrameIOError, match="f1.png"):
        load_sequence(tmp_path, 10)
    (tmp_path / "f1.png").unlink()
    Image.fromarray(np.zeros((4, 4, 3), np.uint8)).save(tmp_path / "f1.png")
    with pytest.raises(FrameIOError, match="f1.png"):
        load_sequence(tmp_path, 10)


def test_histogram(tmp_path):
    f = Frame(np.array([[0.0, 0.5], [1.0, 1.0]]))
    h = histogram(f, 4)
    assert h.counts.tolist() == [1, 0, 1, 2] and h.counts.sum() == 4
    h.to_csv(tmp_path / "h.csv")
    assert (tmp_path / "h.csv").read_text().splitlines()[0] == "bin_low,bin_high,count"


def test_enhance_stretches_and_warns_on_flat():
    f = Frame(np.linspace(0.2, 0.3, 100).reshape(10, 10))
    e = enhance_contrast(f, 0.0, 1.0)
    assert e.intensity.min() == 0.0 and e.intensity.max() == pytest.approx(1.0)
    flat = Frame(np.full((4, 4), 0.3))
    with pytest.warns(DegenerateContrastWarning):
        assert enhance_contrast(flat) is flat
    with pytest.raises(ValueError):
        enhance_contrast(f, 0.6, 0.4)


def test_enhance_sequence_uses_one_map():
    data = np.stack([np.full((4, 4), 0.1), np.full((4, 4), 0.2)])
    data[:, 0, 0] = [0.0, 0.3]
    v = enhance_sequence(VideoSequence(data, 10), 0.0, 1.0)
    # one affine map for the whole video: 0 -> 0, 0.3 -> 1
    np.testing.assert_allclose(v.data[:, 1, 1], [1 / 3, 2 / 3])
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        enhance_sequence(VideoSequence(data, 10))


def test_write_enhanced_names(tmp_path):
    src = tmp_path / "src"
    data = np.random.default_rng(2).uniform(0, 0.2, (2, 6, 6))
    files = save_sequence(VideoSequence(data, 10), src, prefix="img")
    out = write_enhanced(load_sequence(src, 10), files, tmp_path / "out")
    assert [p.name for p in out] == ["img_00000_enh.png", "img_00001_enh.png"]


def test_ramp_clamps_tenth_at_each_end():
    ramp = Frame(np.linspace(0, 1, 100).reshape(10, 10))
    e = enhance_contrast(ramp, 0.1, 0.9).intensity
    assert np.count_nonzero(e == 0.0) == 10 and np.count_nonzero(e == 1.0) == 10
    np.testing.assert_allclose(e[1, 5], (ramp.intensity[1, 5] - 0.1) / 0.8)


def test_full_range_frame_unchanged():
    f = Frame(np.linspace(0, 1, 64).reshape(8, 8))
    np.testing.assert_allclose(enhance_contrast(f, 0.0, 1.0).intensity, f.intensity, atol=1e-15)
