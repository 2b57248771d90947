import math

import numpy as np
import pytest

from phasevib.gabor import GaborParams, make_kernel
from phasevib.image_core import VideoSequence
from phasevib.pme import (MotionSignal, PhaseAmplitude, RoiSpec, UnreliableMotionError, auto_roi,
                          estimate_motion, phase_amplitude, phase_difference, reliability_mask,
                          transform, transform_array, wrap)
from phasevib.synth import GaussianSurfaceConfig, gaussian_surface_video
from oracles import brute_transform
from conftest import band_limited_texture


@pytest.fixture(scope="module")
def small_image():
    return np.random.default_rng(3).uniform(0, 1, (20, 23))


def test_transform_matches_direct_sum(small_image):
    p = GaborParams(6.0, theta=0.4, psi=0.3, gamma=1.25)
    k = make_kernel(p)
    fast = transform_array(small_image, k)
    slow = brute_transform(small_image, k.support_radius, lam=6.0, theta=0.4, psi=0.3, gamma=1.25)
    assert np.max(np.abs(fast - slow)) < 1e-12 * np.max(np.abs(slow))


def test_stack_equals_per_frame(small_image):
    k = make_kernel(GaborParams(6.0))
    stack = np.stack([small_image, small_image[::-1]])
    out = transform_array(stack, k)
    np.testing.assert_allclose(out[1], transform_array(small_image[::-1], k), atol=1e-12)
    field = transform(small_image, k, frame_index=7)
    assert field.frame_index == 7 and field.params == k.params


def test_kernel_larger_than_frame_rejected():
    with pytest.raises(ValueError):
        transform_array(np.zeros((10, 10)), make_kernel(GaborParams(16.0)))


def test_phase_amplitude_conventions():
    c = np.array([0j, -1 + 0j, 1j, -1 - 1e-300j])
    pa = phase_amplitude(c)
    assert pa.phase[0] == 0.0 and not pa.reliable[0]
    assert pa.phase[1] == pytest.approx(math.pi)
    assert pa.phase[2] == pytest.approx(math.pi / 2)
    assert np.all(pa.phase > -math.pi) and np.all(pa.phase <= math.pi)


def test_wrap_range():
    x = np.linspace(-20, 20, 1001)
    w = wrap(x)
    assert np.all(w > -math.pi) and np.all(w <= math.pi)
    np.testing.assert_allclose(np.cos(w), np.cos(x), atol=1e-12)
    assert wrap(-math.pi) == pytest.approx(math.pi)


def test_phase_change_of_shifted_sinusoid():
    lam, d = 16.0, 0.7
    x = np.arange(96, dtype=float)
    # zero mean: the wavelet's small DC response would otherwise ripple the phase
    img = lambda s: np.tile(np.cos(2 * math.pi * (x - s) / lam), (64, 1))
    dphi = phase_difference(img(0), img(d), make_kernel(GaborParams(lam)))
    interior = dphi[24:40, 30:66]
    # 3-sigma truncation leaves a ~1e-4 response at the mirror frequency
    np.testing.assert_allclose(interior, 2 * math.pi * d / lam, rtol=1e-3)


def test_local_gain_on_gaussian_surface():
    # phase slope of a Gaussian blob (std s) seen through the wavelet is k sigma^2 / (s^2 + sigma^2)
    cfg = GaussianSurfaceConfig(frame_count=50, std_px=8.0)
    video, _ = gaussian_surface_video(cfg)
    p = GaborParams(16.0)
    sig = estimate_motion(video, p, RoiSpec([(64, 64)]))
    expect = p.wavenumber * p.sigma ** 2 / (cfg.std_px ** 2 + p.sigma ** 2)
    assert sig.gain[0] == pytest.approx(expect, rel=1e-3)


def test_carrier_gain_scales_by_slope_ratio():
    video, truth = gaussian_surface_video(GaussianSurfaceConfig(frame_count=200))
    p = GaborParams(16.0)
    local = estimate_motion(video, p, RoiSpec([(64, 64)]))
    carrier = estimate_motion(video, p, RoiSpec([(64, 64)]), gain="carrier")
    ratio = carrier.displacement[1:, 0] / local.displacement[1:, 0]
    np.testing.assert_allclose(ratio, local.gain[0] / p.wavenumber, rtol=1e-9)
    assert carrier.metadata["gain_mode"] == "carrier"


def test_reliability_mask_threshold():
    amps = [PhaseAmplitude(np.zeros((1, 4)), np.array([[1.0, 0.2, 0.09, 0.0]]))] * 3
    assert reliability_mask(amps, 0.1).tolist() == [[True, True, False, False]]
    for bad in (0.0, 1.0, -0.5):
        with pytest.raises(ValueError):
            reliability_mask(amps, bad)


def test_textureless_scene_raises():
    video = VideoSequence(np.full((6, 64, 64), 0.5), 100)
    with pytest.raises(UnreliableMotionError):
        estimate_motion(video, GaborParams(16.0), RoiSpec([(32, 32)]))


def test_masked_points_are_zeroed():
    tex = band_limited_texture(64, 96, 16)
    frames = np.stack([tex(0.1 * k) for k in range(5)])
    frames[:, :, 64:] = 0.5  # flat right half
    video = VideoSequence(frames, 100)
    sig = estimate_motion(video, GaborParams(16.0), RoiSpec([(32, 32), (88, 32)]))
    assert sig.reliable.tolist() == [True, False]
    assert np.all(sig.displacement[:, 1] == 0)
    np.testing.assert_allclose(sig.displacement[:, 0], 0.1 * np.arange(5), rtol=0.05)


def test_roi_validation():
    with pytest.raises(ValueError):
        RoiSpec([])
    with pytest.raises(ValueError):
        RoiSpec([(200, 3)]).validate((64, 64))


def test_roi_theta_overrides_orientation():
    tex = band_limited_texture(64, 64, 16, spread=0.3)
    rot = lambda d: tex(0.0, 0.0).T if d == 0 else tex(d, 0.0).T  # motion along y
    video = VideoSequence(np.stack([rot(0), rot(0.5)]), 100)
    sig = estimate_motion(video, GaborParams(16.0), RoiSpec([(32, 32)], theta=math.pi / 2))
    assert sig.params.theta == pytest.approx(math.pi / 2)
    assert sig.displacement[1, 0] == pytest.approx(0.5, rel=0.05)


def test_neighborhood_mean_agrees():
    tex = band_limited_texture(64, 64, 16)
    video = VideoSequence(np.stack([tex(0), tex(0.3)]), 100)
    a = estimate_motion(video, GaborParams(16.0), RoiSpec([(32, 32)]))
    b = estimate_motion(video, GaborParams(16.0), RoiSpec([(32, 32)]), neighborhood_mean=True)
    assert b.displacement[1, 0] == pytest.approx(a.displacement[1, 0], rel=0.05)


def test_signal_round_trip(tmp_path):
    video, _ = gaussian_surface_video(GaussianSurfaceConfig(frame_count=20))
    sig = estimate_motion(video, GaborParams(16.0), RoiSpec([(64, 64), (60, 64)]))
    csv_path, json_path = sig.write(tmp_path / "m.csv")
    assert csv_path.read_text().splitlines()[0] == "time_s,point_0,point_1"
    back = MotionSignal.read(csv_path)
    np.testing.assert_array_equal(back.displacement, sig.displacement)
    assert back.params == sig.params and back.points == sig.points
    assert back.reliable.tolist() == sig.reliable.tolist()
    np.testing.assert_allclose(back.times(), sig.times())


def test_auto_roi_spacing():
    video, _ = gaussian_surface_video(GaussianSurfaceConfig(frame_count=10))
    roi = auto_roi(video, GaborParams(16.0), count=5, min_spacing=4)
    assert 1 <= len(roi.points) <= 5
    for i, (u, v) in enumerate(roi.points):
        for u2, v2 in roi.points[i + 1:]:
            assert max(abs(u - u2), abs(v - v2)) >= 4
