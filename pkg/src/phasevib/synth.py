"""Synthetic videos with known motion.

Two scenes: a Gaussian surface oscillating along x with a damped sinusoid,
and a clamped-free beam whose centreline moves as a sum of damped
Euler-Bernoulli bending modes.  Both return their ground truth.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from scipy import integrate

from .image_core import VideoSequence, save_sequence

# roots of cos(bL) cosh(bL) = -1, first four clamped-free bending modes
BETA_L = (1.8751, 4.6941, 7.8548, 10.9955)
PAPER_BASELINE_HZ = (5.85, 15.63, 37.11, 60.55)
SUPERSAMPLE = 4


class SceneConfigError(ValueError):
    pass


# --------------------------------------------------------------------------
# Gaussian surface
# --------------------------------------------------------------------------

@dataclass
class GaussianSurfaceConfig:
    amplitude: float = 1.0
    std_px: float = 8.0
    width: int = 128
    height: int = 128
    damping_ratio: float = 0.02
    natural_frequency_rad_s: float = 2 * math.pi * 5
    peak_displacement_px: float = 2.0
    frame_rate_hz: float = 500.0
    frame_count: int = 2000
    background: float = 0.0
    noise_std: float = 0.0
    seed: int = 0

    def validate(self):
        if not self.std_px > 0:
            raise SceneConfigError("std_px must be positive")
        if not 0 <= self.damping_ratio < 1:
            raise SceneConfigError("damping_ratio must lie in [0, 1)")
        if not self.natural_frequency_rad_s > 0:
            raise SceneConfigError("natural_frequency_rad_s must be positive")
        if self.frame_count < 1 or not self.frame_rate_hz > 0:
            raise SceneConfigError("need frame_count ≥ 1 and a positive frame rate")
        if self.background < 0 or self.amplitude < 0 or self.background + self.amplitude > 1:
            raise SceneConfigError("background + amplitude must stay within [0, 1]")
        _check_noise_headroom(self.noise_std, self.background, self.background + self.amplitude)
        cx = self.width / 2
        reach = abs(self.peak_displacement_px) + 3 * self.std_px
        if cx - reach < 0 or cx + reach > self.width - 1:
            raise SceneConfigError(
                f"surface (±{reach:.1f} px incl. 3 std) leaves the {self.width}-px grid")


def _check_noise_headroom(noise_std, lo, hi):
    if noise_std < 0:
        raise SceneConfigError("noise_std must be non-negative")
    if noise_std > 0 and (lo - 5 * noise_std < 0 or hi + 5 * noise_std > 1):
        raise SceneConfigError("noise would push intensities outside [0, 1]; clamping is not allowed")


def damped_motion(t, peak, damping_ratio, omega):
    return peak * np.exp(-damping_ratio * omega * t) * np.sin(omega * t)


def _add_noise(data, cfg, rng):
    if cfg.noise_std > 0:
        data = data + rng.normal(0.0, cfg.noise_std, data.shape)
    if data.min() < 0 or data.max() > 1:
        raise SceneConfigError("rendered intensities left [0, 1]")
    return data


def gaussian_surface_video(cfg: GaussianSurfaceConfig | None = None):
    """Return ``(video, truth)``; ``truth["displacement_px"]`` is δx per frame."""
    cfg = cfg or GaussianSurfaceConfig()
    cfg.validate()
    t = np.arange(cfg.frame_count) / cfg.frame_rate_hz
    dx = damped_motion(t, cfg.peak_displacement_px, cfg.damping_ratio, cfg.natural_frequency_rad_s)
    cx, cy = cfg.width / 2, cfg.height / 2
    x = np.arange(cfg.width, dtype=float)
    y = np.arange(cfg.height, dtype=float)
    gy = np.exp(-((y - cy) ** 2) / (2 * cfg.std_px ** 2))
    data = np.empty((cfg.frame_count, cfg.height, cfg.width))
    for k, d in enumerate(dx):
        gx = np.exp(-((x - cx - d) ** 2) / (2 * cfg.std_px ** 2))
        data[k] = cfg.background + cfg.amplitude * np.outer(gy, gx)
    data = _add_noise(data, cfg, np.random.default_rng(cfg.seed))
    truth = {
        "scene": "gaussian_surface",
        "config": asdict(cfg),
        "center_px": [cx, cy],
        "time_s": t.tolist(),
        "displacement_px": dx.tolist(),
        "frequency_hz": cfg.natural_frequency_rad_s / (2 * math.pi),
    }
    return VideoSequence(data, cfg.frame_rate_hz, bit_depth=16), truth


# --------------------------------------------------------------------------
# Cantilever beam
# --------------------------------------------------------------------------

def cantilever_mode_shape(mode: int, s) -> np.ndarray:
    """Clamped-free Euler-Bernoulli shape at normalized span ``s`` in [0, 1].

    Scaled so the tip value is +1.
    """
    bl = BETA_L[mode - 1]
    sig = (math.cosh(bl) + math.cos(bl)) / (math.sinh(bl) + math.sin(bl))
    z = bl * np.asarray(s, dtype=float)
    phi = np.cosh(z) - np.cos(z) - sig * (np.sinh(z) - np.sin(z))
    tip = math.cosh(bl) - math.cos(bl) - sig * (math.sinh(bl) - math.sin(bl))
    return phi / tip


def tip_mass_frequency_ratio(mode: int, mass_fraction: float) -> float:
    """Rayleigh-quotient factor f_loaded / f for a point mass at the tip.

    The mode shape is held fixed, so only the modal mass grows:
    ratio = sqrt(M / (M + m_tip * phi(L)^2)), beam mass uniform.
    """
    if mass_fraction < 0:
        raise ValueError("mass_fraction must be non-negative")
    modal_mass, _ = integrate.quad(lambda s: cantilever_mode_shape(mode, s) ** 2, 0.0, 1.0)
    return math.sqrt(modal_mass / (modal_mass + mass_fraction * 1.0))


@dataclass
class BeamSceneConfig:
    """A horizontal beam clamped at the left, rendered bright on dark.

    Mode amplitudes are tip displacements in pixels; frequencies are the
    oscillation frequencies of the undamaged beam.
    """

    width: int = 256
    height: int = 64
    length_m: float = 2.3
    margin_px: int = 8
    thickness_px: float = 12.0
    mode_frequencies_hz: tuple = PAPER_BASELINE_HZ
    mode_amplitudes_px: tuple = (0.1, 0.06, 0.03, 0.02)
    damping_ratios: tuple = (0.01, 0.004, 0.002, 0.001)
    tip_mass_fraction: float = 0.0
    foreground: float = 0.75
    background: float = 0.15
    noise_std: float = 0.0
    seed: int = 0
    frame_rate_hz: float = 500.0
    frame_count: int = 2000
    pme_wavelength_px: float = 16.0

    def __post_init__(self):
        self.mode_frequencies_hz = tuple(float(f) for f in self.mode_frequencies_hz)
        self.mode_amplitudes_px = tuple(float(a) for a in self.mode_amplitudes_px)
        self.damping_ratios = tuple(float(z) for z in self.damping_ratios)

    @property
    def length_px(self) -> float:
        return float(self.width - 2 * self.margin_px)

    @property
    def root_px(self) -> float:
        return float(self.margin_px)

    def frequencies(self) -> np.ndarray:
        """Frequencies after the tip-mass correction (equal to the configured
        ones for a bare beam)."""
        f = np.array(self.mode_frequencies_hz)
        if self.tip_mass_fraction:
            f = f * np.array([tip_mass_frequency_ratio(m + 1, self.tip_mass_fraction)
                              for m in range(len(f))])
        return f

    def validate(self):
        n = len(self.mode_frequencies_hz)
        if not (len(self.mode_amplitudes_px) == len(self.damping_ratios) == n):
            raise SceneConfigError("mode frequencies, amplitudes and damping ratios differ in length")
        if n == 0 or n > len(BETA_L):
            raise SceneConfigError(f"between 1 and {len(BETA_L)} modes are supported")
        f = np.array(self.mode_frequencies_hz)
        nyq = self.frame_rate_hz / 2
        if np.any(f <= 0) or np.any(f >= nyq):
            raise SceneConfigError(f"mode frequencies must lie in (0, {nyq:g}) Hz")
        if len(set(np.round(f, 9))) != n:
            raise SceneConfigError("mode frequencies overlap")
        if not all(0 <= z < 1 for z in self.damping_ratios):
            raise SceneConfigError("damping ratios must lie in [0, 1)")
        speed = sum(abs(a) * 2 * math.pi * fr for a, fr in zip(self.mode_amplitudes_px, f))
        if speed / self.frame_rate_hz >= self.pme_wavelength_px / 4:
            raise SceneConfigError("per-frame motion exceeds a quarter of the PME wavelength")
        reach = self.thickness_px / 2 + sum(abs(a) for a in self.mode_amplitudes_px) * 1.5
        if self.height / 2 - reach < 1:
            raise SceneConfigError("beam excursion leaves the frame")
        if self.length_px < 8:
            raise SceneConfigError("beam is too short for the frame width and margin")
        if not (0 <= self.background <= 1 and 0 <= self.foreground <= 1):
            raise SceneConfigError("foreground/background must lie in [0, 1]")
        _check_noise_headroom(self.noise_std, min(self.background, self.foreground),
                              max(self.background, self.foreground))


def beam_deflection(cfg: BeamSceneConfig, s, t) -> np.ndarray:
    """Transverse centreline displacement (px) at spans ``s`` and times ``t``.

    Returns shape ``(len(t), len(s))``.
    """
    s = np.atleast_1d(s)
    t = np.atleast_1d(t)
    out = np.zeros((t.size, s.size))
    for m, (f, a, z) in enumerate(zip(cfg.frequencies(), cfg.mode_amplitudes_px,
                                      cfg.damping_ratios), start=1):
        w = 2 * math.pi * f
        out += np.outer(a * np.exp(-z * w * t) * np.sin(w * t), cantilever_mode_shape(m, s))
    return out


def cantilever_beam_video(cfg: BeamSceneConfig | None = None):
    """Render the beam; return ``(video, truth)``.

    Columns are supersampled 4x along the span and rows use exact area
    coverage of the beam band, so sub-pixel motion survives rendering.
    """
    cfg = cfg or BeamSceneConfig()
    cfg.validate()
    t = np.arange(cfg.frame_count) / cfg.frame_rate_hz
    xs = (np.arange(cfg.width * SUPERSAMPLE) + 0.5) / SUPERSAMPLE
    s = (xs - cfg.root_px) / cfg.length_px
    on_beam = (s >= 0) & (s <= 1)
    defl = np.zeros((t.size, xs.size))
    defl[:, on_beam] = beam_deflection(cfg, s[on_beam], t)
    yc = cfg.height / 2
    rows = np.arange(cfg.height, dtype=float)
    half = cfg.thickness_px / 2
    data = np.empty((t.size, cfg.height, cfg.width))
    for k in range(t.size):
        top = yc + defl[k] - half
        bot = yc + defl[k] + half
        cover = np.clip(np.minimum(rows[:, None] + 1, bot) - np.maximum(rows[:, None], top), 0, 1)
        cover *= on_beam
        cover = cover.reshape(cfg.height, cfg.width, SUPERSAMPLE).mean(axis=2)
        data[k] = cfg.background + (cfg.foreground - cfg.background) * cover
    data = _add_noise(data, cfg, np.random.default_rng(cfg.seed))
    grid = np.linspace(0.0, 1.0, 101)
    truth = {
        "scene": "cantilever_beam",
        "config": asdict(cfg),
        "frequencies_hz": cfg.frequencies().tolist(),
        "undamaged_frequencies_hz": list(cfg.mode_frequencies_hz),
        "root_px": cfg.root_px,
        "tip_px": cfg.root_px + cfg.length_px,
        "rest_centerline_row": yc,
        "span_m": (grid * cfg.length_m).tolist(),
        "shapes": {str(m): cantilever_mode_shape(m, grid).tolist()
                   for m in range(1, len(cfg.mode_frequencies_hz) + 1)},
        "tip_displacement_px": beam_deflection(cfg, [1.0], t)[:, 0].tolist(),
    }
    return VideoSequence(data, cfg.frame_rate_hz, bit_depth=16), truth


def write_fixture(video: VideoSequence, truth: dict, directory, bit_depth: int = 16) -> Path:
    """Write the PNG frame directory and ``ground_truth.json``."""
    directory = Path(directory)
    save_sequence(video, directory, bit_depth=bit_depth)
    (directory / "ground_truth.json").write_text(json.dumps(truth, indent=1, sort_keys=True))
    return directory
