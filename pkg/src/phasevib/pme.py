"""Phase-based motion estimation.

Frames are mapped to complex coefficient fields by correlating them with a
Gabor wavelet; displacement along the wavelet orientation is recovered from
the temporal change of the coefficient phase.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np
from scipy import fft as sfft

from .gabor import GaborKernel, GaborParams, make_kernel
from .image_core import Frame, VideoSequence

DEFAULT_THRESHOLD = 0.1
# minimum local phase slope, as a fraction of the carrier wavenumber, for a
# point to count as measurable
MIN_GAIN_FRACTION = 0.05


class UnreliableMotionError(RuntimeError):
    """Every requested ROI point lacks usable texture or lighting."""


@dataclass
class CoefficientField:
    values: np.ndarray
    params: GaborParams
    frame_index: int = 0


@dataclass
class PhaseAmplitude:
    phase: np.ndarray
    amplitude: np.ndarray

    @property
    def reliable(self) -> np.ndarray:
        """False where the coefficient vanished and the phase is a placeholder."""
        return self.amplitude > 0


@dataclass
class RoiSpec:
    """ROI points as (u, v) = (column, row) pixel coordinates.

    ``theta`` is the motion direction to measure; ``None`` means "use the
    orientation of the Gabor parameters".
    """

    points: list[tuple[int, int]]
    theta: float | None = None

    def __post_init__(self):
        self.points = [(int(u), int(v)) for u, v in self.points]
        if not self.points:
            raise ValueError("ROI needs at least one point")

    def validate(self, shape: tuple[int, int]) -> None:
        h, w = shape
        for u, v in self.points:
            if not (0 <= u < w and 0 <= v < h):
                raise ValueError(f"ROI point ({u}, {v}) outside {w}x{h} frame")


@dataclass
class MotionSignal:
    """Per-point displacement series in pixels, relative to frame 0."""

    displacement: np.ndarray  # (frames, points)
    frame_rate_hz: float
    params: GaborParams
    points: list[tuple[int, int]]
    reliable: np.ndarray
    threshold_fraction: float = DEFAULT_THRESHOLD
    gain: np.ndarray | None = None
    metadata: dict = field(default_factory=dict)

    @property
    def n_frames(self) -> int:
        return self.displacement.shape[0]

    def times(self) -> np.ndarray:
        return np.arange(self.n_frames) / self.frame_rate_hz

    def series(self, point_index: int = 0) -> np.ndarray:
        return self.displacement[:, point_index]

    def meta(self) -> dict:
        d = {
            "gabor": self.params.to_dict(),
            "frame_rate_hz": self.frame_rate_hz,
            "threshold_fraction": self.threshold_fraction,
            "roi": [list(p) for p in self.points],
            "reliable": [bool(r) for r in self.reliable],
        }
        if self.gain is not None:
            d["phase_gain_rad_per_px"] = [float(g) for g in self.gain]
        d.update(self.metadata)
        return d

    def to_csv(self, path) -> None:
        path = Path(path)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["time_s"] + [f"point_{i}" for i in range(len(self.points))])
            for t, row in zip(self.times(), self.displacement):
                w.writerow([repr(float(t))] + [repr(float(v)) for v in row])

    def write(self, path) -> tuple[Path, Path]:
        """CSV of the series plus a ``.json`` metadata sidecar."""
        path = Path(path)
        self.to_csv(path)
        side = path.with_suffix(".json")
        side.write_text(json.dumps(self.meta(), indent=2, sort_keys=True))
        return path, side

    @classmethod
    def read(cls, path) -> "MotionSignal":
        path = Path(path)
        raw = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        meta = json.loads(path.with_suffix(".json").read_text())
        disp = raw[:, 1:]
        gain = meta.get("phase_gain_rad_per_px")
        extra = {k: v for k, v in meta.items() if k not in
                 ("gabor", "frame_rate_hz", "threshold_fraction", "roi", "reliable",
                  "phase_gain_rad_per_px")}
        return cls(disp, meta["frame_rate_hz"], GaborParams.from_dict(meta["gabor"]),
                   [tuple(p) for p in meta["roi"]], np.array(meta["reliable"], bool),
                   meta.get("threshold_fraction", DEFAULT_THRESHOLD),
                   None if gain is None else np.asarray(gain), extra)


# --------------------------------------------------------------------------
# Transform
# --------------------------------------------------------------------------

@lru_cache(maxsize=16)
def _kernel_spectrum(kernel_key, padded_shape):
    kernel = _KERNELS[kernel_key]
    r = kernel.support_radius
    # K[-d mod N] = g(d): circular convolution with K is correlation with g
    K = np.zeros(padded_shape, dtype=complex)
    flipped = kernel.values[::-1, ::-1]
    K[: 2 * r + 1, : 2 * r + 1] = flipped
    K = np.roll(K, (-r, -r), axis=(0, 1))
    return sfft.fft2(K)


_KERNELS: dict = {}


def _kernel_key(kernel: GaborKernel):
    key = (kernel.params, kernel.support_radius)
    _KERNELS.setdefault(key, kernel)
    return key


def kernel_spectrum(kernel: GaborKernel, padded_shape: tuple[int, int]) -> np.ndarray:
    """Transfer function of :func:`transform` on a padded grid of ``padded_shape``."""
    return _kernel_spectrum(_kernel_key(kernel), tuple(padded_shape))


def _check_fits(shape, kernel: GaborKernel):
    if kernel.size > min(shape):
        raise ValueError(
            f"kernel side {kernel.size} px does not fit in {shape[1]}x{shape[0]} frame")


def pad_reflect(data: np.ndarray, r: int) -> np.ndarray:
    pad = [(0, 0)] * (data.ndim - 2) + [(r, r), (r, r)]
    return np.pad(data, pad, mode="symmetric")


def transform_padded(frames: np.ndarray, kernel: GaborKernel) -> np.ndarray:
    """Coefficients over the whole reflection-padded grid (frame plus ``r``
    pixels of symmetric padding on each side)."""
    frames = np.asarray(frames, dtype=float)
    _check_fits(frames.shape[-2:], kernel)
    padded = pad_reflect(frames, kernel.support_radius)
    spec = kernel_spectrum(kernel, padded.shape[-2:])
    return sfft.ifft2(sfft.fft2(padded, axes=(-2, -1)) * spec, axes=(-2, -1))


def transform_array(frames: np.ndarray, kernel: GaborKernel) -> np.ndarray:
    """Coefficient fields for one frame ``(H, W)`` or a stack ``(T, H, W)``.

    C(u, v) = sum_x sum_y I(x, y) g(x - u, y - v) over the truncated kernel
    support, with symmetric reflection at the frame border.
    """
    h, w = np.shape(frames)[-2:]
    r = kernel.support_radius
    return transform_padded(frames, kernel)[..., r:r + h, r:r + w]


def transform(frame: Frame, kernel: GaborKernel, frame_index: int = 0) -> CoefficientField:
    arr = frame.intensity if isinstance(frame, Frame) else np.asarray(frame, dtype=float)
    return CoefficientField(transform_array(arr, kernel), kernel.params, frame_index)


def iter_coefficients(video: VideoSequence, kernel: GaborKernel,
                      chunk: int = 64) -> Iterator[tuple[int, np.ndarray]]:
    """Yield ``(start_index, coefficients)`` over frame chunks, in order."""
    for start in range(0, len(video), chunk):
        yield start, transform_array(video.data[start:start + chunk], kernel)


def phase_amplitude(field: CoefficientField | np.ndarray) -> PhaseAmplitude:
    c = field.values if isinstance(field, CoefficientField) else np.asarray(field)
    amp = np.abs(c)
    phase = np.angle(c)
    # principal value in (-pi, pi]
    phase = np.where(phase <= -np.pi, np.pi, phase)
    phase = np.where(amp == 0, 0.0, phase)
    return PhaseAmplitude(phase, amp)


def wrap(phase):
    """Map angles to (-pi, pi]."""
    out = np.mod(np.asarray(phase) + np.pi, 2 * np.pi) - np.pi
    return np.where(out <= -np.pi, np.pi, out)


def phase_difference(frame_a, frame_b, kernel: GaborKernel) -> np.ndarray:
    """Wrapped phase change phi_b - phi_a over the whole frame."""
    ca = transform_array(_as_array(frame_a), kernel)
    cb = transform_array(_as_array(frame_b), kernel)
    return np.angle(cb * np.conj(ca))


def _as_array(frame):
    return frame.intensity if isinstance(frame, Frame) else np.asarray(frame, dtype=float)


# --------------------------------------------------------------------------
# Reliability
# --------------------------------------------------------------------------

def _check_threshold(threshold_fraction):
    if not 0.0 < threshold_fraction < 1.0:
        raise ValueError("threshold_fraction must lie strictly between 0 and 1")


def mask_from_median_amplitude(median_amp: np.ndarray, threshold_fraction: float) -> np.ndarray:
    _check_threshold(threshold_fraction)
    peak = float(np.max(median_amp)) if median_amp.size else 0.0
    if peak <= 0.0:
        return np.zeros(median_amp.shape, dtype=bool)
    return median_amp >= threshold_fraction * peak


def reliability_mask(pa_series: Sequence[PhaseAmplitude],
                     threshold_fraction: float = DEFAULT_THRESHOLD) -> np.ndarray:
    """Pixels whose temporal-median amplitude reaches ``threshold_fraction``
    of the frame-wide maximum temporal-median amplitude."""
    _check_threshold(threshold_fraction)
    amps = np.stack([pa.amplitude for pa in pa_series])
    return mask_from_median_amplitude(np.median(amps, axis=0), threshold_fraction)


def median_amplitude(video: VideoSequence, kernel: GaborKernel, chunk: int = 64) -> np.ndarray:
    amps = np.empty((len(video),) + video.shape, dtype=np.float32)
    for start, c in iter_coefficients(video, kernel, chunk):
        amps[start:start + c.shape[0]] = np.abs(c)
    return np.median(amps, axis=0)


# --------------------------------------------------------------------------
# Motion
# --------------------------------------------------------------------------

_STENCIL = 2  # neighbourhood half-width sampled around each ROI point


def _core_slopes(c: np.ndarray, theta: float) -> np.ndarray:
    """Spatial phase derivative along ``theta`` on the 3x3 core of 5x5 patches.

    Central differences of phase are taken as angles of conjugate products,
    so wrapping never enters.
    """
    dx = np.angle(c[..., 1:4, 2:] * np.conj(c[..., 1:4, :-2])) / 2.0
    dy = np.angle(c[..., 2:, 1:4] * np.conj(c[..., :-2, 1:4])) / 2.0
    return math.cos(theta) * dx + math.sin(theta) * dy


def _patches(c: np.ndarray, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    """Gather (T, P, 5, 5) neighbourhoods with edge-clamped indices."""
    h, w = c.shape[-2:]
    off = np.arange(-_STENCIL, _STENCIL + 1)
    rr = np.clip(rows[:, None] + off[None, :], 0, h - 1)
    cc = np.clip(cols[:, None] + off[None, :], 0, w - 1)
    return c[:, rr[:, :, None], cc[:, None, :]]


def estimate_motion(video: VideoSequence, params: GaborParams, roi: RoiSpec,
                    threshold_fraction: float = DEFAULT_THRESHOLD, gain: str = "local",
                    neighborhood_mean: bool = False, chunk: int = 64) -> MotionSignal:
    """Displacement along the ROI orientation at each ROI point, in pixels.

    Frame-to-frame phase changes are wrapped to (-pi, pi] and accumulated, so
    per-frame motion must stay below a quarter wavelength.

    ``gain`` picks the phase-to-pixel factor. ``"carrier"`` divides by the
    wavelet wavenumber 2π/λ. ``"local"`` (default) divides by the measured
    spatial phase slope along the orientation at each point (its temporal
    median), which is exact for rigid local motion whatever the texture.
    Points whose slope is flat or reversed are marked unreliable.
    """
    video.require_motion_length()
    _check_threshold(threshold_fraction)
    if gain not in ("local", "carrier"):
        raise ValueError("gain must be 'local' or 'carrier'")
    if roi.theta is not None and roi.theta != params.theta:
        params = replace(params, theta=roi.theta)
    roi.validate(video.shape)
    kernel = make_kernel(params)
    _check_fits(video.shape, kernel)

    cols = np.array([p[0] for p in roi.points])
    rows = np.array([p[1] for p in roi.points])
    n = len(video)
    patches = np.empty((n, len(cols), 2 * _STENCIL + 1, 2 * _STENCIL + 1), dtype=complex)
    amps = np.empty((n,) + video.shape, dtype=np.float32)
    for start, c in iter_coefficients(video, kernel, chunk):
        stop = start + c.shape[0]
        patches[start:stop] = _patches(c, rows, cols)
        amps[start:stop] = np.abs(c)
    med = np.median(amps, axis=0)
    del amps
    mask = mask_from_median_amplitude(med, threshold_fraction)

    k = params.wavenumber
    m = _STENCIL
    # per-pixel increments over the 3x3 core of every patch
    core = patches[:, :, m - 1:m + 2, m - 1:m + 2]
    inc = np.angle(core[1:] * np.conj(core[:-1]))
    if gain == "local":
        slopes = _core_slopes(patches, params.theta)
        h = -np.median(slopes, axis=0)
    else:
        h = np.full((len(cols), 3, 3), k)
    usable = h > MIN_GAIN_FRACTION * k
    safe_h = np.where(usable, h, k)
    disp = np.concatenate([np.zeros((1,) + inc.shape[1:]), np.cumsum(inc, axis=0)]) / safe_h

    h_img, w_img = video.shape
    rr = np.clip(rows[:, None] + np.arange(-1, 2), 0, h_img - 1)
    cc = np.clip(cols[:, None] + np.arange(-1, 2), 0, w_img - 1)
    core_mask = mask[rr[:, :, None], cc[:, None, :]] & usable
    if neighborhood_mean:
        weights = med[rr[:, :, None], cc[:, None, :]] * core_mask
        wsum = weights.sum(axis=(1, 2))
        reliable = wsum > 0
        wn = weights / np.where(reliable, wsum, 1.0)[:, None, None]
        series = np.einsum("tpij,pij->tp", disp, wn)
    else:
        reliable = core_mask[:, 1, 1]
        series = disp[:, :, 1, 1]
    series = np.where(reliable[None, :], series, 0.0)
    if not reliable.any():
        raise UnreliableMotionError(
            "all ROI points fall below the amplitude reliability threshold; "
            "the scene lacks texture or light at those pixels")
    gains = h[:, 1, 1]
    return MotionSignal(series, video.frame_rate_hz, params, list(roi.points), reliable,
                        threshold_fraction, gains,
                        {"gain_mode": gain, "neighborhood_mean": neighborhood_mean})


def auto_roi(video: VideoSequence, params: GaborParams, count: int = 8,
             threshold_fraction: float = DEFAULT_THRESHOLD, min_spacing: int = 4) -> RoiSpec:
    """Pick the ``count`` strongest-amplitude pixels, at least ``min_spacing`` apart."""
    kernel = make_kernel(params)
    stride = max(1, len(video) // 64)
    sub = VideoSequence(video.data[::stride], video.frame_rate_hz, video.bit_depth)
    med = median_amplitude(sub, kernel)
    r = kernel.support_radius // 2
    inner = np.zeros_like(med, dtype=bool)
    inner[r:med.shape[0] - r, r:med.shape[1] - r] = True
    mask = mask_from_median_amplitude(med, threshold_fraction) & inner
    order = np.argsort(np.where(mask, med, -1).ravel())[::-1]
    picked: list[tuple[int, int]] = []
    for flat in order:
        if not mask.flat[flat] or len(picked) >= count:
            break
        v, u = divmod(int(flat), med.shape[1])
        if all(max(abs(u - pu), abs(v - pv)) >= min_spacing for pu, pv in picked):
            picked.append((u, v))
    if not picked:
        raise UnreliableMotionError("no pixel passes the amplitude reliability threshold")
    return RoiSpec(picked, params.theta)
