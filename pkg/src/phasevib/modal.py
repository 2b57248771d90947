"""Spectra, peak picking, deflection-shape extraction, MAC and damage decision."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import fft as sfft
from scipy import ndimage, signal

from .image_core import VideoSequence
from .pme import MotionSignal

DEFAULT_FREQ_THRESHOLD_HZ = 0.6
DEFAULT_MAC_THRESHOLD = 0.85
BASELINE_CONSISTENT = "baseline-consistent"
DAMAGE_INDICATED = "damage-indicated"


class ShapeExtractionError(RuntimeError):
    pass


@dataclass
class Spectrum:
    frequencies: np.ndarray
    magnitudes: np.ndarray
    frame_rate_hz: float
    window: str = "rectangular"

    @property
    def df(self) -> float:
        return float(self.frequencies[1] - self.frequencies[0])

    @property
    def nyquist(self) -> float:
        return self.frame_rate_hz / 2

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["frequency_hz", "magnitude"])
            for f, m in zip(self.frequencies, self.magnitudes):
                w.writerow([repr(float(f)), repr(float(m))])


@dataclass
class ModePeak:
    frequency: float
    magnitude: float
    prominence: float

    def to_dict(self) -> dict:
        return {"frequency_hz": self.frequency, "magnitude": self.magnitude,
                "prominence": self.prominence}


def amplitude_spectrum(x: np.ndarray, frame_rate_hz: float) -> Spectrum:
    x = np.asarray(x, dtype=float)
    if x.shape[0] < 8:
        raise ValueError("need at least 8 samples for a spectrum")
    n = x.shape[0]
    mag = np.abs(sfft.rfft(x - x.mean(axis=0), axis=0)) * (2.0 / n)
    return Spectrum(sfft.rfftfreq(n, 1.0 / frame_rate_hz), mag, frame_rate_hz)


def spectrum(sig: MotionSignal, point_index: int | None = 0) -> Spectrum:
    """Single-sided amplitude spectrum of the mean-removed series (no window).

    ``point_index=None`` averages the magnitudes over all reliable points.
    """
    if point_index is None:
        idx = np.flatnonzero(sig.reliable)
        if idx.size == 0:
            raise ValueError("no reliable points in the motion signal")
        spec = amplitude_spectrum(sig.displacement[:, idx], sig.frame_rate_hz)
        spec.magnitudes = spec.magnitudes.mean(axis=1)
        return spec
    if not sig.reliable[point_index]:
        raise ValueError(f"point {point_index} is masked as unreliable")
    return amplitude_spectrum(sig.displacement[:, point_index], sig.frame_rate_hz)


def _refine(mag: np.ndarray, k: int) -> float:
    """Parabolic vertex offset in bins around local maximum ``k``."""
    if k <= 0 or k >= mag.size - 1:
        return 0.0
    a, b, c = mag[k - 1], mag[k], mag[k + 1]
    den = a - 2 * b + c
    return 0.0 if den == 0 else float(np.clip(0.5 * (a - c) / den, -0.5, 0.5))


def pick_peaks(spec: Spectrum, min_prominence_fraction: float = 0.05,
               min_separation_hz: float = 2.0, max_peaks: int = 8,
               refine: bool = True) -> list[ModePeak]:
    """Local maxima whose height and prominence both exceed
    ``min_prominence_fraction`` of the global maximum, greedily thinned (largest first) to ``min_separation_hz``, sorted by
    frequency.  ``refine`` places each peak at the vertex of a parabola
    through its bin and the two neighbours.
    """
    if min_prominence_fraction <= 0 or min_separation_hz <= 0 or max_peaks <= 0:
        raise ValueError("peak-picking thresholds must be positive")
    mag = np.asarray(spec.magnitudes, dtype=float)
    if mag.size < 3:
        return []
    top = float(mag[1:].max()) if mag.size > 1 else 0.0
    if top <= 0:
        return []
    floor = min_prominence_fraction * top
    idx, props = signal.find_peaks(mag, height=floor, prominence=floor)
    df = spec.df
    candidates = [(mag[k], k, props["prominences"][i]) for i, k in enumerate(idx)
                  if 0 < spec.frequencies[k] < spec.nyquist]
    candidates.sort(key=lambda c: -c[0])
    kept: list[ModePeak] = []
    for m, k, prom in candidates:
        f = float(spec.frequencies[k] + (_refine(mag, k) * df if refine else 0.0))
        if all(abs(f - p.frequency) >= min_separation_hz for p in kept):
            kept.append(ModePeak(f, float(m), float(prom)))
        if len(kept) == max_peaks:
            break
    return sorted(kept, key=lambda p: p.frequency)


# --------------------------------------------------------------------------
# Deflection shapes
# --------------------------------------------------------------------------

@dataclass
class DeflectionShape:
    span_position: np.ndarray
    displacement: np.ndarray
    frequency: float | None = None
    rest_edge: np.ndarray | None = None
    metadata: dict = field(default_factory=dict)

    @property
    def sample_count(self) -> int:
        return int(self.displacement.size)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["span_m", "displacement"])
            for s, d in zip(self.span_position, self.displacement):
                w.writerow([repr(float(s)), repr(float(d))])

    @classmethod
    def from_csv(cls, path, frequency=None) -> "DeflectionShape":
        raw = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(raw[:, 0], raw[:, 1], frequency)


def normalize_shape(d: np.ndarray) -> np.ndarray:
    """Scale so the largest-magnitude sample is exactly +1."""
    k = int(np.argmax(np.abs(d)))
    if d[k] == 0:
        raise ValueError("zero-norm shape")
    out = d / d[k]
    out[k] = 1.0
    return out


def repair_outliers(values: np.ndarray, window: int = 9, n_mad: float = 3.0,
                    floor: float = 0.01) -> np.ndarray:
    """Replace samples further than ``n_mad`` MADs from a moving median by
    that median.

    The MAD is floored at ``floor`` times the peak magnitude so the natural
    curvature of a smooth shape is never mistaken for an outlier.
    """
    med = ndimage.median_filter(values, size=window, mode="nearest")
    resid = values - med
    mad = np.median(np.abs(resid - np.median(resid)))
    mad = max(mad, floor * float(np.max(np.abs(values))), np.finfo(float).tiny)
    bad = np.abs(resid) > n_mad * 1.4826 * mad
    out = values.copy()
    out[bad] = med[bad]
    return out


def _edges_in_block(block: np.ndarray, smoothing: float, polarity: np.ndarray) -> tuple:
    grad = ndimage.gaussian_filter1d(block, smoothing, axis=-2, order=1, mode="nearest")
    grad = grad * polarity[None, None, :]
    k = np.argmax(grad, axis=-2)  # (T, W)
    n = grad.shape[-2]
    kc = np.clip(k, 1, n - 2)
    take = lambda off: np.take_along_axis(grad, (kc + off)[:, None, :], axis=-2)[:, 0, :]
    a, b, c = take(-1), take(0), take(1)
    den = a - 2 * b + c
    off = np.where(den < 0, 0.5 * (a - c) / np.where(den == 0, -1, den), 0.0)
    off = np.clip(off, -0.5, 0.5)
    off = np.where(k == kc, off, 0.0)
    return k + off, np.take_along_axis(grad, k[:, None, :], axis=-2)[:, 0, :]


def locate_edges(data: np.ndarray, smoothing: float = 2.0, edge: str = "upper",
                 chunk: int = 64) -> tuple[np.ndarray, np.ndarray]:
    """Sub-pixel edge row per (frame, column) and the per-column edge strength.

    Rows are the transverse axis.  ``edge="upper"`` tracks the first edge
    met going down the rows, whatever its polarity.
    """
    ref = np.median(data[:: max(1, data.shape[0] // 32)], axis=0)
    g = ndimage.gaussian_filter1d(ref, smoothing, axis=0, order=1, mode="nearest")
    # the beam brighter than its surroundings gives a rising upper edge
    brighter = np.sign(g.max(axis=0) + g.min(axis=0))
    brighter[brighter == 0] = 1
    polarity = brighter if edge == "upper" else -brighter
    strength = (g * polarity).max(axis=0)
    rows = np.empty(data.shape[0:1] + data.shape[2:])
    for start in range(0, data.shape[0], chunk):
        rows[start:start + chunk], _ = _edges_in_block(data[start:start + chunk], smoothing, polarity)
    return rows, strength


def extract_shape(magnified: VideoSequence, structure_length_m: float, span_axis: str = "x",
                  smoothing_window: float = 2.0, frequency: float | None = None,
                  edge: str = "upper", edge_threshold: float = 0.25,
                  outlier_window: int = 9) -> DeflectionShape:
    """Quantify the deflection shape in a single-band magnified video.

    Per span column the transverse edge is the extremum of the Gaussian
    smoothed intensity gradient (``smoothing_window`` is its std in px).
    The frame with the largest summed deflection, minus the temporal median
    edge, is the shape.  Outliers are repaired, the span is mapped to
    ``[0, structure_length_m]`` over the detected columns, and the result
    is scaled to a maximum of +1.
    """
    if span_axis not in ("x", "y"):
        raise ValueError("span_axis must be 'x' or 'y'")
    data = magnified.data if span_axis == "x" else np.swapaxes(magnified.data, 1, 2)
    rows, strength = locate_edges(data, smoothing_window, edge)
    peak = strength.max()
    detected = (strength >= edge_threshold * peak) & (peak > 0)
    n_cols = detected.size
    if np.count_nonzero(~detected) > 0.2 * n_cols:
        raise ShapeExtractionError(
            f"no detectable edge in {np.count_nonzero(~detected)} of {n_cols} columns; "
            "contrast is insufficient (try enhance_contrast)")
    cols = np.flatnonzero(detected)
    c0, c1 = cols[0], cols[-1]
    span_cols = np.arange(c0, c1 + 1)
    rest = np.median(rows, axis=0)
    defl = rows - rest[None, :]
    inside = detected[c0:c1 + 1]
    score = np.abs(defl[:, c0:c1 + 1][:, inside]).sum(axis=1)
    t_star = int(np.argmax(score))
    shape = defl[t_star, c0:c1 + 1].copy()
    if not inside.all():
        shape[~inside] = np.interp(span_cols[~inside], span_cols[inside], shape[inside])
    shape = repair_outliers(shape, outlier_window)
    span = (span_cols - c0) / max(c1 - c0, 1) * structure_length_m
    return DeflectionShape(
        span, normalize_shape(shape), frequency, rest[c0:c1 + 1],
        {"frame_index": t_star, "columns": [int(c0), int(c1)], "span_axis": span_axis,
         "edge": edge, "smoothing_window": smoothing_window,
         "peak_deflection_px": float(np.max(np.abs(shape)))})


def resample_shape(shape: DeflectionShape, grid: np.ndarray) -> np.ndarray:
    return np.interp(grid, shape.span_position, shape.displacement)


def mac(shape_a, shape_b, samples: int | None = None) -> float:
    """Modal assurance criterion |a·b|² / ((a·a)(b·b)).

    :class:`DeflectionShape` inputs are linearly resampled onto a common
    grid over their overlapping span; plain arrays must match in length.
    """
    if isinstance(shape_a, DeflectionShape) and isinstance(shape_b, DeflectionShape):
        lo = max(shape_a.span_position[0], shape_b.span_position[0])
        hi = min(shape_a.span_position[-1], shape_b.span_position[-1])
        if not hi > lo:
            raise ValueError("shapes do not overlap in span")
        n = samples or max(shape_a.sample_count, shape_b.sample_count)
        grid = np.linspace(lo, hi, n)
        a, b = resample_shape(shape_a, grid), resample_shape(shape_b, grid)
    else:
        a = np.asarray(getattr(shape_a, "displacement", shape_a), dtype=float)
        b = np.asarray(getattr(shape_b, "displacement", shape_b), dtype=float)
        if a.shape != b.shape:
            raise ValueError(f"shape vectors differ in length: {a.shape} vs {b.shape}")
    aa, bb = float(a @ a), float(b @ b)
    if aa == 0 or bb == 0:
        raise ValueError("zero-norm shape")
    return min(1.0, float(a @ b) ** 2 / (aa * bb))


# --------------------------------------------------------------------------
# Damage decision
# --------------------------------------------------------------------------

@dataclass
class FeatureSet:
    """Resonant frequencies (Hz) and optional matching deflection shapes."""

    frequencies: list[float]
    shapes: list[DeflectionShape] | None = None

    @classmethod
    def from_peaks(cls, peaks: Sequence[ModePeak], shapes=None) -> "FeatureSet":
        return cls([p.frequency for p in peaks], shapes)


@dataclass
class DamageReport:
    baseline_frequencies: list[float]
    test_frequencies: list[float]
    frequency_shifts: list[float]
    macs: list[float | None]
    verdict: str
    freq_threshold_hz: float
    mac_threshold: float
    metadata: dict = field(default_factory=dict)

    @property
    def damaged(self) -> bool:
        return self.verdict == DAMAGE_INDICATED

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "thresholds": {"freq_threshold_hz": self.freq_threshold_hz,
                           "mac_threshold": self.mac_threshold},
            "modes": [
                {"mode": i + 1, "baseline_hz": fb, "test_hz": ft, "shift_hz": sh, "mac": m}
                for i, (fb, ft, sh, m) in enumerate(zip(self.baseline_frequencies,
                                                        self.test_frequencies,
                                                        self.frequency_shifts, self.macs))
            ],
            "metadata": self.metadata,
        }

    def to_text(self) -> str:
        lines = [f"verdict: {self.verdict}",
                 f"thresholds: |shift| > {self.freq_threshold_hz:g} Hz or MAC < {self.mac_threshold:g}",
                 "",
                 f"{'mode':>4}  {'baseline_hz':>11}  {'test_hz':>9}  {'shift_hz':>9}  {'mac':>6}"]
        for i, (fb, ft, sh, m) in enumerate(zip(self.baseline_frequencies, self.test_frequencies,
                                                self.frequency_shifts, self.macs)):
            ms = "-" if m is None else f"{m:.4f}"
            lines.append(f"{i + 1:>4}  {fb:>11.3f}  {ft:>9.3f}  {sh:>+9.3f}  {ms:>6}")
        return "\n".join(lines) + "\n"

    def write(self, stem) -> tuple[Path, Path]:
        stem = Path(stem)
        js, tx = stem.with_suffix(".json"), stem.with_suffix(".txt")
        js.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True))
        tx.write_text(self.to_text())
        return js, tx


def detect_damage(baseline: FeatureSet, test: FeatureSet,
                  freq_threshold_hz: float = DEFAULT_FREQ_THRESHOLD_HZ,
                  mac_threshold: float = DEFAULT_MAC_THRESHOLD) -> DamageReport:
    """Compare modes paired in ascending-frequency order.

    Damage is indicated when any shift exceeds ``freq_threshold_hz`` in
    magnitude or any paired-shape MAC falls below ``mac_threshold``.
    """
    fb, ft = list(baseline.frequencies), list(test.frequencies)
    if len(fb) != len(ft):
        raise ValueError(f"mode-count mismatch: baseline {len(fb)} vs test {len(ft)}")
    ob, ot = np.argsort(fb), np.argsort(ft)
    fb = [float(fb[i]) for i in ob]
    ft = [float(ft[i]) for i in ot]
    shifts = [t - b for b, t in zip(fb, ft)]
    macs: list[float | None] = [None] * len(fb)
    if baseline.shapes is not None and test.shapes is not None:
        if len(baseline.shapes) != len(fb) or len(test.shapes) != len(ft):
            raise ValueError("each mode needs exactly one shape")
        sb = [baseline.shapes[i] for i in ob]
        st = [test.shapes[i] for i in ot]
        macs = [mac(a, b) for a, b in zip(sb, st)]
    damaged = any(abs(s) > freq_threshold_hz for s in shifts) or \
        any(m is not None and m < mac_threshold for m in macs)
    return DamageReport(fb, ft, shifts, macs, DAMAGE_INDICATED if damaged else BASELINE_CONSISTENT,
                        freq_threshold_hz, mac_threshold)
