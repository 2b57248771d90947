"""Phase-based motion magnification in a temporal frequency band.

The temporal filter is an ideal (brick-wall) band-pass realised with the
FFT of each unwrapped phase series: bins with ``|f - f_c| <= b/2`` pass at
gain ``alpha``, everything else is removed from the AC part, and the
temporal mean is kept.  A general rational filter ``A(L)/B(L)`` in the lag
operator is not implemented; offline processing affords the ideal response.
"""
from __future__ import annotations

import csv
import json
import warnings
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from scipy import fft as sfft

from .gabor import GaborParams, make_kernel
from .image_core import VideoSequence
from .pme import MotionSignal, kernel_spectrum, transform_padded

# Wiener floor of the inverse transform, relative to the peak kernel energy
DEFAULT_REGULARIZATION = 1e-3
CLAMP_WARN_FRACTION = 0.01


class EmptyBandError(ValueError):
    """No FFT bin falls inside the requested passband."""


class ClampWarning(UserWarning):
    pass


@dataclass(frozen=True)
class BandpassSpec:
    f_c: float
    b: float
    alpha: float = 1.0

    def __post_init__(self):
        if not self.b > 0:
            raise ValueError("passband width b must be positive")
        if self.f_c - self.b / 2 <= 0:
            raise ValueError("passband must start above 0 Hz (f_c - b/2 > 0)")
        if self.alpha < 0:
            raise ValueError("alpha must be non-negative")

    @property
    def low(self) -> float:
        return self.f_c - self.b / 2

    @property
    def high(self) -> float:
        return self.f_c + self.b / 2

    def validate(self, frame_rate_hz: float) -> None:
        if not self.high < frame_rate_hz / 2:
            raise ValueError(
                f"passband upper edge {self.high:g} Hz is not below Nyquist "
                f"{frame_rate_hz / 2:g} Hz")

    def to_dict(self) -> dict:
        return asdict(self)


def band_mask(n: int, spec: BandpassSpec, frame_rate_hz: float) -> np.ndarray:
    """Boolean mask over ``rfftfreq(n)`` selecting the passband bins."""
    freqs = sfft.rfftfreq(n, 1.0 / frame_rate_hz)
    mask = np.abs(freqs - spec.f_c) <= spec.b / 2
    if not mask.any():
        raise EmptyBandError(
            f"no frequency bin inside {spec.low:g}-{spec.high:g} Hz with "
            f"{n} samples at {frame_rate_hz:g} fps (bin spacing "
            f"{frame_rate_hz / n:g} Hz); widen b or record longer")
    return mask


def ideal_bandpass(series: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Band-limited AC part of ``series`` along axis 0 (unity gain)."""
    n = series.shape[0]
    spec = sfft.rfft(series, axis=0)
    spec[~mask] = 0
    return sfft.irfft(spec, n=n, axis=0)


def bandpass_phase(phase_series, spec: BandpassSpec, frame_rate_hz: float) -> np.ndarray:
    """``mean + alpha * BP(series - mean)`` along axis 0.

    Works for one series or an array of series stacked along the trailing
    axes.  Input phase should already be unwrapped in time.
    """
    x = np.asarray(phase_series, dtype=float)
    if x.shape[0] < 4:
        raise ValueError("need at least 4 samples to filter")
    spec.validate(frame_rate_hz)
    mask = band_mask(x.shape[0], spec, frame_rate_hz)
    mean = x.mean(axis=0)
    return mean + spec.alpha * ideal_bandpass(x - mean, mask)


# --------------------------------------------------------------------------
# Reconstruction
# --------------------------------------------------------------------------

class Reconstructor:
    """Regularised inverse of the Gabor transform on a fixed frame size.

    Works on coefficients over the reflection-padded grid (see
    :func:`transform_padded`): the field is correlated with the conjugate
    kernel (the adjoint of the transform), each spatial frequency is divided
    by the kernel energy there with a Wiener floor
    ``regularization * max|H|^2``, and the frame is cropped out.  Twice the
    real part is returned because the complex wavelet sees only one half of
    the spectrum of a real image.
    """

    def __init__(self, params: GaborParams, shape: tuple[int, int],
                 regularization: float = DEFAULT_REGULARIZATION):
        self.kernel = make_kernel(params)
        self.shape = tuple(shape)
        r = self.kernel.support_radius
        self.padded_shape = (shape[0] + 2 * r, shape[1] + 2 * r)
        H = kernel_spectrum(self.kernel, self.padded_shape)
        energy = np.abs(H) ** 2
        self.filter = np.conj(H) / (energy + regularization * energy.max())

    def __call__(self, coeffs: np.ndarray) -> np.ndarray:
        if coeffs.shape[-2:] != self.padded_shape:
            raise ValueError(f"expected coefficients over the padded grid {self.padded_shape}, "
                             f"got {coeffs.shape[-2:]}")
        r = self.kernel.support_radius
        h, w = self.shape
        out = sfft.ifft2(sfft.fft2(coeffs, axes=(-2, -1)) * self.filter, axes=(-2, -1))
        return 2.0 * out.real[..., r:r + h, r:r + w]


def reconstruct_frame(frame: np.ndarray, params: GaborParams,
                      regularization: float = DEFAULT_REGULARIZATION) -> np.ndarray:
    """Self-reconstruction of ``frame`` from its unmodified coefficients."""
    frame = np.asarray(frame, dtype=float)
    rec = Reconstructor(params, frame.shape[-2:], regularization)
    return rec(transform_padded(frame, rec.kernel))


def reconstruction_residual(frame: np.ndarray, params: GaborParams,
                            regularization: float = DEFAULT_REGULARIZATION) -> np.ndarray:
    """The part of ``frame`` the single-band transform cannot represent."""
    return np.asarray(frame, dtype=float) - reconstruct_frame(frame, params, regularization)


@dataclass
class MagnifiedVideo:
    video: VideoSequence
    spec: BandpassSpec
    params: GaborParams
    clamped_fraction: float
    metadata: dict

    def write(self, directory, bit_depth: int | None = None) -> Path:
        from .image_core import save_sequence

        directory = Path(directory)
        save_sequence(self.video, directory, bit_depth=bit_depth)
        (directory / "metadata.json").write_text(json.dumps(self.metadata, indent=2, sort_keys=True))
        return directory


def magnify_video(video: VideoSequence, params: GaborParams, spec: BandpassSpec,
                  regularization: float = DEFAULT_REGULARIZATION, frame_chunk: int = 32,
                  pixel_chunk: int = 8192) -> MagnifiedVideo:
    """Amplify the motion inside ``spec``'s band by ``spec.alpha``.

    Each coefficient keeps its amplitude and gets the phase
    ``phi + (alpha - 1) * BP(phi)``, with ``BP`` the ideal band-pass of the
    time-unwrapped phase.  Motion outside the band is therefore left at unit
    gain.  Frames are rebuilt as ``I + R(C' - C)`` where ``R`` is the
    regularised inverse transform, which is the same as adding the residual
    ``I - R(C)`` back to ``R(C')``.
    """
    video.require_motion_length()
    spec.validate(video.frame_rate_hz)
    n = len(video)
    if n < 4:
        raise ValueError("need at least 4 frames to filter")
    mask = band_mask(n, spec, video.frame_rate_hz)
    rec = Reconstructor(params, video.shape, regularization)
    ph, pw = rec.padded_shape

    # phases are processed over the padded grid so reconstruction sees no seam
    coeffs = np.empty((n, ph, pw), dtype=np.complex64)
    for start in range(0, n, frame_chunk):
        block = transform_padded(video.data[start:start + frame_chunk], rec.kernel)
        coeffs[start:start + block.shape[0]] = block

    flat = coeffs.reshape(n, ph * pw)
    gain = spec.alpha - 1.0
    for j in range(0, ph * pw, pixel_chunk):
        c = flat[:, j:j + pixel_chunk].astype(complex)
        phase = np.unwrap(np.angle(c), axis=0)
        shift = gain * ideal_bandpass(phase - phase.mean(axis=0), mask)
        # coefficient change C' - C, stored in place
        flat[:, j:j + pixel_chunk] = c * np.expm1(1j * shift)

    out = np.empty((n,) + video.shape)
    for start in range(0, n, frame_chunk):
        stop = min(n, start + frame_chunk)
        out[start:stop] = video.data[start:stop] + rec(coeffs[start:stop])
    del coeffs
    clamped = np.count_nonzero((out < 0.0) | (out > 1.0)) / out.size
    if clamped > CLAMP_WARN_FRACTION:
        warnings.warn(f"{100 * clamped:.2f}% of output pixels clamped to [0, 1]",
                      ClampWarning, stacklevel=2)
    np.clip(out, 0.0, 1.0, out=out)
    meta = {
        "bandpass": spec.to_dict(),
        "gabor": params.to_dict(),
        "frame_rate_hz": video.frame_rate_hz,
        "frames": n,
        "regularization": regularization,
        "clamped_fraction": clamped,
        "filter": "ideal FFT band-pass on time-unwrapped phase; out-of-band motion at unit gain",
    }
    return MagnifiedVideo(VideoSequence(out, video.frame_rate_hz, video.bit_depth),
                          spec, params, clamped, meta)


# --------------------------------------------------------------------------
# Gain report
# --------------------------------------------------------------------------

@dataclass
class BandGainReport:
    spec: BandpassSpec
    in_band_gain: list[float]
    out_band_gain: list[float]
    out_band_max_gain: list[float]
    points: list

    def to_dict(self) -> dict:
        return {"bandpass": self.spec.to_dict(), "points": [list(p) for p in self.points],
                "in_band_gain": self.in_band_gain, "out_band_gain": self.out_band_gain,
                "out_band_max_gain": self.out_band_max_gain}

    def write(self, stem) -> tuple[Path, Path]:
        stem = Path(stem)
        js = stem.with_suffix(".json")
        js.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True))
        cs = stem.with_suffix(".csv")
        with open(cs, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["point", "in_band_gain", "out_band_gain", "out_band_max_gain"])
            for i, row in enumerate(zip(self.in_band_gain, self.out_band_gain,
                                        self.out_band_max_gain)):
                wr.writerow([i] + [repr(float(v)) for v in row])
        return js, cs


def _ratio(num, den, eps=1e-12):
    return float(num / den) if den > eps else float(num / eps) if num > eps else 0.0


def band_gain_report(before: MotionSignal, after: MotionSignal, spec: BandpassSpec,
                     significance: float = 0.1) -> BandGainReport:
    """Spectral gain of ``after`` over ``before``, inside and outside the band.

    In-band gain compares the RMS spectral magnitude over passband bins.
    Out-of-band gain is taken at the strongest out-of-band bin of ``before``;
    the max variant scans every out-of-band bin whose magnitude reaches
    ``significance`` of that strongest one.
    """
    if before.displacement.shape != after.displacement.shape:
        raise ValueError(
            f"signal shapes differ: {before.displacement.shape} vs {after.displacement.shape}")
    if before.frame_rate_hz != after.frame_rate_hz:
        raise ValueError("frame rates differ")
    n = before.n_frames
    mask = band_mask(n, spec, before.frame_rate_hz)
    mask_out = ~mask
    mask_out[0] = False
    sb = np.abs(sfft.rfft(before.displacement - before.displacement.mean(0), axis=0))
    sa = np.abs(sfft.rfft(after.displacement - after.displacement.mean(0), axis=0))
    ins, outs, outmax = [], [], []
    for p in range(sb.shape[1]):
        b, a = sb[:, p], sa[:, p]
        ins.append(_ratio(np.sqrt(np.sum(a[mask] ** 2)), np.sqrt(np.sum(b[mask] ** 2))))
        bo = np.where(mask_out, b, 0.0)
        k = int(np.argmax(bo))
        outs.append(_ratio(a[k], b[k]))
        sig = mask_out & (b >= significance * b[k]) & (b[k] > 0)
        outmax.append(max((_ratio(a[i], b[i]) for i in np.flatnonzero(sig)), default=outs[-1]))
    return BandGainReport(spec, ins, outs, outmax, list(before.points))
