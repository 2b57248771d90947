"""Frames, frame sequences, disk I/O and contrast enhancement.

Intensities are always held as floating point in [0, 1]; the source bit
depth is kept only so that writers can quantize back to it.
"""
from __future__ import annotations

import csv
import os
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np
from PIL import Image

IMAGE_SUFFIXES = (".png", ".pgm")


class FrameIOError(ValueError):
    """Raised when a frame directory cannot be turned into a sequence."""


class DegenerateContrastWarning(UserWarning):
    """The stretch endpoints coincide, so the frame is returned unchanged."""


@dataclass(frozen=True)
class Frame:
    intensity: np.ndarray
    bit_depth: int = 8

    def __post_init__(self):
        arr = np.asarray(self.intensity, dtype=float)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"frame must be a non-empty 2D grid, got shape {arr.shape}")
        if arr.size and (arr.min() < 0.0 or arr.max() > 1.0):
            raise ValueError("frame intensities must lie in [0, 1]")
        arr.setflags(write=False)
        object.__setattr__(self, "intensity", arr)

    @property
    def height(self) -> int:
        return self.intensity.shape[0]

    @property
    def width(self) -> int:
        return self.intensity.shape[1]


class VideoSequence:
    """Ordered grayscale frames sharing one size, sampled at ``frame_rate_hz``.

    The frames are stored as a single read-only ``(T, H, W)`` float array;
    ``frames`` gives the per-frame view when that is more convenient.
    """

    def __init__(self, data, frame_rate_hz: float, bit_depth: int = 8):
        if isinstance(data, (list, tuple)):
            if data and isinstance(data[0], Frame):
                shapes = {f.intensity.shape for f in data}
                if len(shapes) > 1:
                    raise ValueError(f"frames have mixed dimensions: {sorted(shapes)}")
                bit_depth = data[0].bit_depth
                data = np.stack([f.intensity for f in data]) if data else np.empty((0, 1, 1))
        arr = np.asarray(data, dtype=float)
        if arr.ndim != 3:
            raise ValueError(f"video data must be (frames, height, width), got {arr.shape}")
        if not frame_rate_hz > 0:
            raise ValueError("frame_rate_hz must be positive")
        if arr.size and (arr.min() < 0.0 or arr.max() > 1.0):
            raise ValueError("frame intensities must lie in [0, 1]")
        arr.setflags(write=False)
        self.data = arr
        self.frame_rate_hz = float(frame_rate_hz)
        self.bit_depth = int(bit_depth)

    def __len__(self) -> int:
        return self.data.shape[0]

    def __getitem__(self, k: int) -> Frame:
        return Frame(self.data[k], self.bit_depth)

    def __iter__(self) -> Iterator[Frame]:
        for k in range(len(self)):
            yield self[k]

    @property
    def frames(self) -> list[Frame]:
        return list(self)

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape[1], self.data.shape[2]

    @property
    def duration_s(self) -> float:
        return len(self) / self.frame_rate_hz

    def times(self) -> np.ndarray:
        return np.arange(len(self)) / self.frame_rate_hz

    def require_motion_length(self):
        if len(self) < 2:
            raise ValueError(f"need ≥ 2 frames for motion analysis, got {len(self)}")


@dataclass
class IntensityHistogram:
    bin_edges: np.ndarray
    counts: np.ndarray

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["bin_low", "bin_high", "count"])
            for lo, hi, c in zip(self.bin_edges[:-1], self.bin_edges[1:], self.counts):
                w.writerow([repr(float(lo)), repr(float(hi)), int(c)])


# --------------------------------------------------------------------------
# I/O
# --------------------------------------------------------------------------

def _bit_depth_of(img: Image.Image, arr: np.ndarray, name: str) -> int:
    if img.mode in ("L", "P", "1"):
        return 8
    if img.mode.startswith("I"):
        # PGM/PNG 16-bit both decode to an "I" family mode
        return 16
    raise FrameIOError(f"{name}: unsupported image mode {img.mode!r} (need grayscale)")


def read_frame(path) -> Frame:
    path = Path(path)
    try:
        with Image.open(path) as img:
            img.load()
            arr = np.asarray(img)
            depth = _bit_depth_of(img, arr, path.name)
    except FrameIOError:
        raise
    except Exception as exc:  # PIL raises a zoo of types
        raise FrameIOError(f"{path.name}: unreadable image ({exc})") from exc
    if arr.ndim != 2:
        raise FrameIOError(f"{path.name}: expected a single-channel image, got shape {arr.shape}")
    scale = 2 ** depth - 1
    return Frame(np.clip(arr.astype(float) / scale, 0.0, 1.0), depth)


def list_frame_files(directory) -> list[Path]:
    directory = Path(directory)
    if not directory.is_dir():
        raise FrameIOError(f"{directory}: not a directory")
    files = sorted(p for p in directory.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
    return files


def load_sequence(directory_path, frame_rate_hz: float) -> VideoSequence:
    """Load a directory of grayscale PNG/PGM frames, sorted by filename.

    Intensities are normalized by ``2**bit_depth - 1``.
    """
    files = list_frame_files(directory_path)
    if not files:
        raise FrameIOError(f"{directory_path}: no PNG/PGM frames found")
    if len(files) < 2:
        raise FrameIOError(f"{files[0].name}: need ≥ 2 frames, found 1")
    first = read_frame(files[0])
    data = np.empty((len(files), first.height, first.width))
    data[0] = first.intensity
    for k, path in enumerate(files[1:], start=1):
        fr = read_frame(path)
        if fr.intensity.shape != first.intensity.shape:
            raise FrameIOError(
                f"{path.name}: size {fr.width}x{fr.height} differs from "
                f"{files[0].name} {first.width}x{first.height}")
        data[k] = fr.intensity
    return VideoSequence(data, frame_rate_hz, bit_depth=first.bit_depth)


def _quantize(intensity: np.ndarray, bit_depth: int) -> np.ndarray:
    scale = 2 ** bit_depth - 1
    q = np.rint(np.clip(intensity, 0.0, 1.0) * scale)
    return q.astype(np.uint8 if bit_depth == 8 else np.uint16)


def write_frame(frame: Frame | np.ndarray, path, bit_depth: int | None = None) -> None:
    if isinstance(frame, Frame):
        bit_depth = bit_depth or frame.bit_depth
        frame = frame.intensity
    bit_depth = bit_depth or 8
    if bit_depth not in (8, 16):
        raise ValueError("bit_depth must be 8 or 16")
    Image.fromarray(_quantize(np.asarray(frame), bit_depth)).save(path)


def save_sequence(video: VideoSequence, directory, prefix: str = "frame",
                  suffix: str = "", bit_depth: int | None = None,
                  names: Sequence[str] | None = None) -> list[Path]:
    """Write every frame as PNG; zero-padded indices keep lexicographic order."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    width = max(5, len(str(len(video))))
    out = []
    for k in range(len(video)):
        stem = names[k] if names is not None else f"{prefix}_{k:0{width}d}"
        path = directory / f"{stem}{suffix}.png"
        write_frame(video.data[k], path, bit_depth or video.bit_depth)
        out.append(path)
    return out


# --------------------------------------------------------------------------
# Histogram and contrast
# --------------------------------------------------------------------------

def histogram(frame: Frame, num_bins: int = 256) -> IntensityHistogram:
    if num_bins < 2:
        raise ValueError("num_bins must be ≥ 2")
    edges = np.linspace(0.0, 1.0, num_bins + 1)
    counts, _ = np.histogram(_intensity(frame), bins=edges)
    return IntensityHistogram(edges, counts.astype(np.int64))


def _intensity(frame) -> np.ndarray:
    return frame.intensity if isinstance(frame, Frame) else np.asarray(frame, dtype=float)


def _check_quantiles(low_quantile, high_quantile):
    if not 0.0 <= low_quantile < high_quantile <= 1.0:
        raise ValueError("need 0 ≤ low_quantile < high_quantile ≤ 1")


def stretch_limits(values: np.ndarray, low_quantile: float, high_quantile: float) -> tuple[float, float]:
    _check_quantiles(low_quantile, high_quantile)
    lo, hi = np.quantile(values, [low_quantile, high_quantile])
    return float(lo), float(hi)


def apply_stretch(intensity: np.ndarray, lo: float, hi: float) -> np.ndarray:
    return np.clip((intensity - lo) / (hi - lo), 0.0, 1.0)


def enhance_contrast(frame: Frame, low_quantile: float = 0.01,
                     high_quantile: float = 0.99) -> Frame:
    """Stretch intensities so the two quantiles land on 0 and 1.

    A frame whose quantile intensities coincide is returned unchanged and a
    :class:`DegenerateContrastWarning` is emitted.
    """
    arr = _intensity(frame)
    depth = frame.bit_depth if isinstance(frame, Frame) else 8
    lo, hi = stretch_limits(arr, low_quantile, high_quantile)
    if hi <= lo:
        warnings.warn(f"degenerate contrast: quantile intensities both {lo:.6g}",
                      DegenerateContrastWarning, stacklevel=2)
        return frame if isinstance(frame, Frame) else Frame(arr, depth)
    return Frame(apply_stretch(arr, lo, hi), depth)


def enhance_sequence(video: VideoSequence, low_quantile: float = 0.01,
                     high_quantile: float = 0.99) -> VideoSequence:
    """Apply one stretch, with limits pooled over all frames, to the whole video.

    Using a single map for every frame keeps the remap monotone and identical
    in time, so it cannot inject apparent motion.
    """
    lo, hi = stretch_limits(video.data, low_quantile, high_quantile)
    if hi <= lo:
        warnings.warn(f"degenerate contrast: quantile intensities both {lo:.6g}",
                      DegenerateContrastWarning, stacklevel=2)
        return video
    return VideoSequence(apply_stretch(video.data, lo, hi), video.frame_rate_hz, video.bit_depth)


def write_enhanced(video: VideoSequence, source_files: Sequence[os.PathLike], out_dir,
                   low_quantile: float = 0.01, high_quantile: float = 0.99) -> list[Path]:
    """Enhance ``video`` and write each frame as ``<original stem>_enh.png``."""
    enhanced = enhance_sequence(video, low_quantile, high_quantile)
    stems = [Path(p).stem for p in source_files]
    return save_sequence(enhanced, out_dir, suffix="_enh", names=stems)
