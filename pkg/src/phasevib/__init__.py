"""Phase-based vibration measurement and damage screening from video."""
from .gabor import GaborKernel, GaborParams, gabor, make_kernel
from .image_core import (Frame, VideoSequence, enhance_contrast, enhance_sequence, histogram,
                         load_sequence, save_sequence)
from .magnify import BandpassSpec, MagnifiedVideo, band_gain_report, bandpass_phase, magnify_video
from .modal import (DamageReport, DeflectionShape, FeatureSet, Spectrum, detect_damage,
                    extract_shape, mac, pick_peaks, spectrum)
from .pme import MotionSignal, RoiSpec, estimate_motion, phase_amplitude, transform
from .synth import (BeamSceneConfig, GaussianSurfaceConfig, cantilever_beam_video,
                    gaussian_surface_video)

__all__ = [
    "BandpassSpec", "BeamSceneConfig", "DamageReport", "DeflectionShape", "FeatureSet", "Frame",
    "GaborKernel", "GaborParams", "GaussianSurfaceConfig", "MagnifiedVideo", "MotionSignal",
    "RoiSpec", "Spectrum", "VideoSequence", "band_gain_report", "bandpass_phase",
    "cantilever_beam_video", "detect_damage", "enhance_contrast", "enhance_sequence",
    "estimate_motion", "extract_shape", "gabor", "gaussian_surface_video", "histogram",
    "load_sequence", "mac", "magnify_video", "make_kernel", "phase_amplitude", "pick_peaks",
    "save_sequence", "spectrum", "transform",
]
