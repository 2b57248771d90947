"""Discretized complex 2D Gabor wavelets."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

DEFAULT_TRUNCATION_SIGMAS = 3.0
DEFAULT_RADIUS_CAP = 257


@dataclass(frozen=True)
class GaborParams:
    """Wavelength ``lam`` and envelope ``sigma`` are in pixels, angles in radians.

    ``sigma`` defaults to ``lam / 2``.
    """

    lam: float = 16.0
    theta: float = 0.0
    psi: float = 0.0
    sigma: float | None = None
    gamma: float = 1.0

    def __post_init__(self):
        if self.sigma is None:
            object.__setattr__(self, "sigma", self.lam / 2.0)
        if not self.lam > 0:
            raise ValueError("lambda must be positive")
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")

    @property
    def wavenumber(self) -> float:
        """Carrier angular frequency 2π/λ in radians per pixel."""
        return 2.0 * math.pi / self.lam

    def to_dict(self) -> dict:
        return {"lambda": self.lam, "theta": self.theta, "psi": self.psi,
                "sigma": self.sigma, "gamma": self.gamma}

    @classmethod
    def from_dict(cls, d: dict) -> "GaborParams":
        lam = d.get("lambda", d.get("lam", 16.0))
        return cls(lam=lam, theta=d.get("theta", 0.0), psi=d.get("psi", 0.0),
                   sigma=d.get("sigma"), gamma=d.get("gamma", 1.0))


def rotate_coords(x, y, theta):
    """Rotated coordinates (x', y') that orient the wavelet along ``theta``."""
    c, s = np.cos(theta), np.sin(theta)
    return x * c + y * s, -x * s + y * c


def gabor(x, y, params: GaborParams):
    """Evaluate the complex wavelet at arbitrary (x, y) offsets."""
    xp, yp = rotate_coords(x, y, params.theta)
    envelope = np.exp(-(xp ** 2 + params.gamma ** 2 * yp ** 2) / (2.0 * params.sigma ** 2))
    return envelope * np.exp(1j * (2.0 * np.pi * xp / params.lam + params.psi))


@dataclass(frozen=True)
class GaborKernel:
    params: GaborParams
    values: np.ndarray = field(repr=False)
    support_radius: int = 0

    @property
    def real_part(self) -> np.ndarray:
        return self.values.real

    @property
    def imag_part(self) -> np.ndarray:
        return self.values.imag

    @property
    def size(self) -> int:
        return 2 * self.support_radius + 1

    def offsets(self):
        """Integer (x, y) offset grids matching ``values`` (rows are y)."""
        r = np.arange(-self.support_radius, self.support_radius + 1)
        return np.meshgrid(r, r, indexing="xy")

    def to_csv(self, stem) -> tuple[Path, Path]:
        """Dump the real and imaginary grids to ``<stem>_real.csv`` / ``_imag.csv``."""
        stem = Path(stem)
        paths = (stem.with_name(stem.name + "_real.csv"), stem.with_name(stem.name + "_imag.csv"))
        for path, grid in zip(paths, (self.real_part, self.imag_part)):
            with open(path, "w", newline="") as fh:
                csv.writer(fh).writerows([[repr(float(v)) for v in row] for row in grid])
        return paths


def support_radius(params: GaborParams, truncation_sigmas: float = DEFAULT_TRUNCATION_SIGMAS) -> int:
    return int(math.ceil(truncation_sigmas * params.sigma * max(1.0, 1.0 / params.gamma)))


def make_kernel(params: GaborParams, truncation_sigmas: float = DEFAULT_TRUNCATION_SIGMAS,
                radius_cap: int = DEFAULT_RADIUS_CAP) -> GaborKernel:
    if not truncation_sigmas > 0:
        raise ValueError("truncation_sigmas must be positive")
    radius = support_radius(params, truncation_sigmas)
    if radius > radius_cap:
        raise ValueError(
            f"kernel support radius {radius} exceeds cap {radius_cap}; "
            f"check sigma={params.sigma} / gamma={params.gamma}")
    r = np.arange(-radius, radius + 1, dtype=float)
    x, y = np.meshgrid(r, r, indexing="xy")
    values = gabor(x, y, params)
    values.setflags(write=False)
    return GaborKernel(params, values, radius)
