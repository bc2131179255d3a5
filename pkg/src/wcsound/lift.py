"""Lift of a time-frequency image to (time, frequency, chirpiness) and back.

Each point of the image is assigned the chirpiness of the level line of
``|S|`` through it, ``ν* = -∂τ|S| / ∂ω|S|``, and its complex value is
placed in the nearest bin of a symmetric chirpiness grid. Projection sums
over chirpiness, so ``project(lift(S)) == S``.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .stft import TimeFrequencyImage

__all__ = ["ChirpinessGrid", "LiftedField", "spectral_gradient", "lift", "project", "dump_strata"]

GRADIENT_FLOOR = 1e-8
# below this a frequency slope is treated as rounding noise and has no sign
SIGN_FLOOR = 1e-12


@dataclass(frozen=True)
class ChirpinessGrid:
    """Uniform grid of chirpiness values (Hz/s) symmetric about zero, odd size."""

    nu_max: float
    n_bins: int

    def __post_init__(self):
        if self.n_bins < 1 or self.n_bins % 2 == 0:
            raise ValueError("the chirpiness grid needs an odd number of bins")
        if self.n_bins > 1 and not self.nu_max > 0:
            raise ValueError("nu_max must be positive")

    @property
    def values(self) -> np.ndarray:
        if self.n_bins == 1:
            return np.zeros(1)
        half = self.n_bins // 2
        return np.arange(-half, half + 1) * (self.nu_max / half)

    @property
    def step(self) -> float:
        # a single-bin grid integrates with unit width
        return self.nu_max / (self.n_bins // 2) if self.n_bins > 1 else 1.0

    @property
    def center(self) -> int:
        return self.n_bins // 2

    def nearest_index(self, nu) -> np.ndarray:
        """Nearest grid index after clamping to ±nu_max; mirror-exact in ν."""
        nu = np.asarray(nu, dtype=float)
        if self.n_bins == 1:
            return np.zeros(nu.shape, dtype=np.int64)
        steps = np.floor(np.abs(nu) / self.step + 0.5)
        steps = np.minimum(steps, self.center)
        return (self.center + np.sign(nu) * steps).astype(np.int64)

    def mirror(self, idx):
        return self.n_bins - 1 - np.asarray(idx)


@dataclass(frozen=True)
class LiftedField:
    """Complex field ``values[frame, bin, nu_index]``.

    ``bins`` lists the DFT bins present along axis 1: all of them, or only
    ``0..L/2`` for a half-space field that stands for a star-symmetric
    one, ``a(t, -ω, -ν) = conj(a(t, ω, ν))``.
    """

    values: np.ndarray
    image: TimeFrequencyImage
    grid: ChirpinessGrid
    half: bool = False

    @property
    def bins(self) -> np.ndarray:
        L = self.image.window_len
        return np.arange(L // 2 + 1) if self.half else np.arange(L)

    def replace(self, values) -> "LiftedField":
        return LiftedField(values, self.image, self.grid, self.half)

    def full(self) -> np.ndarray:
        """Two-sided values; half fields are completed by star symmetry."""
        if not self.half:
            return self.values
        L = self.image.window_len
        out = np.empty(self.values.shape[:1] + (L, self.grid.n_bins), dtype=np.complex128)
        out[:, : L // 2 + 1] = self.values
        out[:, L // 2 + 1 :] = np.conj(self.values[:, 1 : L // 2][:, ::-1, ::-1])
        return out

    def star_residual(self) -> float:
        """max |a - a*| over the two-sided field, relative to max |a|."""
        v = self.full()
        L = v.shape[1]
        star = np.conj(v[:, (-np.arange(L)) % L][:, :, ::-1])
        scale = np.abs(v).max()
        return float(np.abs(v - star).max() / scale) if scale > 0 else 0.0


def spectral_gradient(image: TimeFrequencyImage):
    """Finite-difference gradient of ``|S|``.

    Returns ``(d_tau, d_omega)`` in magnitude per second and magnitude per
    Hz. Time uses central differences with one-sided ends; frequency uses
    central differences on the periodic DFT axis.
    """
    mag = np.abs(image.values)
    if mag.shape[0] < 3 or mag.shape[1] < 3:
        raise ValueError("the gradient needs at least 3 frames and 3 bins")
    d_tau = np.gradient(mag, image.frame_duration, axis=0)
    d_omega = (np.roll(mag, -1, axis=1) - np.roll(mag, 1, axis=1)) / (2 * image.bin_width)
    return d_tau, d_omega


def chirpiness_indices(image: TimeFrequencyImage, grid: ChirpinessGrid) -> np.ndarray:
    """Grid index chosen for every (frame, bin) of the image."""
    d_tau, d_omega = spectral_gradient(image)
    peak = np.abs(image.values).max()
    floor_tau = GRADIENT_FLOOR * peak / image.frame_duration
    floor_omega = GRADIENT_FLOOR * peak / image.bin_width

    steep = np.abs(d_omega) > floor_omega
    with np.errstate(divide="ignore", invalid="ignore"):
        nu_star = np.where(steep, -d_tau / np.where(steep, d_omega, 1.0), 0.0)
        # vertical contours go to the extreme bins; a frequency slope at rounding
        # level (e.g. the self-conjugate bins of a Hermitian image) has no sign,
        # those points stay at ν = 0
        vertical = ~steep & (np.abs(d_tau) > floor_tau)
        sign_omega = np.where(np.abs(d_omega) > SIGN_FLOOR * peak / image.bin_width, np.sign(d_omega), 0.0)
        nu_star = np.where(vertical, -np.sign(d_tau) * sign_omega * np.inf, nu_star)
    nu_star = np.nan_to_num(nu_star, nan=0.0)
    return grid.nearest_index(np.clip(nu_star, -grid.nu_max, grid.nu_max))


def lift(image: TimeFrequencyImage, grid: ChirpinessGrid, half: bool = False) -> LiftedField:
    """Place ``S(τ, ω) / Δν`` in the single chirpiness bin nearest ``ν*(τ, ω)``.

    With ``half=True`` only bins ``0..L/2`` are kept (for Hermitian images).
    """
    idx = chirpiness_indices(image, grid)
    values = image.values
    if half:
        keep = image.window_len // 2 + 1
        idx, values = idx[:, :keep], values[:, :keep]
    out = np.zeros(values.shape + (grid.n_bins,), dtype=np.complex128)
    f, k = np.indices(values.shape)
    out[f, k, idx] = values / grid.step
    return LiftedField(out, image, grid, half)


def project(field: LiftedField) -> TimeFrequencyImage:
    """Riemann sum over chirpiness, completed to two sides for half fields."""
    full = field.full()
    return field.image.replace(full.sum(axis=2) * field.grid.step)


def dump_strata(field: LiftedField, directory) -> list[Path]:
    """One CSV of ``|a|`` per chirpiness value (rows = bins 0..L/2, columns = frames)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    L = field.image.window_len
    mag = np.abs(field.values[:, : L // 2 + 1])
    paths = []
    for j, nu in enumerate(field.grid.values):
        p = directory / f"stratum_{j:03d}_nu_{nu:+.3f}.csv"
        np.savetxt(p, mag[:, :, j].T, delimiter=",", fmt="%.9e")
        paths.append(p)
    return paths
