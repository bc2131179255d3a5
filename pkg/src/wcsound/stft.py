"""Hann-windowed short-time Fourier transform at half-window hop.

Conventions
-----------
Frame ``m`` is centred on sample ``m * hop``; the signal is zero padded so
that the first frame is centred on sample 0. The transform uses the
absolute-time kernel ``exp(+2j*pi*n*k/L)``::

    S[m, k] = sum_n s[n] * W(m*hop - n) * exp(2j*pi*n*k/L)

so a modulation by one bin is a pure shift of the image along ``k``, and
a shift of the signal by one hop shifts the frames by one and multiplies
bin ``k`` by ``(-1)**k``. Bins are stored in DFT order (two-sided).
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .signal_io import TimeDomainSignal

__all__ = [
    "WindowFunction",
    "TimeFrequencyImage",
    "hann_window",
    "stft_forward",
    "stft_inverse",
    "stft_inverse_complex",
    "frame_count",
    "export_magnitude_csv",
    "export_pgm",
]


@dataclass(frozen=True)
class WindowFunction:
    weights: np.ndarray

    @property
    def length(self) -> int:
        return self.weights.size


def hann_window(L: int) -> WindowFunction:
    """Periodic Hann window of even length ``L``.

    ``weights[j] = (1 + cos(2*pi*(j - L/2)/L)) / 2``, i.e. weight 1 at the
    centre sample ``j = L/2`` and 0 at ``j = 0`` (offset ``-L/2``).
    """
    if L < 4 or L % 2:
        raise ValueError("window length must be even and at least 4")
    x = np.arange(L) - L // 2
    w = 0.5 * (1.0 + np.cos(2 * np.pi * x / L))
    w.setflags(write=False)
    return WindowFunction(w)


@dataclass(frozen=True)
class TimeFrequencyImage:
    """Complex STFT values indexed ``[frame, bin]``.

    ``n_samples`` records the length of the analysed signal so the
    inverse can trim its output.
    """

    values: np.ndarray
    hop: int
    window_len: int
    sample_rate: float
    n_samples: int

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.complex128)
        if v.ndim != 2 or v.shape[1] != self.window_len:
            raise ValueError("values must have shape (frames, window_len)")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def n_frames(self) -> int:
        return self.values.shape[0]

    @property
    def frame_duration(self) -> float:
        return self.hop / self.sample_rate

    @property
    def bin_width(self) -> float:
        return self.sample_rate / self.window_len

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_frames) * self.frame_duration

    @property
    def frequencies(self) -> np.ndarray:
        return np.fft.fftfreq(self.window_len, 1.0 / self.sample_rate)

    @property
    def boundary_frames(self) -> np.ndarray:
        """Indices of frames whose window reaches past the signal ends."""
        half = self.window_len // 2
        centres = np.arange(self.n_frames) * self.hop
        return np.flatnonzero((centres - half < 0) | (centres + half > self.n_samples))

    def replace(self, values) -> "TimeFrequencyImage":
        return TimeFrequencyImage(values, self.hop, self.window_len, self.sample_rate, self.n_samples)

    def is_hermitian(self, rtol: float = 1e-10) -> bool:
        v = self.values
        mirror = np.conj(v[:, (-np.arange(self.window_len)) % self.window_len])
        scale = max(np.abs(v).max(), np.finfo(float).tiny)
        return bool(np.abs(v - mirror).max() <= rtol * scale)


def frame_count(n_samples: int, hop: int) -> int:
    # one extra frame so every sample is covered by two windows
    return -(-n_samples // hop) + 1


def _frame_phase(n_frames: int, L: int) -> np.ndarray:
    # exp(2j*pi*(m*hop - L/2)*k/L) with hop = L/2 is (-1)**((m-1)*k)
    m = np.arange(n_frames)[:, None]
    k = np.arange(L)[None, :]
    return np.where(((m - 1) * k) % 2 == 0, 1.0, -1.0)


def stft_forward(signal: TimeDomainSignal, window: WindowFunction, hop: int) -> TimeFrequencyImage:
    L = window.length
    if hop != L // 2:
        raise ValueError("only hop = window_len / 2 is supported")
    x = np.asarray(signal.samples)
    if x.size < L:
        raise ValueError("signal is shorter than one window")
    n_frames = frame_count(x.size, hop)
    padded = np.zeros((n_frames + 1) * hop, dtype=x.dtype)
    padded[L // 2 : L // 2 + x.size] = x
    idx = np.arange(n_frames)[:, None] * hop + np.arange(L)[None, :]
    frames = padded[idx] * window.weights
    if np.iscomplexobj(x):
        local = np.fft.ifft(frames, axis=1) * L
    else:
        # exact Hermitian symmetry for real input
        half = np.conj(np.fft.rfft(frames, axis=1))
        local = np.empty((n_frames, L), dtype=np.complex128)
        local[:, : L // 2 + 1] = half
        local[:, L // 2 + 1 :] = np.conj(half[:, 1 : L // 2][:, ::-1])
    values = local * _frame_phase(n_frames, L)
    return TimeFrequencyImage(values, hop, L, signal.sample_rate, x.size)


def stft_inverse_complex(image: TimeFrequencyImage) -> np.ndarray:
    """Overlap-add inverse returning the complex waveform (no realness check)."""
    L, hop = image.window_len, image.hop
    if hop * 2 != L:
        raise ValueError("inconsistent geometry: hop must be window_len / 2")
    n_frames = image.n_frames
    if n_frames != frame_count(image.n_samples, hop):
        raise ValueError("inconsistent geometry: frame count does not match n_samples")
    local = np.fft.fft(image.values * _frame_phase(n_frames, L), axis=1) / L
    out = np.zeros((n_frames + 1) * hop, dtype=np.complex128)
    for m in range(n_frames):
        out[m * hop : m * hop + L] += local[m]
    return out[L // 2 : L // 2 + image.n_samples]


def stft_inverse(image: TimeFrequencyImage, imag_tol: float = 1e-9) -> TimeDomainSignal:
    """Inverse STFT of an image with Hermitian symmetry.

    Raises ``ValueError`` if the reconstruction has an imaginary residue
    above ``imag_tol``; call :func:`stft_inverse_complex` to get it anyway.
    """
    z = stft_inverse_complex(image)
    residue = np.abs(z.imag).max() if z.size else 0.0
    if residue > imag_tol:
        raise ValueError(f"inverse STFT is not real (max |Im| = {residue:.3g})")
    return TimeDomainSignal(z.real, image.sample_rate)


def _positive_half(image: TimeFrequencyImage):
    half = image.window_len // 2 + 1
    return np.abs(image.values[:, :half]).T, np.abs(image.frequencies[:half]), image.times


def export_magnitude_csv(image: TimeFrequencyImage, path) -> None:
    """Write |S| for bins 0..L/2: rows = bins, columns = frames.

    The header row holds frame times (s), the first column bin frequencies (Hz).
    """
    mag, freqs, times = _positive_half(image)
    lines = ["freq_hz," + ",".join(f"{t:.6f}" for t in times)]
    for f, row in zip(freqs, mag):
        lines.append(f"{f:.6f}," + ",".join(f"{v:.9e}" for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def export_pgm(image: TimeFrequencyImage, path, dynamic_range_db: float = 60.0) -> None:
    """Binary PGM of log-magnitude, low frequencies at the bottom."""
    mag, _, _ = _positive_half(image)
    peak = mag.max()
    if peak > 0:
        db = 20 * np.log10(np.maximum(mag / peak, 1e-300))
        grey = np.clip(1 + db / dynamic_range_db, 0, 1)
    else:
        grey = np.zeros_like(mag)
    pixels = np.round(grey[::-1] * 255).astype(np.uint8)
    h, w = pixels.shape
    Path(path).write_bytes(f"P5\n{w} {h}\n255\n".encode() + pixels.tobytes())
