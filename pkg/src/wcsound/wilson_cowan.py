"""Delayed Wilson-Cowan evolution on the lifted field, by forward Euler.

    ∂t a = -α a + β I + γ Σ_ξ' M(ξ, ξ') σ(a(t - δ, ξ'))

with ``a ≡ 0`` for ``t <= 0``. The input is held constant over each STFT
frame; the solver may take several Euler sub-steps per frame.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .kernel import KernelTable
from .lift import LiftedField

__all__ = ["WCParams", "sigmoid", "ActivationHistory", "step", "evolve", "mirror_slice"]


@dataclass(frozen=True)
class WCParams:
    alpha: float
    beta: float
    gamma: float
    kappa: float
    dt: float
    delay_steps: int

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if self.beta < 0 or self.gamma < 0:
            raise ValueError("beta and gamma must be non-negative")
        if not self.kappa > 0:
            raise ValueError("kappa must be positive")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.alpha * self.dt >= 1:
            raise ValueError(f"unstable Euler step: alpha*dt = {self.alpha * self.dt:.3g} >= 1")
        if int(self.delay_steps) != self.delay_steps or self.delay_steps < 1:
            raise ValueError("delay_steps must be an integer >= 1")

    @property
    def delay(self) -> float:
        """Effective delay ``delay_steps * dt``."""
        return self.delay_steps * self.dt


def sigmoid(z, kappa: float):
    """Phase-preserving saturation, ``|σ(z)| = min(1, κ|z|)``, ``arg σ(z) = arg z``."""
    z = np.asarray(z)
    with np.errstate(divide="ignore", over="ignore"):
        scale = np.minimum(kappa, 1.0 / np.abs(z))
    return z * scale


class ActivationHistory:
    """Ring buffer of the last ``delay_steps + 1`` activation slices, zero initialised."""

    def __init__(self, shape, delay_steps: int):
        self.delay_steps = delay_steps
        self._buf = deque(
            (np.zeros(shape, dtype=np.complex128) for _ in range(delay_steps + 1)),
            maxlen=delay_steps + 1,
        )

    @property
    def current(self) -> np.ndarray:
        return self._buf[-1]

    @property
    def delayed(self) -> np.ndarray:
        return self._buf[0]

    def push(self, a: np.ndarray) -> None:
        self._buf.append(a)


def mirror_slice(half: np.ndarray, n_omega: int) -> np.ndarray:
    """Two-sided (ω, ν) slice from bins ``0..n_omega/2`` by star symmetry."""
    out = np.empty((n_omega, half.shape[1]), dtype=np.complex128)
    out[: n_omega // 2 + 1] = half
    out[n_omega // 2 + 1 :] = np.conj(half[1 : n_omega // 2][::-1, ::-1])
    return out


def _interaction(delayed, table: KernelTable, kappa, half):
    s = sigmoid(delayed, kappa)
    if half:
        s = mirror_slice(s, table.n_omega)
    flat = s.ravel()
    m = table.matrix
    acc = m @ flat.real + 1j * (m @ flat.imag)
    return acc.reshape(-1, table.n_nu)


def step(history: ActivationHistory, input_slice, table: KernelTable, params: WCParams, half: bool = False):
    """One Euler step; returns the new slice and pushes it onto ``history``."""
    a = history.current
    if input_slice.shape != a.shape or a.shape != (table.row_bins.size, table.n_nu):
        raise ValueError("input slice, history and kernel table geometries differ")
    drive = params.beta * input_slice - params.alpha * a
    if params.gamma:
        drive = drive + params.gamma * _interaction(history.delayed, table, params.kappa, half)
    new = a + params.dt * drive
    history.push(new)
    return new


def substeps_per_frame(frame_duration: float, dt: float) -> int:
    n = frame_duration / dt
    if abs(n - round(n)) > 1e-9 * max(1.0, n):
        raise ValueError("dt must divide the frame duration")
    return int(round(n))


def evolve(field: LiftedField, table: KernelTable, params: WCParams) -> LiftedField:
    """Integrate the equation over all frames of ``field``.

    Output frame ``n`` is the activation at the end of the ``n``-th frame
    interval, during which input frame ``n`` is applied; it therefore
    depends on input frames ``0..n`` only.
    """
    n_sub = substeps_per_frame(field.image.frame_duration, params.dt)
    expected = np.arange(field.image.window_len // 2 + 1) if field.half else np.arange(field.image.window_len)
    if not np.array_equal(table.row_bins, expected) or table.n_nu != field.grid.n_bins:
        raise ValueError("kernel table does not match the lifted field geometry")
    n_frames = field.values.shape[0]
    history = ActivationHistory(field.values.shape[1:], params.delay_steps)
    out = np.empty_like(field.values)
    for n in range(n_frames):
        inp = field.values[n]
        for _ in range(n_sub):
            step(history, inp, table, params, half=field.half)
        out[n] = history.current
    return field.replace(out)
