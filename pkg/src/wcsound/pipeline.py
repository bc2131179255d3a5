"""STFT -> lift -> Wilson-Cowan -> project -> inverse STFT."""

from __future__ import annotations

import dataclasses
import functools
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .kernel import KernelParams, KernelTable, build_table
from .lift import ChirpinessGrid, LiftedField, lift, project
from .signal_io import TimeDomainSignal
from .stft import TimeFrequencyImage, hann_window, stft_forward, stft_inverse_complex
from .wilson_cowan import WCParams, evolve

__all__ = ["PipelineConfig", "ConfigError", "SolverGeometry", "Diagnostics", "run_pipeline", "process_image"]


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class PipelineConfig:
    """Every tunable of a run.

    ``epsilon`` is the absolute kernel truncation threshold; when ``None`` it
    is ``epsilon_rel`` times the kernel maximum. ``substeps`` is the number of
    Euler steps per STFT frame; ``None`` picks the smallest count with
    ``alpha * dt <= 0.5``.
    """

    window_len: int = 1024
    hop: int = 512
    nu_max: float = 300.0
    nu_bins: int = 63
    alpha: float = 55.0
    beta: float = 1.0
    gamma: float = 55.0
    b: float = 0.05
    kappa: float = 1.0
    delta: float = 0.0625
    epsilon: float | None = None
    epsilon_rel: float = 1e-3
    substeps: int | None = None
    weighting: str = "hat"
    normalize: bool = True

    def __post_init__(self):
        if self.window_len < 4 or self.window_len % 2:
            raise ConfigError("window_len must be even and >= 4")
        if self.hop * 2 != self.window_len:
            raise ConfigError("hop must equal window_len / 2")
        if self.nu_bins < 1 or self.nu_bins % 2 == 0:
            raise ConfigError("nu_bins must be odd")
        if not self.nu_max > 0:
            raise ConfigError("nu_max must be positive")
        if not self.alpha > 0:
            raise ConfigError("alpha must be positive")
        if self.beta < 0 or self.gamma < 0:
            raise ConfigError("beta and gamma must be non-negative")
        if not (self.b > 0 and self.kappa > 0 and self.delta > 0):
            raise ConfigError("b, kappa and delta must be positive")
        if self.epsilon is not None and self.epsilon < 0:
            raise ConfigError("epsilon must be non-negative")
        if not 0 <= self.epsilon_rel <= 1:
            raise ConfigError("epsilon_rel must lie in [0, 1]")
        if self.substeps is not None and self.substeps < 1:
            raise ConfigError("substeps must be >= 1")
        if self.weighting not in ("hat", "midpoint"):
            raise ConfigError("weighting must be 'hat' or 'midpoint'")

    def replace(self, **changes) -> "PipelineConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_text(self) -> str:
        return "".join(f"{k} = {v}\n" for k, v in self.to_dict().items())

    @classmethod
    def from_text(cls, text: str, base: "PipelineConfig | None" = None) -> "PipelineConfig":
        """Parse ``key = value`` lines; ``#`` starts a comment."""
        values = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {lineno}: expected 'key = value'")
            key, val = (s.strip() for s in line.split("=", 1))
            values[key.replace("-", "_")] = val
        return (base or cls()).with_values(values)

    @classmethod
    def from_file(cls, path, base=None) -> "PipelineConfig":
        return cls.from_text(Path(path).read_text(), base)

    def with_values(self, values: dict) -> "PipelineConfig":
        types = {f.name: f.type for f in dataclasses.fields(self)}
        changes = {}
        for key, val in values.items():
            if key not in types:
                raise ConfigError(f"unknown config key {key!r}")
            changes[key] = _coerce(key, types[key], val)
        return self.replace(**changes)


def _coerce(key, typ, val):
    if not isinstance(val, str):
        return val
    text = val.strip()
    if text.lower() in ("none", "") and "None" in str(typ):
        return None
    try:
        if "bool" in str(typ):
            if text.lower() in ("1", "true", "yes", "on"):
                return True
            if text.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if "int" in str(typ):
            return int(text)
        if "float" in str(typ):
            return float(text)
    except ValueError:
        raise ConfigError(f"bad value for {key}: {val!r}") from None
    return text


@dataclass(frozen=True)
class SolverGeometry:
    """Solver clock derived from the STFT frame clock."""

    frame_duration: float
    substeps: int
    dt: float
    delay_steps: int

    @property
    def delta_eff(self) -> float:
        return self.delay_steps * self.dt

    @classmethod
    def from_config(cls, config: PipelineConfig, sample_rate: float) -> "SolverGeometry":
        frame = config.hop / sample_rate
        n = config.substeps or max(1, math.ceil(2 * config.alpha * frame - 1e-12))
        dt = frame / n
        if config.alpha * dt >= 1:
            raise ConfigError(f"unstable Euler step: alpha*dt = {config.alpha * dt:.3g} >= 1")
        delay = max(1, int(round(config.delta / dt)))
        return cls(frame, n, dt, delay)


def kernel_params(config: PipelineConfig, geometry: SolverGeometry) -> KernelParams:
    p = KernelParams(geometry.delta_eff, config.b)
    if config.epsilon is not None:
        eps = config.epsilon
    else:
        eps = config.epsilon_rel * p.peak
    if eps > p.peak * (1 + 1e-12):
        raise ConfigError(f"epsilon {eps:.4g} exceeds the kernel maximum {p.peak:.4g}")
    return KernelParams(geometry.delta_eff, config.b, eps)


@functools.lru_cache(maxsize=8)
def _cached_table(params, n_omega, omega_step, nu_max, nu_bins, rows, weighting) -> KernelTable:
    grid = ChirpinessGrid(nu_max, nu_bins)
    return build_table(params, n_omega, omega_step, grid.values, rows=rows, weighting=weighting)


def kernel_table(config: PipelineConfig, sample_rate: float, half: bool = True) -> KernelTable:
    geometry = SolverGeometry.from_config(config, sample_rate)
    params = kernel_params(config, geometry)
    return _cached_table(
        params, config.window_len, sample_rate / config.window_len,
        float(config.nu_max), config.nu_bins, "half" if half else "full", config.weighting,
    )


@dataclass
class Diagnostics:
    config: PipelineConfig
    geometry: SolverGeometry
    kernel: KernelParams
    normalization: float
    imag_residue: float
    input_image: TimeFrequencyImage
    output_image: TimeFrequencyImage
    lifted: LiftedField
    activation: LiftedField
    energy_log: np.ndarray = field(repr=False)  # columns: frame, ||a||, ||I||

    def summary(self) -> dict:
        g = self.geometry
        return {
            "config": self.config.to_dict(),
            "delta_eff": g.delta_eff,
            "dt": g.dt,
            "substeps": g.substeps,
            "delay_steps": g.delay_steps,
            "epsilon": self.kernel.epsilon,
            "normalization": self.normalization,
            "imag_residue": self.imag_residue,
        }

    def write_energy_log(self, path) -> None:
        np.savetxt(path, self.energy_log, delimiter=",", header="frame,norm_a,norm_I", comments="", fmt="%.10g")


def process_image(image: TimeFrequencyImage, config: PipelineConfig, half: bool | None = None):
    """Lift, evolve and project a time-frequency image.

    Returns ``(output_image, lifted, activation, geometry, kernel_params,
    normalization)``. ``half`` defaults to True for Hermitian images, in
    which case only bins ``0..L/2`` are evolved.
    """
    if half is None:
        half = image.is_hermitian(rtol=0.0)
    geometry = SolverGeometry.from_config(config, image.sample_rate)
    params = kernel_params(config, geometry)
    table = kernel_table(config, image.sample_rate, half=half)
    peak = float(np.abs(image.values).max())
    norm = peak if (config.normalize and peak > 0) else 1.0
    scaled = image.replace(image.values / norm)
    grid = ChirpinessGrid(config.nu_max, config.nu_bins)
    lifted = lift(scaled, grid, half=half)
    wc = WCParams(config.alpha, config.beta, config.gamma, config.kappa, geometry.dt, geometry.delay_steps)
    activation = evolve(lifted, table, wc)
    out = project(activation)
    out = out.replace(out.values * norm)
    return out, lifted, activation, geometry, params, norm


def run_pipeline(signal: TimeDomainSignal, config: PipelineConfig, half: bool | None = None):
    """Process a waveform; returns ``(output_signal, diagnostics)``.

    Real input yields a real output (the imaginary residue of the inverse
    STFT is recorded in the diagnostics); complex input is processed on the
    full two-sided lattice and returned complex.
    """
    if len(signal) < config.window_len * 2:
        raise ConfigError("signal too short: need at least 3 STFT frames")
    image = stft_forward(signal, hann_window(config.window_len), config.hop)
    out_img, lifted, act, geometry, params, norm = process_image(image, config, half)
    z = stft_inverse_complex(out_img)
    residue = float(np.abs(z.imag).max())
    if np.iscomplexobj(signal.samples):
        out_signal = TimeDomainSignal(z, signal.sample_rate)
    else:
        out_signal = TimeDomainSignal(z.real, signal.sample_rate)
    a_full = act.full()
    i_full = lifted.full()
    energy = np.column_stack([
        np.arange(a_full.shape[0]),
        np.sqrt((np.abs(a_full) ** 2).sum(axis=(1, 2))),
        np.sqrt((np.abs(i_full) ** 2).sum(axis=(1, 2))),
    ])
    diag = Diagnostics(config, geometry, params, norm, residue, image, out_img, lifted, act, energy)
    return out_signal, diag
