"""Quick built-in consistency checks, run by ``wcsound selftest``."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kernel import KernelParams, build_table, kernel_value, kernel_value_matrix_form
from .lift import ChirpinessGrid, lift, project
from .pipeline import PipelineConfig, run_pipeline
from .signal_io import TimeDomainSignal, generate_chirp
from .stft import hann_window, stft_forward, stft_inverse

__all__ = ["CheckResult", "run_selftest"]


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name}: {self.detail}"


def _kernel_forms(rng):
    worst = 0.0
    for _ in range(200):
        p = KernelParams(rng.uniform(0.01, 0.2), rng.uniform(0.01, 1.0))
        x = np.array([rng.uniform(-500, 500), rng.uniform(-50, 50)])
        sd = np.sqrt(2 * p.b * np.array([p.delta**3 / 3, p.delta]))
        xp = np.array([x[0] - p.delta * x[1], x[1]]) + rng.normal(0, 1, 2) * sd
        a = kernel_value(p, x[0], x[1], xp[0], xp[1])
        m = kernel_value_matrix_form(p, x, xp)
        worst = max(worst, abs(a - m) / m)
    return CheckResult("kernel closed form vs matrix form", worst < 1e-12, f"max rel err {worst:.2e}")


def _table_mass():
    nu = ChirpinessGrid(300.0, 63).values
    t = build_table(KernelParams(0.064, 0.05).with_relative_epsilon(1e-3), 64, 7.8125, nu, weighting="hat")
    mass = t.row_mass().reshape(64, nu.size)[:, 8:-8]
    err = float(np.abs(mass - 1).max())
    return CheckResult("kernel table row mass (interior strata)", err < 1e-3, f"max |mass-1| {err:.2e}")


def _stft_round_trip(rng):
    s = TimeDomainSignal(rng.standard_normal(8192), 8000)
    back = stft_inverse(stft_forward(s, hann_window(1024), 512))
    err = float(np.linalg.norm(back.samples - s.samples) / np.linalg.norm(s.samples))
    return CheckResult("STFT round trip", err < 1e-6, f"rel L2 err {err:.2e}")


def _lift_project(rng):
    s = TimeDomainSignal(rng.standard_normal(4096), 8000)
    img = stft_forward(s, hann_window(256), 128)
    back = project(lift(img, ChirpinessGrid(300.0, 31)))
    err = float(np.abs(back.values - img.values).max() / np.abs(img.values).max())
    return CheckResult("project(lift(S)) == S", err < 1e-12, f"max rel err {err:.2e}")


def _realness():
    s = generate_chirp("linear", 1.5, 8000, t_start=0.25, t_end=1.0, f0=500, f1=540)
    _, diag = run_pipeline(s, PipelineConfig())
    return CheckResult("pipeline output is real", diag.imag_residue < 1e-9, f"max |Im| {diag.imag_residue:.2e}")


def run_selftest(seed: int = 0) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    return [_kernel_forms(rng), _table_mass(), _stft_round_trip(rng), _lift_project(rng), _realness()]
