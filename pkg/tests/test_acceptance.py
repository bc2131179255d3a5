"""Acceptance suite: one test per numbered criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v`` or ``python3 tests/test_acceptance.py``.
"""

import math
import sys
import time

import numpy as np
import pytest
from numpy.polynomial.legendre import leggauss

from wcsound.experiments import EXPERIMENTS, run_experiment
from wcsound.kernel import (
    KernelParams,
    build_table,
    cell_masses,
    kernel_value,
    kernel_value_matrix_form,
    monte_carlo_density,
    threshold_support,
)
from wcsound.lift import ChirpinessGrid, lift, project
from wcsound.pipeline import PipelineConfig, run_pipeline
from wcsound.signal_io import TimeDomainSignal, generate_chirp, write_wav
from wcsound.stft import TimeFrequencyImage, hann_window, stft_forward, stft_inverse
from wcsound.wilson_cowan import WCParams, evolve

pytestmark = pytest.mark.acceptance


@pytest.fixture
def report(capsys):
    def _report(number, passed, detail):
        with capsys.disabled():
            print(f"\n{'PASS' if passed else 'FAIL'}  criterion {number:2d}: {detail}")
        return passed

    return _report


@pytest.fixture(scope="module")
def experiments():
    runs = {}
    for name in EXPERIMENTS:
        t0 = time.perf_counter()
        out, diag, metrics = run_experiment(name)
        runs[name] = (out, diag, metrics, time.perf_counter() - t0)
    return runs


def _rel(a, b):
    return float(np.linalg.norm(a - b) / np.linalg.norm(b))


def test_criterion_01_closed_form_matches_matrix_form(report):
    rng = np.random.default_rng(101)
    n = 10_000
    b = rng.uniform(0.01, 1.0, n)
    d = rng.uniform(0.01, 0.2, n)
    w = rng.uniform(-4000, 4000, n)
    nu = rng.uniform(-300, 300, n)
    # points within a few standard deviations of the kernel centre, where it is not 0
    nu_p = nu + rng.normal(0, 1.5, n) * np.sqrt(2 * b * d)
    w_p = w - d * (nu + nu_p) / 2 + rng.normal(0, 1.5, n) * np.sqrt(b * d**3 / 6)
    worst = 0.0
    for i in range(n):
        p = KernelParams(d[i], b[i])
        a = kernel_value(p, w[i], nu[i], w_p[i], nu_p[i])
        m = kernel_value_matrix_form(p, (w[i], nu[i]), (w_p[i], nu_p[i]))
        worst = max(worst, abs(a - m) / m)
    ok = report(1, worst < 1e-12, f"{n} tuples, max relative difference {worst:.2e} (< 1e-12)")
    assert ok


def test_criterion_02_kernel_matches_monte_carlo(report):
    rng = np.random.default_rng(202)
    worst, t0 = 0.0, time.perf_counter()
    for i in range(5):
        p = KernelParams(rng.uniform(0.02, 0.2), rng.uniform(0.01, 1.0))
        start = (rng.uniform(-500, 500), rng.uniform(-200, 200))
        h = monte_carlo_density(p, start, n_paths=100_000, n_steps=200, bins=20, seed=1000 + i)
        l1 = float(np.abs(h.mass - cell_masses(p, start, h.omega_edges, h.nu_edges)).sum())
        worst = max(worst, l1)
    elapsed = time.perf_counter() - t0
    ok = report(2, worst < 0.05 and elapsed < 60,
                f"5 starts, 1e5 paths x 200 steps, max L1 {worst:.4f} (< 0.05), {elapsed:.1f} s")
    assert ok


def _gauss_box(lo, hi, n=240):
    x, w = leggauss(n)
    return (lo + hi) / 2 + (hi - lo) / 2 * x, (hi - lo) / 2 * w


def test_criterion_03_kernel_normalization(report):
    sets = [(0.0625, 0.05), (0.01, 0.01), (0.2, 1.0), (0.1, 0.2), (0.03, 0.5)]
    worst = 0.0
    for delta, b in sets:
        p = KernelParams(delta, b)
        x0 = (120.0, 35.0)
        sd_n = math.sqrt(2 * b * delta)
        sd_w = math.sqrt(2 * b * delta**3 / 3)
        # over (ω', ν') with (ω, ν) fixed
        nu_p, wn = _gauss_box(x0[1] - 10 * sd_n, x0[1] + 10 * sd_n)
        wc = x0[0] - delta * x0[1]
        om_p, ww = _gauss_box(wc - 12 * sd_w, wc + 12 * sd_w)
        m1 = np.einsum("i,j,ij->", ww, wn, kernel_value(p, x0[0], x0[1], om_p[:, None], nu_p[None, :]))
        # over (ω, ν) with (ω', ν') fixed
        nu, wn = _gauss_box(x0[1] - 10 * sd_n, x0[1] + 10 * sd_n)
        wc = x0[0] + delta * x0[1]
        om, ww = _gauss_box(wc - 12 * sd_w, wc + 12 * sd_w)
        m2 = np.einsum("i,j,ij->", ww, wn, kernel_value(p, om[:, None], nu[None, :], x0[0], x0[1]))
        worst = max(worst, abs(m1 - 1), abs(m2 - 1))
    ok = report(3, worst < 1e-3, f"5 parameter sets, both variables, max |mass - 1| {worst:.2e} (< 1e-3)")
    assert ok


def test_criterion_04_support_band_is_exact(report):
    # (relative epsilon, b, delta, node); relative 1.0 is the kernel maximum
    sets = [
        (1e-3, 0.05, 0.0625, (100.0, 37.0)),
        (0.1, 0.2, 0.03, (-40.0, -120.0)),
        (0.5, 1.0, 0.1, (7.0, 3.0)),
        (1e-6, 0.01, 0.2, (0.0, 250.0)),
        (1.0, 0.05, 0.0625, (0.0, 0.0)),
    ]
    mismatches, details = 0, []
    for rel, b, delta, (w0, n0) in sets:
        p = KernelParams(delta, b).with_relative_epsilon(rel)
        band = threshold_support(p, w0, n0)
        r = max(band.nu_radius, math.sqrt(2 * b * delta))
        half_w = delta / (2 * math.sqrt(3)) * r + delta * r / 2
        ticks = (np.arange(200) - 100) / 100  # contains 0 exactly
        nu_p = n0 + 1.3 * r * ticks
        om_p = (w0 - delta * n0) + 1.3 * half_w * ticks
        W, N = np.meshgrid(om_p, nu_p, indexing="ij")
        inside = band.contains(W, N)
        above = kernel_value(p, w0, n0, W, N) >= p.epsilon
        bad = int(np.count_nonzero(inside != above))
        mismatches += bad
        details.append(f"{int(inside.sum())}/{bad}")
    over = KernelParams(0.0625, 0.05).with_relative_epsilon(1.5)
    empty = threshold_support(over, 0.0, 0.0).empty
    ok = report(4, mismatches == 0 and empty and details[-1] == "1/0",
                f"200x200 grids, members/mismatches per set {details}, above-maximum set empty: {empty}")
    assert ok


def test_criterion_05_stft_round_trip(report):
    rng = np.random.default_rng(505)
    L = 1024
    worst = 0.0
    for _ in range(20):
        n = int(rng.integers(8 * L, 20 * L))
        x = rng.standard_normal(n)
        back = stft_inverse(stft_forward(TimeDomainSignal(x, 8000), hann_window(L), L // 2)).samples
        sl = slice(L, n - L)
        worst = max(worst, _rel(back[sl], x[sl]))
    ok = report(5, worst < 1e-6, f"20 random signals of 8-20 windows, max interior relative L2 {worst:.2e} (< 1e-6)")
    assert ok


def test_criterion_06_lift_project_identity(report):
    rng = np.random.default_rng(606)
    worst = 0.0
    for i in range(100):
        L = int(rng.choice([8, 16, 64]))
        frames = int(rng.integers(3, 12))
        scale = 10.0 ** rng.uniform(-6, 6)
        v = (rng.standard_normal((frames, L)) + 1j * rng.standard_normal((frames, L))) * scale
        if i % 4 == 0:
            v[:, ::3] = 0
        img = TimeFrequencyImage(v, L // 2, L, 8000.0, L // 2 * (frames - 1))
        grid = ChirpinessGrid(float(rng.uniform(10, 400)), int(rng.choice([1, 5, 63])))
        back = project(lift(img, grid))
        with np.errstate(invalid="ignore", divide="ignore"):
            err = np.where(v != 0, np.abs(back.values - v) / np.abs(v), np.abs(back.values))
        worst = max(worst, float(err.max()))
    ok = report(6, worst <= 2.3e-16, f"100 random images, max elementwise relative error {worst:.2e} (<= 1 ulp)")
    assert ok


def test_criterion_07_low_pass_oracle(report):
    rng = np.random.default_rng(707)
    L, hop, fs, n_frames = 16, 8, 125.0, 20
    img = TimeFrequencyImage(np.zeros((n_frames, L)), hop, L, fs, hop * (n_frames - 1))
    grid = ChirpinessGrid(10.0, 5)
    I = rng.standard_normal((n_frames, L, 5)) + 1j * rng.standard_normal((n_frames, L, 5))
    field = lift(img, grid).replace(I)
    T, alpha, beta = img.frame_duration, 55.0, 1.0
    # exact solution of a' = -αa + βI, I held over each frame
    exact, a = np.empty_like(I), np.zeros(I.shape[1:], complex)
    for n in range(n_frames):
        a = np.exp(-alpha * T) * a + beta / alpha * (1 - np.exp(-alpha * T)) * I[n]
        exact[n] = a
    errs = []
    for sub in (8, 16, 32, 64):
        dt = T / sub
        table = build_table(KernelParams(dt, 0.05).with_relative_epsilon(1e-3), L, fs / L, grid.values)
        out = evolve(field, table, WCParams(alpha, beta, 0.0, 1.0, dt, 1)).values
        errs.append(float(np.abs(out - exact).max() / np.abs(exact).max()))
    ratios = [errs[i] / errs[i + 1] for i in range(len(errs) - 1)]
    ok = report(7, all(1.8 < r < 2.2 for r in ratios),
                f"errors {', '.join(f'{e:.2e}' for e in errs)} at dt/2^k, ratios {', '.join(f'{r:.3f}' for r in ratios)}")
    assert ok


def test_criterion_08_real_output(report, experiments):
    residues = {name: run[1].imag_residue for name, run in experiments.items()}
    worst = max(residues.values())
    ok = report(8, worst < 1e-9, "max |Im s| " + ", ".join(f"{k} {v:.1e}" for k, v in residues.items()) + " (< 1e-9)")
    assert ok


def test_criterion_09_equivariance(report):
    config = EXPERIMENTS["linear"].config.replace(normalize=False)
    s = generate_chirp("linear", 2.5, 8000, t_start=0.4, t_end=1.6, f0=500, f1=560)
    x = s.samples
    hop, L = config.hop, config.window_len
    k = np.arange(L)
    _, base = run_pipeline(s, config)
    A = base.output_image.values
    interior = slice(3, A.shape[0] - 3)

    def shifted(m):
        xs = np.concatenate([np.zeros(m * hop), x[: -m * hop]])
        B = run_pipeline(TimeDomainSignal(xs, 8000), config)[1].output_image.values
        return _rel(B[m:][interior], (A[:-m] * (-1.0) ** (k * m))[interior])

    e_shift1 = shifted(1)
    e_shift2 = shifted(2)
    z = x.astype(complex)
    _, dz = run_pipeline(TimeDomainSignal(z, 8000), config)
    Z = dz.output_image.values
    _, dm = run_pipeline(TimeDomainSignal(z * np.exp(2j * np.pi * np.arange(z.size) / L), 8000), config)
    e_mod = _rel(dm.output_image.values[interior], np.roll(Z, -1, axis=1)[interior])
    phase = np.exp(-2j * np.pi * 0.3)
    _, dp = run_pipeline(TimeDomainSignal(z * phase, 8000), config)
    e_phase = _rel(dp.output_image.values, Z * phase)
    passed = e_shift1 < 1e-6 and e_mod < 1e-6 and e_phase < 1e-6
    report(9, passed,
           f"one-hop shift {e_shift1:.2e}, one-bin modulation {e_mod:.2e}, global phase {e_phase:.2e} (each < 1e-6);"
           f" two-hop shift {e_shift2:.2e}")
    assert e_mod < 1e-6 and e_phase < 1e-6 and e_shift2 < 1e-6
    assert e_shift1 < 1e-6, "a one-hop shift multiplies bin k by (-1)^k, which the frequency coupling does not commute with"


def test_criterion_10_linear_chirp_tail(report, experiments):
    _, diag, metrics, elapsed = experiments["linear"]
    m = metrics["metrics"]
    need = 2 * diag.geometry.delta_eff
    ok = report(10, m["tail_seconds"] >= need and elapsed < 120,
                f"tail {m['tail_seconds']:.3f} s past input frame {m['input_last_frame']} at -20 dB"
                f" (>= {need:.3f} s), runtime {elapsed:.1f} s (< 120 s)")
    assert ok


def test_criterion_11_interrupted_chirp_bridged(report, experiments):
    m = experiments["interrupted"][2]["metrics"]
    ok = report(11, m["energy_ratio"] > 5 and m["bridged"],
                f"gap-box energy ratio {m['energy_ratio']:.2f} (> 5), ridge over frames {m['bridge_frames']}"
                f" weakest {m['weakest_bridge_db']:.1f} dB, connected at -20 dB: {m['bridged']}")
    assert ok


def test_criterion_12_crossing_chirps_decoupled(report, experiments):
    m = experiments["crossing"][2]["metrics"]
    ok = report(12, m["leakage"] < 0.1,
                f"cross-stratum transfer up {m['transfer_up']:.2e}, down {m['transfer_down']:.2e},"
                f" pair interaction {m['interaction']:.2e}; leakage {m['leakage']:.2e} (< 0.1)")
    assert ok


def test_criterion_13_deterministic(report, experiments, tmp_path):
    first = experiments["linear"][0]
    again, _, _ = run_experiment("linear")
    write_wav(first, tmp_path / "a.wav")
    write_wav(again, tmp_path / "b.wav")
    same = first.samples.tobytes() == again.samples.tobytes()
    same_wav = (tmp_path / "a.wav").read_bytes() == (tmp_path / "b.wav").read_bytes()
    ok = report(13, same and same_wav, f"repeated linear run bit-identical: samples {same}, wav bytes {same_wav}")
    assert ok


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
