import json

import numpy as np
import pytest

from wcsound.experiments import EXPERIMENTS, ridge_profile, run_experiment
from wcsound.pipeline import ConfigError, PipelineConfig, SolverGeometry, kernel_params, run_pipeline
from wcsound.signal_io import TimeDomainSignal, generate_chirp, read_wav


def small_config(**kw):
    base = dict(window_len=128, hop=64, nu_max=200.0, nu_bins=9, b=0.5)
    return PipelineConfig(**{**base, **kw})


def noise(n=4000, seed=0):
    return TimeDomainSignal(np.random.default_rng(seed).standard_normal(n) * 0.1, 8000)


def test_config_text_round_trip():
    c = PipelineConfig(alpha=40.0, epsilon=0.5, substeps=12, normalize=False)
    assert PipelineConfig.from_text(c.to_text()) == c
    parsed = PipelineConfig.from_text("# comment\nalpha = 12  # trailing\nnu-bins = 31\nepsilon = none\n")
    assert parsed.alpha == 12.0 and parsed.nu_bins == 31 and parsed.epsilon is None
    with pytest.raises(ConfigError, match="unknown"):
        PipelineConfig.from_text("alpah = 1")
    with pytest.raises(ConfigError, match="bad value"):
        PipelineConfig.from_text("alpha = fast")
    with pytest.raises(ConfigError, match="key = value"):
        PipelineConfig.from_text("alpha 3")
    with pytest.raises(ConfigError):
        PipelineConfig(hop=256)
    with pytest.raises(ConfigError):
        PipelineConfig(weighting="spline")


def test_solver_geometry():
    g = SolverGeometry.from_config(PipelineConfig(), 8000)
    assert (g.substeps, g.delay_steps) == (8, 8)
    assert g.dt == pytest.approx(0.008) and g.delta_eff == pytest.approx(0.064)
    assert PipelineConfig().alpha * g.dt <= 0.5
    g = SolverGeometry.from_config(PipelineConfig(substeps=32), 8000)
    assert g.delay_steps == 31 and g.delta_eff == pytest.approx(0.062)
    with pytest.raises(ConfigError, match="unstable"):
        SolverGeometry.from_config(PipelineConfig(substeps=3), 8000)
    with pytest.raises(ConfigError, match="exceeds"):
        kernel_params(PipelineConfig(epsilon=1e9), g)


def test_without_interaction_the_chain_is_an_euler_low_pass():
    # γ = 0: lift, evolve and project collapse to the per-bin recursion on S
    c = small_config(gamma=0.0, normalize=False)
    s = noise()
    _, d = run_pipeline(s, c)
    S = d.input_image.values
    g = d.geometry
    a = np.zeros(S.shape[1], dtype=complex)
    expect = np.empty_like(S)
    for n in range(S.shape[0]):
        for _ in range(g.substeps):
            a = a + g.dt * (c.beta * S[n] - c.alpha * a)
        expect[n] = a
    np.testing.assert_allclose(d.output_image.values, expect, atol=1e-13 * np.abs(expect).max())


def test_real_input_gives_real_output_and_energy_log():
    out, d = run_pipeline(noise(), small_config())
    assert not np.iscomplexobj(out.samples)
    assert d.imag_residue < 1e-12
    assert d.activation.star_residual() < 1e-14
    assert d.energy_log.shape == (d.input_image.n_frames, 3)
    assert np.all(d.energy_log[:, 1] >= 0)


def test_output_scales_with_input():
    c = small_config()
    _, d1 = run_pipeline(noise(), c)
    s4 = TimeDomainSignal(noise().samples * 4, 8000)
    _, d4 = run_pipeline(s4, c)
    np.testing.assert_array_equal(d4.output_image.values, 4 * d1.output_image.values)
    assert d4.normalization == 4 * d1.normalization


def test_complex_input_runs_on_the_full_lattice():
    s = noise()
    z = TimeDomainSignal(s.samples.astype(complex), 8000)
    out_r, d_r = run_pipeline(s, small_config())
    out_z, d_z = run_pipeline(z, small_config())
    assert np.iscomplexobj(out_z.samples) and not d_z.lifted.half
    np.testing.assert_allclose(out_z.samples.real, out_r.samples, atol=1e-12)


def test_short_signal_rejected():
    with pytest.raises(ConfigError, match="too short"):
        run_pipeline(TimeDomainSignal(np.zeros(100), 8000), small_config())


def test_repeat_runs_are_bit_identical():
    s = generate_chirp("linear", 1.0, 8000, t_start=0.1, t_end=0.8, f0=500, f1=530)
    a, da = run_pipeline(s, PipelineConfig())
    b, db = run_pipeline(s, PipelineConfig())
    assert a.samples.tobytes() == b.samples.tobytes()
    assert da.activation.values.tobytes() == db.activation.values.tobytes()


def test_ridge_profile_follows_track():
    s = generate_chirp("linear", 2.0, 8000, t_start=0.2, t_end=1.8, f0=500, f1=580)
    _, d = run_pipeline(s, PipelineConfig(gamma=0.0))
    t = d.input_image.times
    on = ridge_profile(d.input_image, 500 + 50 * (t - 0.2))
    off = ridge_profile(d.input_image, 1500 + 0 * t)
    inside = (t > 0.4) & (t < 1.6)
    assert np.all(on[inside] > 100 * off[inside])


def test_experiment_artefacts(tmp_path):
    out, diag, metrics = run_experiment("linear", {"gamma": 54.0}, tmp_path, dump_strata_dir=tmp_path / "st")
    assert metrics["config"]["gamma"] == 54.0
    names = {p.name for p in tmp_path.iterdir()}
    for suffix in ("input.wav", "output.wav", "input_spectrogram.csv", "output_spectrogram.pgm",
                   "energy.csv", "metrics.json"):
        assert f"linear_{suffix}" in names
    saved = json.loads((tmp_path / "linear_metrics.json").read_text())
    assert saved["metrics"]["tail_seconds"] == metrics["metrics"]["tail_seconds"]
    assert abs(np.abs(read_wav(tmp_path / "linear_output.wav").samples).max() - 0.9) < 1e-4
    assert len(list((tmp_path / "st").iterdir())) == diag.config.nu_bins
    with pytest.raises(KeyError):
        run_experiment("square")
    assert set(EXPERIMENTS) == {"linear", "interrupted", "crossing", "sinusoidal"}
