"""The four test sounds, their parameter sets and the metrics run on them."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .lift import dump_strata
from .pipeline import Diagnostics, PipelineConfig, kernel_table, run_pipeline
from .signal_io import CHIRP_DEFAULTS, TimeDomainSignal, generate_chirp, instantaneous_frequencies, write_wav
from .wilson_cowan import WCParams, evolve
from .stft import TimeFrequencyImage, export_magnitude_csv, export_pgm

__all__ = [
    "Experiment",
    "EXPERIMENTS",
    "ridge_profile",
    "tail_metrics",
    "gap_metrics",
    "stratum_energies",
    "crossing_metrics",
    "curvature_metrics",
    "run_experiment",
    "peak_normalized",
]

RIDGE_HALFWIDTH = 3  # bins either side of the trajectory
LEVEL_DB = -20.0
SAMPLE_RATE = 8000.0


@dataclass(frozen=True)
class Experiment:
    name: str
    kind: str
    duration: float
    config: PipelineConfig
    sound: dict = field(default_factory=dict)

    def signal(self, sample_rate: float = SAMPLE_RATE, **sound) -> TimeDomainSignal:
        return generate_chirp(self.kind, self.duration, sample_rate, **{**self.sound, **sound})

    def sound_params(self) -> dict:
        return {**CHIRP_DEFAULTS[self.kind], **self.sound}


_BASE = PipelineConfig()
EXPERIMENTS = {
    "linear": Experiment("linear", "linear", 3.5, _BASE.replace(alpha=55.0, beta=1.0, gamma=55.0, b=0.05)),
    "interrupted": Experiment(
        "interrupted", "interrupted", 3.5, _BASE.replace(alpha=55.0, beta=1.0, gamma=55.0, b=0.05)
    ),
    "crossing": Experiment(
        "crossing", "crossing_pair", 3.0, _BASE.replace(alpha=53.0, beta=1.0, gamma=55.0, b=0.01)
    ),
    "sinusoidal": Experiment(
        "sinusoidal", "sinusoidal", 3.5, _BASE.replace(alpha=53.0, beta=1.0, gamma=55.0, b=0.2)
    ),
}


def _level(db):
    return 10.0 ** (db / 20.0)


def ridge_profile(image: TimeFrequencyImage, track_hz, halfwidth: int = RIDGE_HALFWIDTH) -> np.ndarray:
    """Per frame, max |S| over positive-frequency bins within ``halfwidth`` of the track."""
    mag = np.abs(image.values[:, : image.window_len // 2 + 1])
    centre = np.rint(np.asarray(track_hz) / image.bin_width).astype(int)
    offsets = np.arange(-halfwidth, halfwidth + 1)
    cols = np.clip(centre[:, None] + offsets[None, :], 0, mag.shape[1] - 1)
    return mag[np.arange(mag.shape[0])[:, None], cols].max(axis=1)


def _frame_tracks(exp: Experiment, image: TimeFrequencyImage, extrapolate: bool):
    return instantaneous_frequencies(exp.kind, image.times, extrapolate=extrapolate, **exp.sound)


def _above(profile, db=LEVEL_DB):
    return profile >= _level(db) * profile.max()


def tail_metrics(exp: Experiment, diag: Diagnostics) -> dict:
    """How far the output ridge continues along the input slope past the input's end."""
    (track,) = _frame_tracks(exp, diag.input_image, extrapolate=True)
    p_in = ridge_profile(diag.input_image, track)
    p_out = ridge_profile(diag.output_image, track)
    last_in = int(np.flatnonzero(_above(p_in))[-1])
    on = _above(p_out)
    last_out = last_in
    while last_out + 1 < on.size and on[last_out + 1]:
        last_out += 1
    if not on[last_in]:
        last_out = last_in - 1
    frame = diag.input_image.frame_duration
    tail = (last_out - last_in) * frame
    delta = diag.geometry.delta_eff
    return {
        "input_last_frame": last_in,
        "output_last_frame": last_out,
        "reached_signal_end": bool(last_out == on.size - 1),
        "tail_seconds": tail,
        "delta_eff": delta,
        "tail_in_delays": tail / delta,
    }


def gap_metrics(exp: Experiment, diag: Diagnostics) -> dict:
    """Energy inside the gap box and ridge continuity across the gap."""
    p = exp.sound_params()
    img_in, img_out = diag.input_image, diag.output_image
    (track,) = _frame_tracks(exp, img_in, extrapolate=False)
    times = img_in.times
    lo, hi = p["gap_center"] - p["gap"] / 2, p["gap_center"] + p["gap"] / 2
    frames = np.flatnonzero((times >= lo) & (times <= hi))

    def box_fraction(img):
        mag2 = np.abs(img.values[:, : img.window_len // 2 + 1]) ** 2
        centre = np.rint(track / img.bin_width).astype(int)
        box = sum(
            mag2[n, max(centre[n] - RIDGE_HALFWIDTH, 0) : centre[n] + RIDGE_HALFWIDTH + 1].sum() for n in frames
        )
        return box / mag2.sum()

    f_in, f_out = box_fraction(img_in), box_fraction(img_out)
    p_in = ridge_profile(img_in, track)
    p_out = ridge_profile(img_out, track)
    on_in = _above(p_in)
    before = np.flatnonzero(on_in & (times < lo))
    after = np.flatnonzero(on_in & (times > hi))
    span = np.arange(before[-1], after[0] + 1) if before.size and after.size else frames
    on_out = _above(p_out)
    weakest = float(20 * np.log10(p_out[span].min() / p_out.max())) if p_out.max() > 0 else -np.inf
    return {
        "gap_frames": frames.tolist(),
        "input_box_fraction": f_in,
        "output_box_fraction": f_out,
        "energy_ratio": f_out / f_in if f_in > 0 else np.inf,
        "bridge_frames": [int(span[0]), int(span[-1])],
        "bridged": bool(on_out[span].all()),
        "weakest_bridge_db": weakest,
    }


def stratum_energies(values: np.ndarray, grid_values: np.ndarray) -> dict:
    """Energy of a half-space field split by the sign of ν."""
    e = np.abs(values) ** 2
    return {
        "positive": float(e[..., grid_values > 0].sum()),
        "negative": float(e[..., grid_values < 0].sum()),
        "zero": float(e[..., grid_values == 0].sum()),
    }


def crossing_metrics(exp: Experiment, diag: Diagnostics, config: PipelineConfig | None = None) -> dict:
    """Cross-stratum leakage for the crossing pair.

    Each component is also run on its own. ``transfer_up`` is the share of
    output energy found in negative-ν strata when the rising chirp's lifted
    input is restricted to positive ν, i.e. what the dynamics move across
    ν = 0 (symmetrically for ``transfer_down``). ``interaction`` is
    ``||a_pair - a_up - a_down||^2 / ||a_pair||^2``. ``leakage`` is the
    largest of the three. The ``share_growth_*`` entries report how much the
    wrong-sign share of the output exceeds that of the lifted input; that
    content is placed there by the lift and then evolves in its own strata.
    """
    config = config or diag.config
    p = exp.sound_params()
    rate = p["rate"]
    span = p["t_end"] - p["t_start"]
    common = {k: p[k] for k in ("t_start", "t_end", "amplitude", "fade")}
    fs = diag.input_image.sample_rate
    up = generate_chirp("linear", exp.duration, fs, f0=p["f_up"], f1=p["f_up"] + rate * span, **common)
    down = generate_chirp("linear", exp.duration, fs, f0=p["f_down"], f1=p["f_down"] - rate * span, **common)
    # all runs share the pair's normalization so the fields add up
    scale = diag.normalization
    d_up = _run_scaled(up, config, scale)
    d_down = _run_scaled(down, config, scale)
    nu = diag.lifted.grid.values

    def share(values, wrong):
        e = stratum_energies(values, nu)
        total = sum(e.values())
        return e[wrong] / total if total > 0 else 0.0

    def transfer(d, keep, wrong):
        v = np.where(keep(nu), d.lifted.values, 0.0)
        return share(_evolve_field(d, d.lifted.replace(v)).values, wrong)

    t_up = transfer(d_up, lambda x: x > 0, "negative")
    t_down = transfer(d_down, lambda x: x < 0, "positive")
    a_pair = diag.activation.values
    resid = a_pair - d_up.activation.values - d_down.activation.values
    interaction = float((np.abs(resid) ** 2).sum() / (np.abs(a_pair) ** 2).sum())
    return {
        "transfer_up": float(t_up),
        "transfer_down": float(t_down),
        "interaction": interaction,
        "leakage": float(max(t_up, t_down, interaction)),
        "share_growth_up": float(share(d_up.activation.values, "negative") - share(d_up.lifted.values, "negative")),
        "share_growth_down": float(
            share(d_down.activation.values, "positive") - share(d_down.lifted.values, "positive")
        ),
        "pair_strata": stratum_energies(a_pair, nu),
    }


def _run_scaled(signal: TimeDomainSignal, config: PipelineConfig, scale: float) -> Diagnostics:
    scaled = TimeDomainSignal(signal.samples / scale, signal.sample_rate)
    _, diag = run_pipeline(scaled, config.replace(normalize=False), half=True)
    return diag


def _evolve_field(diag: Diagnostics, field):
    c, g = diag.config, diag.geometry
    table = kernel_table(c, diag.input_image.sample_rate, half=field.half)
    return evolve(field, table, WCParams(c.alpha, c.beta, c.gamma, c.kappa, g.dt, g.delay_steps))


def curvature_metrics(exp: Experiment, diag: Diagnostics) -> dict:
    """Correlation between off-ridge output energy and trajectory curvature."""
    p = exp.sound_params()
    img_out = diag.output_image
    times = img_out.times
    (track,) = _frame_tracks(exp, img_out, extrapolate=False)
    inside = (times > p["t_start"] + 0.25) & (times < p["t_end"])
    curvature = np.abs(
        p["f_dev"] * (2 * np.pi / p["period"]) ** 2 * np.sin(2 * np.pi * (times - p["t_start"]) / p["period"])
    )
    mag2 = np.abs(img_out.values[:, : img_out.window_len // 2 + 1]) ** 2
    centre = np.rint(track / img_out.bin_width).astype(int)
    bins = np.arange(mag2.shape[1])
    near = np.abs(bins[None, :] - centre[:, None]) <= RIDGE_HALFWIDTH
    total = mag2.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        off = np.where(total > 0, (mag2 * ~near).sum(axis=1) / total, np.nan)
    ok = inside & np.isfinite(off)
    corr = float(np.corrcoef(off[ok], curvature[ok])[0, 1]) if ok.sum() > 2 else float("nan")
    return {"off_ridge_vs_curvature_correlation": corr, "frames_used": int(ok.sum())}


def peak_normalized(signal: TimeDomainSignal, peak: float = 0.9) -> TimeDomainSignal:
    m = np.abs(signal.samples).max()
    return TimeDomainSignal(signal.samples * (peak / m) if m > 0 else signal.samples, signal.sample_rate)


METRIC_DEFINITIONS = {
    "linear": "tail_seconds: output frames above -20 dB of its own peak along the extended track after the last such input frame",
    "interrupted": "energy_ratio: output/input energy share in the gap box; bridged: every ridge frame across the gap above -20 dB",
    "crossing": "leakage: largest of the cross-stratum transfer per component and the pair interaction energy share",
    "sinusoidal": "correlation of off-ridge output energy with the trajectory curvature |f''|; negative means more spread where straight",
}


def metrics_for(exp: Experiment, diag: Diagnostics) -> dict:
    if exp.name == "linear":
        return tail_metrics(exp, diag)
    if exp.name == "interrupted":
        return {**gap_metrics(exp, diag), "tail": tail_metrics(exp, diag)}
    if exp.name == "crossing":
        return crossing_metrics(exp, diag)
    return curvature_metrics(exp, diag)


def run_experiment(name: str, overrides: dict | None = None, out_dir=None, sample_rate: float = SAMPLE_RATE,
                   dump_spectrograms: bool = True, dump_strata_dir=None):
    """Run one named experiment; returns ``(output_signal, diagnostics, metrics)``.

    With ``out_dir`` the input and output sounds (peak normalized), their
    spectrograms, the energy log and a metrics JSON are written there.
    """
    if name not in EXPERIMENTS:
        raise KeyError(f"unknown experiment {name!r}; choose from {sorted(EXPERIMENTS)}")
    exp = EXPERIMENTS[name]
    config = exp.config.with_values(overrides or {})
    exp = Experiment(exp.name, exp.kind, exp.duration, config, exp.sound)
    signal = exp.signal(sample_rate)
    out, diag = run_pipeline(signal, config)
    metrics = {"experiment": name, **diag.summary(), "metrics": metrics_for(exp, diag),
               "metric_definitions": {"origin": "harness defined", "text": METRIC_DEFINITIONS[name]}}
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        write_wav(signal, out_dir / f"{name}_input.wav")
        write_wav(peak_normalized(out), out_dir / f"{name}_output.wav")
        if dump_spectrograms:
            for tag, img in (("input", diag.input_image), ("output", diag.output_image)):
                export_magnitude_csv(img, out_dir / f"{name}_{tag}_spectrogram.csv")
                export_pgm(img, out_dir / f"{name}_{tag}_spectrogram.pgm")
        diag.write_energy_log(out_dir / f"{name}_energy.csv")
        (out_dir / f"{name}_metrics.json").write_text(json.dumps(metrics, indent=2, default=_json_default) + "\n")
    if dump_strata_dir is not None:
        dump_strata(diag.activation, dump_strata_dir)
    return out, diag, metrics


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o))
