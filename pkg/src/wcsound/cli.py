"""Command line front end.

Exit codes: 0 success, 1 self-test failure, 2 usage error, 3 invalid
configuration, 4 input/output or WAV format error, 5 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .experiments import EXPERIMENTS, peak_normalized, run_experiment
from .lift import dump_strata
from .pipeline import ConfigError, PipelineConfig, run_pipeline
from .selftest import run_selftest
from .signal_io import CHIRP_DEFAULTS, WavError, generate_chirp, read_wav, write_wav
from .stft import export_magnitude_csv, export_pgm

EXIT_OK = 0
EXIT_SELFTEST = 1
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_IO = 4
EXIT_NUMERIC = 5

REALNESS_TOL = 1e-9

# flag -> config field
_MODEL_FLAGS = {
    "alpha": float,
    "beta": float,
    "gamma": float,
    "b": float,
    "delta": float,
    "kappa": float,
    "epsilon": float,
    "epsilon_rel": float,
    "window_len": int,
    "hop": int,
    "nu_max": float,
    "nu_bins": int,
    "substeps": int,
}


class NumericalError(RuntimeError):
    pass


def _add_model_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("model parameters (override --config)")
    for name, typ in _MODEL_FLAGS.items():
        g.add_argument("--" + name.replace("_", "-"), dest=name, type=typ, default=None, metavar=typ.__name__.upper())
    g.add_argument("--weighting", choices=("hat", "midpoint"), default=None, help="kernel cell weighting")
    g.add_argument("--config", type=Path, default=None, help="key = value file of config fields")


def _resolve_config(args, base: PipelineConfig) -> PipelineConfig:
    config = PipelineConfig.from_file(args.config, base) if args.config else base
    changes = {k: getattr(args, k) for k in list(_MODEL_FLAGS) + ["weighting"] if getattr(args, k) is not None}
    return config.with_values(changes)


def _add_dump_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--dump-spectrograms", type=Path, default=None, metavar="DIR",
                   help="write input/output magnitude CSV and PGM images here")
    p.add_argument("--dump-strata", type=Path, default=None, metavar="DIR",
                   help="write one CSV of |a| per chirpiness value here")


def _generator_flags(p: argparse.ArgumentParser) -> None:
    keys = sorted({k for params in CHIRP_DEFAULTS.values() for k in params})
    g = p.add_argument_group("generator parameters (defaults depend on the kind)")
    for k in keys:
        g.add_argument("--" + k.replace("_", "-"), dest=k, type=float, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wcsound",
        description="Sound reconstruction by delayed Wilson-Cowan evolution in time-frequency-chirpiness space.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("process", help="process a WAV file")
    p.add_argument("input", type=Path)
    p.add_argument("output", type=Path)
    _add_model_flags(p)
    _add_dump_flags(p)
    p.add_argument("--energy-log", type=Path, default=None, help="CSV of per-frame field norms")
    p.add_argument("--no-peak-normalize", action="store_true",
                   help="write the output at its raw amplitude (clipped to [-1, 1])")

    p = sub.add_parser("generate", help="synthesize a test sound")
    p.add_argument("kind", choices=sorted(CHIRP_DEFAULTS))
    p.add_argument("output", type=Path)
    p.add_argument("--duration", type=float, default=3.5)
    p.add_argument("--sample-rate", type=float, default=8000.0)
    _generator_flags(p)

    p = sub.add_parser("experiment", help="run a named experiment and write its artefacts")
    p.add_argument("name", choices=sorted(EXPERIMENTS) + ["all"])
    p.add_argument("--out-dir", "--out", dest="out", type=Path, default=Path("results"))
    _add_model_flags(p)
    p.add_argument("--dump-strata", type=Path, default=None, metavar="DIR")

    p = sub.add_parser("config", help="print the resolved configuration")
    _add_model_flags(p)

    sub.add_parser("selftest", help="run quick built-in consistency checks")
    return parser


def _cmd_process(args) -> int:
    config = _resolve_config(args, PipelineConfig())
    signal = read_wav(args.input)
    out, diag = run_pipeline(signal, config)
    if diag.imag_residue > REALNESS_TOL:
        raise NumericalError(f"output is not real: max |Im| = {diag.imag_residue:.3g}")
    write_wav(out if args.no_peak_normalize else peak_normalized(out), args.output)
    if args.dump_spectrograms:
        d = args.dump_spectrograms
        d.mkdir(parents=True, exist_ok=True)
        for tag, img in (("input", diag.input_image), ("output", diag.output_image)):
            export_magnitude_csv(img, d / f"{tag}_spectrogram.csv")
            export_pgm(img, d / f"{tag}_spectrogram.pgm")
    if args.dump_strata:
        dump_strata(diag.activation, args.dump_strata)
    if args.energy_log:
        diag.write_energy_log(args.energy_log)
    print(json.dumps(diag.summary(), indent=2))
    return EXIT_OK


def _cmd_generate(args) -> int:
    allowed = CHIRP_DEFAULTS[args.kind]
    params = {k: getattr(args, k) for k in allowed if getattr(args, k) is not None}
    stray = [k for k in {k for v in CHIRP_DEFAULTS.values() for k in v} - set(allowed) if getattr(args, k) is not None]
    if stray:
        raise ConfigError(f"{args.kind} does not take {', '.join('--' + s.replace('_', '-') for s in sorted(stray))}")
    try:
        signal = generate_chirp(args.kind, args.duration, args.sample_rate, **params)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    write_wav(signal, args.output)
    return EXIT_OK


def _cmd_experiment(args) -> int:
    names = sorted(EXPERIMENTS) if args.name == "all" else [args.name]
    for name in names:
        base = EXPERIMENTS[name].config
        config = _resolve_config(args, base)
        overrides = {k: v for k, v in config.to_dict().items() if v != getattr(base, k)}
        strata = args.dump_strata / name if args.dump_strata else None
        _, diag, metrics = run_experiment(name, overrides, args.out, dump_strata_dir=strata)
        if diag.imag_residue > REALNESS_TOL:
            raise NumericalError(f"{name}: output is not real: max |Im| = {diag.imag_residue:.3g}")
        print(json.dumps({"experiment": name, **metrics["metrics"]}, default=float))
    return EXIT_OK


def _cmd_config(args) -> int:
    sys.stdout.write(_resolve_config(args, PipelineConfig()).to_text())
    return EXIT_OK


def _cmd_selftest(args) -> int:
    results = run_selftest()
    for r in results:
        print(r.line())
    return EXIT_OK if all(r.passed for r in results) else EXIT_SELFTEST


_COMMANDS = {
    "process": _cmd_process,
    "generate": _cmd_generate,
    "experiment": _cmd_experiment,
    "config": _cmd_config,
    "selftest": _cmd_selftest,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except WavError as exc:
        print(f"wav error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
