"""Waveform container, mono WAV I/O and the synthetic chirp generators."""

from __future__ import annotations

import struct
import wave
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "TimeDomainSignal",
    "WavError",
    "UnsupportedEncodingError",
    "MultiChannelError",
    "MalformedHeaderError",
    "read_wav",
    "write_wav",
    "generate_chirp",
    "CHIRP_DEFAULTS",
    "chirp_rates",
    "instantaneous_frequencies",
]

_PCM = 1
_IEEE_FLOAT = 3
_EXTENSIBLE = 0xFFFE


@dataclass(frozen=True)
class TimeDomainSignal:
    """Uniformly sampled waveform.

    ``samples`` is usually real; complex samples are allowed so that
    modulated test signals can be pushed through the STFT.
    """

    samples: np.ndarray
    sample_rate: float

    def __post_init__(self):
        samples = np.asarray(self.samples)
        if not np.iscomplexobj(samples):
            samples = samples.astype(np.float64)
        if samples.ndim != 1 or samples.size == 0:
            raise ValueError("samples must be a non-empty 1-D sequence")
        if not np.all(np.isfinite(samples)):
            raise ValueError("samples must be finite")
        if not self.sample_rate > 0:
            raise ValueError("sample_rate must be positive")
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate", float(self.sample_rate))

    def __len__(self):
        return self.samples.size

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.samples.size) / self.sample_rate


class WavError(ValueError):
    """Base class for WAV decoding failures."""


class UnsupportedEncodingError(WavError):
    pass


class MultiChannelError(WavError):
    pass


class MalformedHeaderError(WavError):
    pass


def _chunks(data: bytes):
    pos = 12
    while pos + 8 <= len(data):
        cid, size = struct.unpack_from("<4sI", data, pos)
        body = data[pos + 8 : pos + 8 + size]
        if len(body) < size:
            raise MalformedHeaderError(f"truncated {cid!r} chunk")
        yield cid, body
        pos += 8 + size + (size & 1)


def read_wav(path) -> TimeDomainSignal:
    """Read a mono 16-bit PCM or 32-bit float WAV file.

    Integer samples are scaled by 1/32768, so the output lies in [-1, 1).
    """
    data = Path(path).read_bytes()
    if len(data) < 12 or data[:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise MalformedHeaderError("not a RIFF/WAVE file")
    fmt = None
    payload = None
    for cid, body in _chunks(data):
        if cid == b"fmt ":
            if len(body) < 16:
                raise MalformedHeaderError("fmt chunk too short")
            fmt = struct.unpack_from("<HHIIHH", body, 0)
            if fmt[0] == _EXTENSIBLE:
                if len(body) < 26:
                    raise MalformedHeaderError("extensible fmt chunk too short")
                fmt = (struct.unpack_from("<H", body, 24)[0],) + fmt[1:]
        elif cid == b"data":
            payload = body
    if fmt is None or payload is None:
        raise MalformedHeaderError("missing fmt or data chunk")

    tag, channels, rate, _, _, bits = fmt
    if channels != 1:
        raise MultiChannelError(f"expected mono input, got {channels} channels")
    if rate <= 0:
        raise MalformedHeaderError("sample rate must be positive")
    if tag == _PCM and bits == 16:
        samples = np.frombuffer(payload[: len(payload) // 2 * 2], dtype="<i2") / 32768.0
    elif tag == _IEEE_FLOAT and bits == 32:
        samples = np.frombuffer(payload[: len(payload) // 4 * 4], dtype="<f4").astype(np.float64)
    else:
        raise UnsupportedEncodingError(f"unsupported encoding (format tag {tag}, {bits} bits)")
    return TimeDomainSignal(samples, rate)


def write_wav(signal: TimeDomainSignal, path) -> None:
    """Write ``signal`` as mono 16-bit PCM, clipping to [-1, 1] first.

    Samples are scaled by 32768 and rounded, saturating at 32767, so 1.0
    encodes as the largest positive integer and a read/write round trip
    is exact to within 2**-15.
    """
    samples = np.asarray(signal.samples)
    if np.iscomplexobj(samples):
        raise ValueError("cannot write a complex signal")
    clipped = np.clip(samples, -1.0, 1.0)
    pcm = np.clip(np.round(clipped * 32768.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(int(round(signal.sample_rate)))
        w.writeframes(pcm.tobytes())


# Generator defaults for the four test sounds. Frequencies in Hz, times in s.
CHIRP_DEFAULTS = {
    "linear": dict(f0=500.0, f1=600.0, t_start=0.25, t_end=2.25, amplitude=0.5, fade=0.05),
    "interrupted": dict(
        f0=500.0, f1=600.0, t_start=0.25, t_end=2.25, amplitude=0.5, fade=0.05,
        gap_center=1.25, gap=0.125,
    ),
    "crossing_pair": dict(
        f_up=400.0, f_down=600.0, rate=60.0, t_start=0.25, t_end=1.25, amplitude=0.5, fade=0.05,
    ),
    "sinusoidal": dict(
        f_center=500.0, f_dev=30.0, period=2.5, t_start=0.25, t_end=3.0, amplitude=0.5, fade=0.05,
    ),
}


def _settings(kind, params):
    if kind not in CHIRP_DEFAULTS:
        raise ValueError(f"unknown chirp kind {kind!r}")
    unknown = set(params) - set(CHIRP_DEFAULTS[kind])
    if unknown:
        raise ValueError(f"unknown parameters for {kind}: {sorted(unknown)}")
    return {**CHIRP_DEFAULTS[kind], **params}


def chirp_rates(kind: str, **params) -> list[float]:
    """Chirp rates (Hz/s) of the components of a generator, max |rate| for sinusoidal."""
    p = _settings(kind, params)
    if kind in ("linear", "interrupted"):
        return [(p["f1"] - p["f0"]) / (p["t_end"] - p["t_start"])]
    if kind == "crossing_pair":
        return [p["rate"], -p["rate"]]
    return [2 * np.pi * p["f_dev"] / p["period"]]


def instantaneous_frequencies(kind: str, t, extrapolate: bool = False, **params) -> list[np.ndarray]:
    """Frequency trajectory (Hz) of each component at times ``t``.

    Outside ``[t_start, t_end]`` the trajectory is held at its end values,
    or continued with the same law when ``extrapolate`` is set.
    """
    p = _settings(kind, params)
    span = p["t_end"] - p["t_start"]
    tt = np.asarray(t, dtype=float) - p["t_start"]
    if not extrapolate:
        tt = np.clip(tt, 0.0, span)
    if kind in ("linear", "interrupted"):
        return [p["f0"] + (p["f1"] - p["f0"]) * tt / span]
    if kind == "crossing_pair":
        return [p["f_up"] + p["rate"] * tt, p["f_down"] - p["rate"] * tt]
    return [p["f_center"] + p["f_dev"] * np.sin(2 * np.pi * tt / p["period"])]


def _envelope(t, t_start, t_end, fade):
    env = ((t >= t_start) & (t < t_end)).astype(float)
    if fade > 0:
        rise = np.clip((t - t_start) / fade, 0.0, 1.0)
        fall = np.clip((t_end - t) / fade, 0.0, 1.0)
        env *= np.sin(0.5 * np.pi * np.minimum(rise, fall)) ** 2
    return env


def _tone(freq, env, amplitude, sample_rate):
    # accumulated phase: phase[n] = 2*pi * sum_{i<n} f[i] / fs
    phase = 2 * np.pi * np.concatenate(([0.0], np.cumsum(freq[:-1]))) / sample_rate
    return amplitude * env * np.sin(phase)


def generate_chirp(kind: str, duration: float, sample_rate: float, **params) -> TimeDomainSignal:
    """Synthesize one of the test sounds.

    Parameters
    ----------
    kind : {"linear", "interrupted", "crossing_pair", "sinusoidal"}
    duration : float
        Total length in seconds; the sound is silent outside
        ``[t_start, t_end)``.
    sample_rate : float
    **params
        Overrides of :data:`CHIRP_DEFAULTS`.

    The instantaneous frequency of every component is the derivative of
    an accumulated phase, so the waveform has no phase jumps.
    """
    if not duration > 0:
        raise ValueError("duration must be positive")
    if not sample_rate > 0:
        raise ValueError("sample_rate must be positive")
    p = _settings(kind, params)
    n = int(round(duration * sample_rate))
    t = np.arange(n) / sample_rate
    env = _envelope(t, p["t_start"], p["t_end"], p["fade"])
    freqs = instantaneous_frequencies(kind, t, **params)

    nyquist = sample_rate / 2
    for f in freqs:
        if np.any(f >= nyquist) or np.any(f < 0):
            raise ValueError(f"frequency trajectory leaves [0, {nyquist}) Hz")

    out = np.zeros(n)
    for f in freqs:
        out += _tone(f, env, p["amplitude"], sample_rate)
    if kind == "interrupted":
        gap = np.abs(t - p["gap_center"]) <= p["gap"] / 2
        out[gap] = 0.0
    return TimeDomainSignal(out, sample_rate)
