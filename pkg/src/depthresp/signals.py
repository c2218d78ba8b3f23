"""Respiratory waveforms: synthesis, ingestion and conditioning.

The synthetic generator is a deliberately small model of a breathing trace:
each cycle is a raised-cosine inhale followed by an exponential exhale, with
per-cycle period and amplitude multipliers drawn from normal distributions
truncated at three standard deviations.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy import signal as sps

from .errors import DegenerateSignalError, IngestionError, ParameterError
from .rng import stream

SYNTH_RATE_HZ = 100.0
# decay constant of the exhale phase, in units of the exhale duration
EXHALE_DECAY = 3.0


@dataclass(frozen=True)
class RespSignal:
    """A uniformly sampled respiratory waveform."""

    samples: np.ndarray
    sample_rate_hz: float
    kind: Literal["synthetic", "recorded"] = "synthetic"
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        x = np.ascontiguousarray(self.samples, dtype=np.float64)
        if x.ndim != 1 or x.size == 0:
            raise ParameterError("signal samples must be a non-empty 1-D sequence")
        if not np.all(np.isfinite(x)):
            raise ParameterError("signal samples must be finite")
        if not (self.sample_rate_hz > 0 and math.isfinite(self.sample_rate_hz)):
            raise ParameterError(f"sample_rate_hz must be positive, got {self.sample_rate_hz}")
        x.setflags(write=False)
        object.__setattr__(self, "samples", x)

    def __len__(self) -> int:
        return self.samples.size

    @property
    def duration_s(self) -> float:
        """Time between the first and the last sample."""
        return (self.samples.size - 1) / self.sample_rate_hz

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.samples.size) / self.sample_rate_hz

    def with_samples(self, samples: np.ndarray, sample_rate_hz: float | None = None) -> RespSignal:
        rate = self.sample_rate_hz if sample_rate_hz is None else sample_rate_hz
        return RespSignal(samples, rate, self.kind, dict(self.meta))


class SynthesisParams(BaseModel):
    """Knobs of the synthetic breathing generator."""

    model_config = ConfigDict(extra="forbid", frozen=True, validate_default=True)

    rate_hz: float = Field(0.25, gt=0)
    rate_jitter: float = Field(0.0, ge=0, lt=1 / 3)
    amp_jitter: float = Field(0.0, ge=0, lt=1 / 3)
    inhale_fraction: float = Field(0.4, gt=0, lt=1)
    duration_s: float = Field(30.0, gt=0)
    seed: int = 0

    @model_validator(mode="after")
    def _finite(self):
        for name in ("rate_hz", "duration_s"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        return self


def _truncated_normal(rng: np.random.Generator, scale: float) -> float:
    """Draw 1 + scale * z with z ~ N(0, 1) truncated to [-3, 3]."""
    while True:
        z = rng.standard_normal()
        if abs(z) <= 3.0:
            return 1.0 + scale * z


def breath_shape(phase: np.ndarray, inhale_fraction: float) -> np.ndarray:
    """One breath on ``phase`` in [0, 1): 0 at both ends, 1 at end of inhale."""
    phase = np.asarray(phase, dtype=np.float64)
    out = np.empty_like(phase)
    inhale = phase < inhale_fraction
    out[inhale] = 0.5 * (1.0 - np.cos(np.pi * phase[inhale] / inhale_fraction))
    psi = (phase[~inhale] - inhale_fraction) / (1.0 - inhale_fraction)
    floor = math.exp(-EXHALE_DECAY)
    out[~inhale] = (np.exp(-EXHALE_DECAY * psi) - floor) / (1.0 - floor)
    return out


def synthesize(params: SynthesisParams) -> RespSignal:
    """Generate a quasi-periodic breathing trace sampled at 100 Hz.

    The trace starts at the beginning of an inhale. Cycle ``k`` lasts
    ``m_k / rate_hz`` seconds and peaks at ``a_k``, where ``m_k`` and ``a_k``
    are independent truncated-normal multipliers around 1 with standard
    deviations ``rate_jitter`` and ``amp_jitter``. With zero jitter the
    output is exactly periodic.
    """
    if not isinstance(params, SynthesisParams):
        try:
            params = SynthesisParams.model_validate(params)
        except Exception as exc:
            raise ParameterError(str(exc)) from exc
    n = math.ceil(params.duration_s * SYNTH_RATE_HZ - 1e-9)
    t = np.arange(n) / SYNTH_RATE_HZ
    rng = stream(params.seed)
    base_period = 1.0 / params.rate_hz

    starts, periods, amps = [], [], []
    start = 0.0
    while start <= t[-1]:
        period = base_period * _truncated_normal(rng, params.rate_jitter)
        amp = _truncated_normal(rng, params.amp_jitter)
        starts.append(start)
        periods.append(period)
        amps.append(amp)
        start += period
    starts = np.asarray(starts)
    periods = np.asarray(periods)
    amps = np.asarray(amps)

    k = np.searchsorted(starts, t, side="right") - 1
    phase = (t - starts[k]) / periods[k]
    np.clip(phase, 0.0, np.nextafter(1.0, 0.0), out=phase)
    samples = amps[k] * breath_shape(phase, params.inhale_fraction)
    return RespSignal(samples, SYNTH_RATE_HZ, "synthetic", {"synthesis": params.model_dump()})


def load_waveform(path: str | Path, sample_rate_hz: float) -> RespSignal:
    """Read a single-column CSV waveform (optional one-line header).

    Records are numbered from 1 in file order; blank lines are ignored.
    """
    path = Path(path)
    if not (sample_rate_hz > 0):
        raise ParameterError(f"sample_rate_hz must be positive, got {sample_rate_hz}")
    if not path.is_file():
        raise IngestionError(f"waveform file not found: {path}")
    values = []
    with path.open(newline="", encoding="utf-8") as fh:
        for record, row in enumerate(csv.reader(fh), start=1):
            cells = [c.strip() for c in row]
            if not cells or all(c == "" for c in cells):
                continue
            if len(cells) != 1:
                raise IngestionError(
                    f"{path}: record {record} has {len(cells)} columns, expected 1", record
                )
            try:
                value = float(cells[0])
            except ValueError:
                if record == 1 and not values:
                    continue  # header
                raise IngestionError(
                    f"{path}: record {record} is not a number: {cells[0]!r}", record
                ) from None
            if not math.isfinite(value):
                raise IngestionError(f"{path}: record {record} is not finite: {cells[0]!r}", record)
            values.append(value)
    if not values:
        raise IngestionError(f"{path}: no samples")
    return RespSignal(np.asarray(values), float(sample_rate_hz), "recorded", {"source": str(path)})


def resample_linear(s: RespSignal, target_rate_hz: float) -> RespSignal:
    """Linearly interpolate ``s`` onto a grid at ``target_rate_hz``.

    The output grid starts at t=0 and keeps every target time stamp that
    does not extend past the last input sample.
    """
    if not (target_rate_hz > 0 and math.isfinite(target_rate_hz)):
        raise ParameterError(f"target_rate_hz must be positive, got {target_rate_hz}")
    if target_rate_hz == s.sample_rate_hz:
        return s.with_samples(s.samples.copy())
    n_out = math.floor(s.duration_s * target_rate_hz + 1e-9) + 1
    t_out = np.arange(n_out) / target_rate_hz
    return s.with_samples(np.interp(t_out, s.times, s.samples), float(target_rate_hz))


def butter4_sos(cutoff_hz: float, sample_rate_hz: float) -> np.ndarray:
    """4th-order Butterworth low-pass as second-order sections.

    Bilinear transform with the analog cutoff prewarped so the digital
    response is -3 dB exactly at ``cutoff_hz``. Each section has its zeros
    at z = -1 and unit gain at DC.
    """
    nyq = sample_rate_hz / 2.0
    if not (0 < cutoff_hz < nyq):
        raise ParameterError(f"cutoff {cutoff_hz} Hz must lie in (0, {nyq}) Hz")
    order = 4
    fs2 = 2.0 * sample_rate_hz
    wc = fs2 * math.tan(math.pi * cutoff_hz / sample_rate_hz)
    sos = []
    for k in range(1, order // 2 + 1):
        pole = wc * complex(np.exp(1j * math.pi * (2 * k + order - 1) / (2 * order)))
        zp = (fs2 + pole) / (fs2 - pole)
        a1 = -2.0 * zp.real
        a2 = abs(zp) ** 2
        g = (1.0 + a1 + a2) / 4.0
        sos.append([g, 2.0 * g, g, 1.0, a1, a2])
    return np.asarray(sos)


def lowpass_butter4(s: RespSignal, cutoff_hz: float = 1.0) -> RespSignal:
    """Zero-phase 4th-order Butterworth low-pass (forward-backward).

    Ends are extended by even reflection over three filter lengths (15
    samples) to keep start-up transients out of the record.
    """
    sos = butter4_sos(cutoff_hz, s.sample_rate_hz)
    padlen = 15
    if s.samples.size <= padlen:
        raise ParameterError(f"signal needs more than {padlen} samples to filter")
    y = sps.sosfiltfilt(sos, s.samples, padtype="even", padlen=padlen)
    return s.with_samples(y)


def normalize(s: RespSignal) -> RespSignal:
    """Affinely rescale to [0, 1]."""
    lo = float(s.samples.min())
    hi = float(s.samples.max())
    if hi == lo:
        raise DegenerateSignalError("cannot normalize a constant signal")
    y = (s.samples - lo) / (hi - lo)
    # guard against 1 ulp overshoot from the division
    np.clip(y, 0.0, 1.0, out=y)
    return s.with_samples(y)


def scale(s: RespSignal, factor: float) -> RespSignal:
    return s.with_samples(s.samples * factor)


def condition(s: RespSignal, frame_rate_hz: float, *, filtered: bool | None = None,
              cutoff_hz: float = 1.0) -> RespSignal:
    """Prepare a waveform to drive the scene: resample, filter, normalize.

    ``filtered`` defaults to True for recorded signals and False for
    synthetic ones.
    """
    if filtered is None:
        filtered = s.kind == "recorded"
    out = resample_linear(s, frame_rate_hz)
    if filtered:
        out = lowpass_butter4(out, cutoff_hz)
    return normalize(out)
