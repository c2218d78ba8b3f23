"""Spectral SNR, empirical noise level and parameter sweeps."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from ._parallel import ordered_map
from .errors import DegenerateSignalError, DetectionError, ParameterError
from .extract import RoiSpec, roi_mean
from .noise import SPEC_TYPES, NoiseSpec, apply_chain_frame, dump_chain, parse_spec
from .scene import DepthVideo
from .signals import RespSignal

SNR_CAP_DB = 60.0
DEFAULT_BAND_HZ = 0.1
DEFAULT_F0_RANGE_HZ = (0.1, 0.5)
# peaks within this fraction of the strongest one count as ties in detect_f0
F0_TIE_TOLERANCE = 0.1


def periodogram(signal: RespSignal) -> tuple[np.ndarray, np.ndarray]:
    """Hann-windowed periodogram of the mean-removed signal.

    The FFT is zero-padded to the next power of two. Returns (freqs, power)
    for bins 0 .. nfft/2.
    """
    x = signal.samples - signal.samples.mean()
    n = x.size
    nfft = 1 << max(0, (n - 1).bit_length())
    spec = np.fft.rfft(x * np.hanning(n), nfft)
    power = spec.real ** 2 + spec.imag ** 2
    freqs = np.arange(power.size) * (signal.sample_rate_hz / nfft)
    return freqs, power


def band_mask(freqs: np.ndarray, f0_hz: float, band_hz: float = DEFAULT_BAND_HZ) -> np.ndarray:
    """Bins within ``band_hz`` of the fundamental or its first harmonic (DC excluded)."""
    m = (np.abs(freqs - f0_hz) <= band_hz) | (np.abs(freqs - 2.0 * f0_hz) <= band_hz)
    m[0] = False
    return m


@dataclass(frozen=True)
class SnrResult:
    rho: float
    snr_db: float


def spectral_snr(signal: RespSignal, f0_hz: float, band_hz: float = DEFAULT_BAND_HZ) -> SnrResult:
    """Band energy ratio and its dB form.

    ``rho`` is the periodogram energy within ``band_hz`` of ``f0_hz`` or
    ``2 * f0_hz`` divided by all energy above 0 Hz; ``snr_db`` is
    ``10 log10(rho / (1 - rho))`` clamped to +-60 dB.
    """
    rate = signal.sample_rate_hz
    if len(signal) < 10.0 * rate:
        raise ParameterError(f"SNR needs at least 10 s of signal, got {len(signal) / rate:.3g} s")
    if not 0 < f0_hz < rate / 4:
        raise ParameterError(f"f0 {f0_hz} Hz must lie in (0, {rate / 4}) Hz")
    if not band_hz > 0:
        raise ParameterError("band_hz must be positive")
    freqs, power = periodogram(signal)
    total = power[1:].sum()
    if not total > 0:
        raise DegenerateSignalError("signal has no energy above DC")
    rho = float(power[band_mask(freqs, f0_hz, band_hz)].sum() / total)
    rho = min(rho, 1.0)
    if rho >= 1.0:
        return SnrResult(rho, SNR_CAP_DB)
    if rho <= 0.0:
        return SnrResult(rho, -SNR_CAP_DB)
    db = 10.0 * math.log10(rho / (1.0 - rho))
    return SnrResult(rho, float(np.clip(db, -SNR_CAP_DB, SNR_CAP_DB)))


def snr(signal: RespSignal, f0_hz: float, band_hz: float = DEFAULT_BAND_HZ) -> float:
    """SNR in dB; see :func:`spectral_snr`."""
    return spectral_snr(signal, f0_hz, band_hz).snr_db


@dataclass(frozen=True)
class F0Estimate:
    f0_hz: float
    ambiguous: bool = False
    candidates: tuple[float, ...] = ()


def _parabolic(power: np.ndarray, k: int) -> float:
    if k <= 0 or k >= power.size - 1:
        return 0.0
    a, b, c = power[k - 1], power[k], power[k + 1]
    den = a - 2.0 * b + c
    return 0.0 if den == 0 else 0.5 * (a - c) / den


def estimate_f0(reference: RespSignal, range_hz: tuple[float, float] = DEFAULT_F0_RANGE_HZ) -> F0Estimate:
    """Respiration rate from the strongest periodogram peak in ``range_hz``.

    The peak bin is refined by a parabola through its two neighbours. Local
    maxima within 10 % of the strongest one are ties; the lowest frequency
    wins and the estimate is flagged ``ambiguous``.
    """
    lo, hi = range_hz
    if not 0 <= lo < hi:
        raise ParameterError(f"invalid f0 range {range_hz}")
    freqs, power = periodogram(reference)
    idx = np.flatnonzero((freqs >= lo) & (freqs <= hi))
    if idx.size == 0:
        raise DetectionError(f"no periodogram bins inside {range_hz} Hz")
    sub = power[idx]
    best = int(idx[np.argmax(sub)])
    if not power[best] > sub.mean():
        raise DetectionError("no spectral peak above the mean energy of the search range")
    left = np.r_[-np.inf, power[:-1]]
    right = np.r_[power[1:], -np.inf]
    peaks = [int(k) for k in idx if power[k] >= left[k] and power[k] > right[k]
             and power[k] >= (1.0 - F0_TIE_TOLERANCE) * power[best]]
    if best not in peaks:
        peaks.append(best)
    peaks.sort()
    df = freqs[1] - freqs[0]
    cands = tuple(float(freqs[k] + _parabolic(power, k) * df) for k in peaks)
    return F0Estimate(cands[0], len(cands) > 1, cands)


def detect_f0(reference: RespSignal, range_hz: tuple[float, float] = DEFAULT_F0_RANGE_HZ) -> float:
    return estimate_f0(reference, range_hz).f0_hz


def frame_noise_std(noisy: np.ndarray, clean: np.ndarray) -> float:
    return float(np.std(noisy.astype(np.float64) - clean.astype(np.float64)))


def measure_noise_std(noisy: DepthVideo, clean: DepthVideo) -> float:
    """Per-frame std of (noisy - clean) over all pixels, averaged over frames."""
    if noisy.frames.shape != clean.frames.shape:
        raise ParameterError(f"video shapes differ: {noisy.frames.shape} vs {clean.frames.shape}")
    return float(np.mean([frame_noise_std(a, b) for a, b in zip(noisy.frames, clean.frames)]))


def axial_sensitivity(z_m: float, m: float, f_b: float, sigma_p: float) -> float:
    """Depth std of a disparity camera: ``(m / f_b) * Z**2 * sigma_p``."""
    if not f_b > 0:
        raise ParameterError("f_b must be positive")
    return (m / f_b) * z_m ** 2 * sigma_p


@dataclass
class SnrReport:
    model: str
    param_name: str
    param_value: float
    scale: float
    seed: int
    empirical_sigma_m: float
    rho: float
    snr_db: float
    f0_hz: float
    band_hz: float = DEFAULT_BAND_HZ
    noise_spec: list = field(default_factory=list)
    error: str = ""


@dataclass
class SummaryRow:
    model: str
    param_name: str
    param_value: float
    scale: float
    n_seeds: int
    empirical_sigma_m: float
    rho: float
    snr_db_mean: float
    snr_db_std: float
    f0_hz: float


class SweepGrid(BaseModel):
    """One noise model swept over one parameter, at several scales and seeds.

    ``base`` fixes the model's other parameters; ``base_chain`` is applied
    before the swept model (e.g. a fixed Motion level). Every spec of a cell
    uses the cell's seed.
    """

    model_config = ConfigDict(extra="forbid", frozen=True, validate_default=True)

    model: str
    param: str
    values: list[float] = Field(min_length=1)
    base: dict = Field(default_factory=dict)
    base_chain: list[NoiseSpec] = Field(default_factory=list)
    scales: list[float] = Field(default_factory=lambda: [1.0, 0.2, 0.05], min_length=1)
    seeds: list[int] = Field(default_factory=lambda: [0, 1, 2], min_length=1)
    band_hz: float = Field(DEFAULT_BAND_HZ, gt=0)
    f0_range_hz: tuple[float, float] = DEFAULT_F0_RANGE_HZ

    @field_validator("model")
    @classmethod
    def _known(cls, v):
        if v not in SPEC_TYPES:
            raise ValueError(f"unknown noise model {v!r}; expected one of {sorted(SPEC_TYPES)}")
        return v

    @field_validator("values")
    @classmethod
    def _increasing(cls, v):
        if any(b <= a for a, b in zip(v, v[1:])):
            raise ValueError("parameter values must be strictly increasing")
        return v

    @field_validator("scales")
    @classmethod
    def _scales(cls, v):
        if any(not 0 < s <= 1 for s in v):
            raise ValueError("scales must lie in (0, 1]")
        return v

    @model_validator(mode="after")
    def _specs_valid(self):
        if self.param not in SPEC_TYPES[self.model].model_fields or self.param in ("type", "seed"):
            raise ValueError(f"{self.model} has no sweepable parameter {self.param!r}")
        for v in self.values:
            self.spec(v, 0)
        return self

    def spec(self, value: float, seed: int):
        cls = SPEC_TYPES[self.model]
        ann = cls.model_fields[self.param].annotation
        if ann is int:
            if float(value) != int(value):
                raise ValueError(f"{self.param} takes integers, got {value}")
            value = int(value)
        return cls(**{**self.base, self.param: value, "seed": seed})

    def chain(self, value: float, seed: int) -> list:
        prefix = [s.model_copy(update={"seed": seed}) for s in self.base_chain]
        return prefix + [self.spec(value, seed)]


def reference_f0(clean: DepthVideo, roi: RoiSpec, range_hz=DEFAULT_F0_RANGE_HZ) -> float:
    """Respiration rate of the noiseless RoI signal at full resolution."""
    values = [roi_mean(f, roi.at_scale(1.0)) for f in clean.frames]
    return detect_f0(RespSignal(np.asarray(values), clean.frame_rate_hz), range_hz)


def corrupt_and_reduce(clean: DepthVideo, chains: Sequence[Sequence], roi: RoiSpec,
                       scales: Sequence[float], threads: int | None = 1) -> tuple[np.ndarray, np.ndarray]:
    """Stream ``clean`` through several chains at once.

    Returns ``sigma`` (n_chains, T) with the per-frame noise std and
    ``means`` (n_chains, n_scales, T) with the RoI means. Chains that share
    the same clean frame share edge masks.
    """
    rois = [roi.at_scale(s) for s in scales]
    roi.check(*clean.shape)
    n_t = len(clean)

    def one(t: int):
        clean_t = clean.frames[t]
        cache: dict = {}
        sig = np.empty(len(chains))
        mean = np.empty((len(chains), len(rois)))
        for c, chain in enumerate(chains):
            noisy = apply_chain_frame(clean_t, t, chain, cache)
            sig[c] = frame_noise_std(noisy, clean_t)
            mean[c] = [roi_mean(noisy, r) for r in rois]
        return sig, mean

    sigma = np.empty((len(chains), n_t))
    means = np.empty((len(chains), len(rois), n_t))
    for t, (sig, mean) in enumerate(ordered_map(one, range(n_t), threads)):
        sigma[:, t] = sig
        means[:, :, t] = mean
    return sigma, means


def run_sweep(grid: SweepGrid, clean: DepthVideo, roi: RoiSpec, *, f0_hz: float | None = None,
              threads: int | None = 1) -> tuple[list[SnrReport], list[SummaryRow]]:
    """Corrupt, extract and score every (value, scale, seed) cell of ``grid``.

    Rows come out in grid order: values outer, then scales, then seeds. A
    cell that fails is reported with NaN metrics and its error message.
    """
    if f0_hz is None:
        f0_hz = reference_f0(clean, roi, grid.f0_range_hz)
    rows: list[SnrReport] = []
    for value in grid.values:
        chains = [grid.chain(value, seed) for seed in grid.seeds]
        try:
            sigma, means = corrupt_and_reduce(clean, chains, roi, grid.scales, threads)
            failure = None
        except Exception as exc:  # recorded per cell, the sweep goes on
            failure = f"{type(exc).__name__}: {exc}"
        for si, scale in enumerate(grid.scales):
            for ci, seed in enumerate(grid.seeds):
                row = SnrReport(grid.model, grid.param, float(value), float(scale), int(seed),
                                math.nan, math.nan, math.nan, float(f0_hz), grid.band_hz,
                                dump_chain(chains[ci]))
                if failure is not None:
                    row.error = failure
                else:
                    row.empirical_sigma_m = float(sigma[ci].mean())
                    try:
                        res = spectral_snr(RespSignal(means[ci, si], clean.frame_rate_hz),
                                           f0_hz, grid.band_hz)
                        row.rho, row.snr_db = res.rho, res.snr_db
                    except Exception as exc:
                        row.error = f"{type(exc).__name__}: {exc}"
                rows.append(row)
    return rows, summarize(rows)


def summarize(rows: Sequence[SnrReport]) -> list[SummaryRow]:
    """Average the seeds of each (value, scale) cell; std uses ddof=0."""
    groups: dict[tuple, list[SnrReport]] = {}
    for r in rows:
        groups.setdefault((r.model, r.param_name, r.param_value, r.scale), []).append(r)
    out = []
    for (model, param, value, scale), members in groups.items():
        ok = [r for r in members if not r.error]
        if ok:
            snrs = np.array([r.snr_db for r in ok])
            out.append(SummaryRow(model, param, value, scale, len(ok),
                                  float(np.mean([r.empirical_sigma_m for r in ok])),
                                  float(np.mean([r.rho for r in ok])),
                                  float(snrs.mean()), float(snrs.std()), ok[0].f0_hz))
        else:
            out.append(SummaryRow(model, param, value, scale, 0, math.nan, math.nan,
                                  math.nan, math.nan, members[0].f0_hz))
    return out


SWEEP_COLUMNS = ("model", "param_name", "param_value", "scale", "seed",
                 "empirical_sigma_m", "rho", "snr_db", "f0_hz", "error")
SUMMARY_COLUMNS = ("model", "param_name", "param_value", "scale", "n_seeds",
                   "empirical_sigma_m", "rho", "snr_db_mean", "snr_db_std", "f0_hz")


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.9g}"
    return str(v)


def write_csv(path: str | Path, rows: Sequence, columns: Sequence[str]) -> None:
    lines = [",".join(columns)]
    for r in rows:
        d = asdict(r)
        lines.append(",".join(_fmt(d[c]) for c in columns))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def calibrate_amplitude(clean: DepthVideo, amplitude_m: float, roi: RoiSpec, *,
                        sigma_m: float = 0.067, scale: float = 0.2, target_db: float = 6.7,
                        seeds: Sequence[int] = (100, 101, 102, 103, 104),
                        band_hz: float = DEFAULT_BAND_HZ) -> float:
    """Amplitude at which Gaussian noise of std ``sigma_m`` gives ``target_db``.

    ``clean`` must have been rendered with ``amplitude_m``. The RoI signal is
    linear in the amplitude, so the clean signal is rescaled instead of
    re-rendered, and the seed-averaged SNR is solved for by bisection on a
    log-amplitude bracket.
    """
    from .noise import Gaussian

    f0 = reference_f0(clean, roi)
    r = roi.at_scale(scale)
    base = np.array([roi_mean(f, r) for f in clean.frames])
    clean_ac = base - base.mean()
    _, means = corrupt_and_reduce(clean, [[Gaussian(sigma_m=sigma_m, seed=s)] for s in seeds], roi, [scale])
    noise = means[:, 0, :] - base[None, :]

    def mean_snr(a: float) -> float:
        k = a / amplitude_m
        return float(np.mean([snr(RespSignal(k * clean_ac + n, clean.frame_rate_hz), f0, band_hz)
                              for n in noise]))

    lo, hi = math.log(amplitude_m) - 5.0, math.log(amplitude_m) + 5.0
    if not (mean_snr(math.exp(lo)) < target_db < mean_snr(math.exp(hi))):
        raise DetectionError("target SNR not bracketed by the amplitude search range")
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if mean_snr(math.exp(mid)) < target_db:
            lo = mid
        else:
            hi = mid
    return math.exp(0.5 * (lo + hi))
