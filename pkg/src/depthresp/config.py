"""Experiment configuration: strict JSON schema with unknown-key rejection."""

from __future__ import annotations

import json
from pathlib import Path

from pydantic import BaseModel, ConfigDict, Field, ValidationInfo, field_validator, model_validator

from .analysis import DEFAULT_BAND_HZ, DEFAULT_F0_RANGE_HZ, SweepGrid
from .errors import ParameterError
from .extract import RoiSpec, default_roi
from .noise import NoiseSpec
from .scene import TorsoScene
from .signals import RespSignal, SynthesisParams, condition, load_waveform, synthesize


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True, validate_default=True)


class FileSignal(_Strict):
    path: Path
    rate_hz: float = Field(gt=0)

    @field_validator("path")
    @classmethod
    def _exists(cls, v: Path, info: ValidationInfo):
        base = (info.context or {}).get("base_dir")
        if base is not None and not v.is_absolute():
            v = Path(base) / v
        if not v.is_file():
            raise ValueError(f"signal file does not exist: {v}")
        return v


class SignalSource(_Strict):
    """Exactly one of ``synthetic`` or ``file``."""

    synthetic: SynthesisParams | None = None
    file: FileSignal | None = None

    @model_validator(mode="after")
    def _one(self):
        if (self.synthetic is None) == (self.file is None):
            raise ValueError("set exactly one of 'synthetic' or 'file'")
        return self


class AnalysisParams(_Strict):
    band_hz: float = Field(DEFAULT_BAND_HZ, gt=0)
    f0_range_hz: tuple[float, float] = DEFAULT_F0_RANGE_HZ


class ExperimentConfig(_Strict):
    scene: TorsoScene = TorsoScene()
    signal: SignalSource = SignalSource(synthetic=SynthesisParams())
    # None: filter recorded signals only
    filter_signal: bool | None = None
    frame_rate_hz: float = Field(30.0, gt=0)
    noise: list[NoiseSpec] = Field(default_factory=list)
    roi: RoiSpec | None = None
    analysis: AnalysisParams = AnalysisParams()
    output_dir: Path | None = None
    seed: int = Field(0, ge=0)

    def driving_signal(self, seed: int | None = None) -> RespSignal:
        """The normalized driver at the frame rate."""
        if self.signal.synthetic is not None:
            params = self.signal.synthetic
            if seed is not None:
                params = params.model_copy(update={"seed": seed})
            raw = synthesize(params)
        else:
            raw = load_waveform(self.signal.file.path, self.signal.file.rate_hz)
        return condition(raw, self.frame_rate_hz, filtered=self.filter_signal)

    def resolved_roi(self, scale: float | None = None) -> RoiSpec:
        roi = self.roi if self.roi is not None else default_roi(self.scene)
        return roi if scale is None else roi.at_scale(scale)


def _load_json(path: str | Path):
    path = Path(path)
    if not path.is_file():
        raise ParameterError(f"file not found: {path}")
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParameterError(f"{path}: invalid JSON ({exc})") from None


def load_config(path: str | Path | None) -> ExperimentConfig:
    """Parse a config file; ``None`` gives the defaults. Relative paths resolve against the file."""
    if path is None:
        return ExperimentConfig()
    data = _load_json(path)
    return ExperimentConfig.model_validate(data, context={"base_dir": Path(path).parent})


def load_grid(path: str | Path) -> SweepGrid:
    return SweepGrid.model_validate(_load_json(path))


def load_chain_file(path: str | Path):
    from .noise import parse_chain

    data = _load_json(path)
    if not isinstance(data, list):
        data = [data]
    return parse_chain(data)
