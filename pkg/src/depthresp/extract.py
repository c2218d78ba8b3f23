"""Chest RoI selection, nearest-neighbour rescaling and per-frame averaging."""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from .errors import IngestionError, ParameterError
from .scene import DepthVideo, TorsoScene
from .signals import RespSignal

ROI_WIDTH_PX = 280
ROI_HEIGHT_PX = 206
STANDARD_SCALES = (1.0, 0.2, 0.05)


class RoiSpec(BaseModel):
    """Rectangular RoI in full-resolution pixels plus a rescale factor."""

    model_config = ConfigDict(extra="forbid", frozen=True, validate_default=True)

    x0: int = Field(ge=0)
    y0: int = Field(ge=0)
    width_px: int = Field(ROI_WIDTH_PX, gt=0)
    height_px: int = Field(ROI_HEIGHT_PX, gt=0)
    scale: float = Field(1.0, gt=0, le=1)

    def at_scale(self, scale: float) -> RoiSpec:
        return self.model_copy(update={"scale": scale})

    def check(self, height: int, width: int) -> None:
        """Raise ``ParameterError`` naming the edge that leaves the frame."""
        if self.x0 + self.width_px > width:
            raise ParameterError(
                f"RoI right edge {self.x0 + self.width_px} exceeds frame width {width}")
        if self.y0 + self.height_px > height:
            raise ParameterError(
                f"RoI bottom edge {self.y0 + self.height_px} exceeds frame height {height}")


def scaled_size(n: int, scale: float) -> int:
    return max(1, math.floor(n * scale + 1e-9))


def nn_indices(n: int, scale: float) -> np.ndarray:
    """Source indices ``floor((i + 0.5) / scale)`` for each output index."""
    idx = np.floor((np.arange(scaled_size(n, scale)) + 0.5) / scale).astype(np.int64)
    return np.minimum(idx, n - 1)


def rescale_nn(region: np.ndarray, scale: float) -> np.ndarray:
    """Nearest-neighbour downscale of a 2-D region (or a stack of them)."""
    if not 0 < scale <= 1:
        raise ParameterError(f"scale must lie in (0, 1], got {scale}")
    if scale == 1.0:
        return region
    h, w = region.shape[-2:]
    return region[..., nn_indices(h, scale)[:, None], nn_indices(w, scale)[None, :]]


def default_roi(scene: TorsoScene, scale: float = 1.0) -> RoiSpec:
    """280x206 RoI centered on the projection of the chest apex."""
    ax, ay = scene.apex_pixel()
    return RoiSpec(x0=round(ax - ROI_WIDTH_PX / 2), y0=round(ay - ROI_HEIGHT_PX / 2),
                   width_px=ROI_WIDTH_PX, height_px=ROI_HEIGHT_PX, scale=scale)


def roi_margin_ok(depth: np.ndarray, roi: RoiSpec, background_m: float, margin_px: int = 10) -> bool:
    """True if the RoI grown by ``margin_px`` contains no backdrop pixel."""
    h, w = depth.shape
    y0, x0 = max(roi.y0 - margin_px, 0), max(roi.x0 - margin_px, 0)
    y1 = min(roi.y0 + roi.height_px + margin_px, h)
    x1 = min(roi.x0 + roi.width_px + margin_px, w)
    return bool(np.all(depth[y0:y1, x0:x1] < background_m))


def roi_mean(depth: np.ndarray, roi: RoiSpec) -> float:
    """Mean of the rescaled RoI of one frame.

    Float32 depths are summed in float64, where every partial sum is exact
    for RoIs of any realistic size, so the result does not depend on the
    summation order.
    """
    crop = depth[roi.y0:roi.y0 + roi.height_px, roi.x0:roi.x0 + roi.width_px]
    return float(rescale_nn(crop, roi.scale).mean(dtype=np.float64))


def extract_signal(video: DepthVideo, roi: RoiSpec) -> RespSignal:
    """One sample per frame: the mean depth (m) of the rescaled RoI."""
    roi.check(*video.shape)
    crop = video.frames[:, roi.y0:roi.y0 + roi.height_px, roi.x0:roi.x0 + roi.width_px]
    small = rescale_nn(crop, roi.scale)
    values = small.reshape(small.shape[0], -1).mean(axis=1, dtype=np.float64)
    return RespSignal(values, video.frame_rate_hz, "recorded", {"roi": roi.model_dump()})


def write_signal_csv(path: str | Path, signal: RespSignal) -> None:
    """Two columns (time_s, value_m) with a header, 9 significant digits."""
    lines = ["time_s,value_m"]
    for t, v in zip(signal.times, signal.samples):
        lines.append(f"{t:.9g},{v:.9g}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_signal_csv(path: str | Path) -> RespSignal:
    """Inverse of :func:`write_signal_csv`; the rate comes from the time column."""
    path = Path(path)
    if not path.is_file():
        raise IngestionError(f"signal file not found: {path}")
    rows = path.read_text(encoding="utf-8").strip().splitlines()
    if len(rows) < 3 or rows[0].strip() != "time_s,value_m":
        raise IngestionError(f"{path}: expected header 'time_s,value_m' and at least 2 rows")
    try:
        data = np.array([[float(c) for c in r.split(",")] for r in rows[1:]])
    except ValueError as exc:
        raise IngestionError(f"{path}: {exc}") from None
    if data.ndim != 2 or data.shape[1] != 2 or not np.all(np.isfinite(data)):
        raise IngestionError(f"{path}: malformed rows")
    span = data[-1, 0] - data[0, 0]
    if not span > 0:
        raise IngestionError(f"{path}: time column must increase")
    # times carry 9 significant digits; 6 are plenty to recover the rate
    rate = float(f"{(data.shape[0] - 1) / span:.6g}")
    return RespSignal(data[:, 1], rate, "recorded", {"source": str(path)})
