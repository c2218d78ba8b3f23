"""Depth-sensor noise models.

Six models, each a pure function of (frame, parameters, random stream):

========  ==================  ===========================================
tag       model               effect
========  ==================  ===========================================
a         Gaussian            i.i.d. N(0, sigma^2) on every pixel
b         Axial               eta * ((Z - d_offset) * d_level)^2
c         Radial              Gaussian weighted by distance from center
d         Motion              integer translation of the whole frame
e         EdgePermutation     resample from a disk of radius r_p near edges
f         EdgeGaussian        Gaussian weighted by the edge AoE mask
========  ==================  ===========================================

Chains are applied per frame. The stream for spec ``i`` on frame ``t`` is
``rng.frame_stream(spec.seed, i, t)``, so a frame's noise does not depend on
any other frame.
"""

from __future__ import annotations

import hashlib
import json
import math
from typing import Annotated, Iterator, Literal, Sequence, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, TypeAdapter
from scipy import ndimage

from ._backend import get_backend
from ._parallel import ordered_map
from .errors import ParameterError
from .rng import frame_stream
from .scene import DepthFrame, DepthVideo


class _Spec(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True, validate_default=True)

    seed: int = Field(0, ge=0)


class Gaussian(_Spec):
    type: Literal["Gaussian"] = "Gaussian"
    sigma_m: float = Field(gt=0)


class Axial(_Spec):
    type: Literal["Axial"] = "Axial"
    d_offset_m: float = 0.0
    d_level: float = Field(gt=0)


class Radial(_Spec):
    type: Literal["Radial"] = "Radial"
    sigma_m: float = Field(gt=0)


class Motion(_Spec):
    type: Literal["Motion"] = "Motion"
    max_shift_px: float = Field(gt=0)


class EdgePermutation(_Spec):
    type: Literal["EdgePermutation"] = "EdgePermutation"
    sigma_g_px: float = Field(gt=0)
    r_p_px: int = Field(ge=1)
    aoe_threshold: float = Field(0.05, gt=0, lt=1)


class EdgeGaussian(_Spec):
    type: Literal["EdgeGaussian"] = "EdgeGaussian"
    sigma_g_px: float = Field(gt=0)
    sigma_m: float = Field(gt=0)
    aoe_threshold: float = Field(0.05, gt=0, lt=1)


NoiseSpec = Annotated[
    Union[Gaussian, Axial, Radial, Motion, EdgePermutation, EdgeGaussian],
    Field(discriminator="type"),
]
SPEC_TYPES = {cls.__name__: cls for cls in (Gaussian, Axial, Radial, Motion, EdgePermutation, EdgeGaussian)}
_chain_adapter = TypeAdapter(list[NoiseSpec])
_spec_adapter = TypeAdapter(NoiseSpec)


def parse_spec(obj) -> BaseModel:
    return _spec_adapter.validate_python(obj)


def parse_chain(obj) -> list[BaseModel]:
    """Validate a JSON array (or JSON text) of noise specs."""
    if isinstance(obj, (str, bytes)):
        return _chain_adapter.validate_json(obj)
    return _chain_adapter.validate_python(obj)


def dump_chain(specs: Sequence[BaseModel]) -> list[dict]:
    return [s.model_dump(mode="json") for s in specs]


def chain_json(specs: Sequence[BaseModel]) -> str:
    return json.dumps(dump_chain(specs), sort_keys=True, separators=(",", ":"))


def _depth(frame) -> np.ndarray:
    return frame.depth_m if isinstance(frame, DepthFrame) else np.asarray(frame)


def _like(frame, depth: np.ndarray):
    if isinstance(frame, DepthFrame):
        return DepthFrame(depth, frame.background_m)
    return depth


def _add(frame, noise: np.ndarray):
    z = _depth(frame)
    return _like(frame, (z.astype(np.float64) + noise).astype(np.float32))


def apply_gaussian(frame, sigma_m: float, rng: np.random.Generator):
    z = _depth(frame)
    return _add(frame, sigma_m * rng.standard_normal(z.shape))


def apply_axial(frame, d_offset_m: float, d_level: float, rng: np.random.Generator):
    z = _depth(frame).astype(np.float64)
    scale = ((z - d_offset_m) * d_level) ** 2
    return _add(frame, rng.standard_normal(z.shape) * scale)


def radial_mask(height: int, width: int) -> np.ndarray:
    """Linear fade from 0 at the image center to 1 at the corners.

    Distances are measured between pixel centers, so the corner pixels get
    exactly 1 and, for odd sizes, the center pixel exactly 0.
    """
    cy, cx = (height - 1) / 2.0, (width - 1) / 2.0
    yy, xx = np.ogrid[:height, :width]
    return np.hypot(yy - cy, xx - cx) / math.hypot(cy, cx)


def apply_radial(frame, sigma_m: float, rng: np.random.Generator):
    z = _depth(frame)
    return _add(frame, radial_mask(*z.shape) * (sigma_m * rng.standard_normal(z.shape)))


def shift_frame(depth: np.ndarray, dx: int, dy: int) -> np.ndarray:
    """Translate so that ``out[y, x] = in[y - dy, x - dx]``; edges replicate."""
    h, w = depth.shape
    rows = np.clip(np.arange(h) - dy, 0, h - 1)
    cols = np.clip(np.arange(w) - dx, 0, w - 1)
    return depth[rows[:, None], cols[None, :]]


def motion_offset(max_shift_px: float, rng: np.random.Generator) -> tuple[int, int]:
    """(dx, dy), each uniform on {-k, ..., k} with k = round(max_shift_px)."""
    k = int(round(max_shift_px))
    if k == 0:
        return 0, 0
    dx, dy = rng.integers(-k, k + 1, size=2)
    return int(dx), int(dy)


def apply_motion_frame(frame, max_shift_px: float, rng: np.random.Generator):
    z = _depth(frame)
    k = int(round(max_shift_px))
    if k >= min(z.shape):
        raise ParameterError(f"max shift {k} px is not smaller than the frame size {z.shape}")
    dx, dy = motion_offset(max_shift_px, rng)
    if dx == 0 and dy == 0:
        return _like(frame, z.copy())
    return _like(frame, shift_frame(z, dx, dy))


def apply_motion(video: DepthVideo, max_shift_px: float, seed: int = 0,
                 threads: int | None = 1) -> DepthVideo:
    """Translate every frame by its own random integer offset."""
    return apply_chain(video, [Motion(max_shift_px=max_shift_px, seed=seed)], threads=threads)


def edge_aoe(frame, sigma_g_px: float, aoe_threshold: float = 0.05) -> np.ndarray:
    """Area-of-effect mask around depth edges, values in [0, 1].

    Sobel gradient magnitude, scaled to a maximum of 1, smoothed with a
    Gaussian of std ``sigma_g_px`` (kernel radius 3 sigma, reflected
    borders), rescaled to a maximum of 1, and zeroed below ``aoe_threshold``.
    """
    if not sigma_g_px > 0:
        raise ParameterError("sigma_g_px must be positive")
    z = _depth(frame).astype(np.float64)
    mag = np.hypot(ndimage.sobel(z, axis=1, mode="reflect"), ndimage.sobel(z, axis=0, mode="reflect"))
    peak = mag.max()
    if not peak > 0:
        return np.zeros_like(z)
    mag /= peak
    smooth = ndimage.gaussian_filter(mag, sigma_g_px, mode="reflect", truncate=3.0)
    peak = smooth.max()
    if not peak > 0:
        return np.zeros_like(z)
    smooth /= peak
    smooth[smooth < aoe_threshold] = 0.0
    np.clip(smooth, 0.0, 1.0, out=smooth)
    return smooth


def apply_edge_gaussian(frame, spec: EdgeGaussian, rng: np.random.Generator, mask: np.ndarray | None = None):
    z = _depth(frame)
    if mask is None:
        mask = edge_aoe(z, spec.sigma_g_px, spec.aoe_threshold)
    return _add(frame, mask * (spec.sigma_m * rng.standard_normal(z.shape)))


def disk_offsets(radius: int) -> tuple[np.ndarray, np.ndarray]:
    """Integer (dy, dx) offsets with dy^2 + dx^2 <= radius^2, row-major order."""
    r = int(radius)
    dy, dx = np.mgrid[-r:r + 1, -r:r + 1]
    inside = dy * dy + dx * dx <= r * r
    return np.ascontiguousarray(dy[inside], dtype=np.int64), np.ascontiguousarray(dx[inside], dtype=np.int64)


def apply_edge_permutation(frame, spec: EdgePermutation, rng: np.random.Generator,
                           mask: np.ndarray | None = None, wrap: bool = False, backend: str | None = None):
    """Resample AoE pixels from their r_p neighbourhood.

    Pixel p is replaced with probability ``mask[p]`` by the input value at a
    point drawn uniformly from the disk of radius ``r_p_px`` around p.
    Off-image draws are clipped to the border, or wrapped when ``wrap`` is
    set (toroidal variant, used to test value conservation).
    """
    z = _depth(frame)
    if mask is None:
        mask = edge_aoe(z, spec.sigma_g_px, spec.aoe_threshold)
    off_y, off_x = disk_offsets(spec.r_p_px)
    gate = rng.random(z.shape)
    pick = rng.integers(0, off_y.size, size=z.shape, dtype=np.int64)
    out = get_backend(backend).permute(
        np.ascontiguousarray(z, dtype=np.float32), np.ascontiguousarray(mask, dtype=np.float64),
        gate, pick, off_y, off_x, bool(wrap),
    )
    return _like(frame, out)


def _frame_digest(z: np.ndarray) -> bytes:
    return hashlib.blake2b(np.ascontiguousarray(z).view(np.uint8), digest_size=16).digest()


def apply_spec(frame, spec, rng: np.random.Generator, aoe_cache: dict | None = None):
    """Apply one spec to one frame.

    ``aoe_cache`` lets callers that corrupt the same clean frame with several
    seeds reuse edge masks; it is keyed on the frame content.
    """
    if isinstance(spec, Gaussian):
        return apply_gaussian(frame, spec.sigma_m, rng)
    if isinstance(spec, Axial):
        return apply_axial(frame, spec.d_offset_m, spec.d_level, rng)
    if isinstance(spec, Radial):
        return apply_radial(frame, spec.sigma_m, rng)
    if isinstance(spec, Motion):
        return apply_motion_frame(frame, spec.max_shift_px, rng)
    if isinstance(spec, (EdgeGaussian, EdgePermutation)):
        mask = None
        if aoe_cache is not None:
            key = (_frame_digest(_depth(frame)), spec.sigma_g_px, spec.aoe_threshold)
            mask = aoe_cache.get(key)
            if mask is None:
                mask = aoe_cache[key] = edge_aoe(frame, spec.sigma_g_px, spec.aoe_threshold)
        if isinstance(spec, EdgeGaussian):
            return apply_edge_gaussian(frame, spec, rng, mask)
        return apply_edge_permutation(frame, spec, rng, mask)
    raise ParameterError(f"unknown noise spec {spec!r}")


def apply_chain_frame(frame, t: int, specs: Sequence, aoe_cache: dict | None = None):
    """Corrupt frame ``t`` with every spec in order."""
    for i, spec in enumerate(specs):
        frame = apply_spec(frame, spec, frame_stream(spec.seed, i, t), aoe_cache)
    return frame


def _check_chain(specs):
    specs = list(specs)
    if not specs:
        raise ParameterError("noise chain must contain at least one spec")
    return [parse_spec(s) if isinstance(s, dict) else s for s in specs]


def iter_chain(video: DepthVideo, specs: Sequence, threads: int | None = 1) -> Iterator[np.ndarray]:
    """Yield corrupted frames in order without materialising the video."""
    specs = _check_chain(specs)
    return ordered_map(lambda t: apply_chain_frame(video.frames[t], t, specs), range(len(video)), threads)


def apply_chain(video: DepthVideo, specs: Sequence, threads: int | None = 1) -> DepthVideo:
    specs = _check_chain(specs)
    out = np.empty_like(video.frames)
    for t, frame in enumerate(iter_chain(video, specs, threads)):
        out[t] = frame
    meta = dict(video.meta)
    meta["noise_chain"] = dump_chain(specs)
    return DepthVideo(out, video.frame_rate_hz, video.background_m, meta)
