"""Procedural breathing torso and its depth rendering.

Body frame: x lateral, y anterior (toward the camera), z superior.
Camera frame: X right, Y down, Z along the optical axis. The camera looks at
the torso frontally (along -y) with its optical axis through the chest apex,
the surface point at the center of the chest region.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from ._backend import get_backend
from ._parallel import ordered_map
from .errors import ParameterError
from .signals import RespSignal

log = logging.getLogger(__name__)

NEAR_PLANE_M = 1e-3
BACKDROP_OFFSET_M = 1.0
# peak-to-peak chest excursion giving SNR 6.7 dB for Gaussian noise of frame
# std 0.067 m at RoI scale 0.2 (see analysis.calibrate_amplitude and README)
CALIBRATED_AMPLITUDE_M = 0.0264


class CameraIntrinsics(BaseModel):
    """Pinhole camera. The principal point defaults to the image center."""

    model_config = ConfigDict(extra="forbid", frozen=True, validate_default=True)

    width_px: int = Field(640, ge=8)
    height_px: int = Field(480, ge=8)
    focal_px: float = Field(2000.0, gt=0)
    principal_point: tuple[float, float] | None = None

    @model_validator(mode="after")
    def _principal_inside(self):
        if self.principal_point is not None:
            cx, cy = self.principal_point
            if not (0 <= cx <= self.width_px and 0 <= cy <= self.height_px):
                raise ValueError("principal point must lie inside the image")
        return self

    @property
    def center(self) -> tuple[float, float]:
        if self.principal_point is None:
            return self.width_px / 2.0, self.height_px / 2.0
        return self.principal_point


class TorsoScene(BaseModel):
    """Elliptic-cylinder torso patch with an elliptic chest region.

    The chest region is an ellipse in surface coordinates (u, z): u is the
    angle around the cylinder axis (0 = straight at the camera) and z the
    height in meters relative to the torso mid-height.
    """

    model_config = ConfigDict(extra="forbid", frozen=True, validate_default=True)

    half_axis_x_m: float = Field(0.18, gt=0)
    half_axis_y_m: float = Field(0.12, gt=0)
    height_m: float = Field(0.6, gt=0)
    n_u: int = 128
    n_v: int = 128
    chest_center: tuple[float, float] = (0.0, 0.1)
    chest_radii: tuple[float, float] = (1.4, 0.25)
    motion_dir: tuple[float, float, float] = (0.0, 2.0 / 3.0, 1.0 / 3.0)
    amplitude_m: float = Field(CALIBRATED_AMPLITUDE_M, gt=0)
    camera_distance_m: float = Field(2.0, gt=0)
    intrinsics: CameraIntrinsics = CameraIntrinsics()

    @field_validator("motion_dir")
    @classmethod
    def _unit(cls, v):
        n = math.sqrt(sum(c * c for c in v))
        if not (n > 0 and math.isfinite(n)):
            raise ValueError("motion_dir must be a non-zero finite vector")
        return tuple(c / n for c in v)

    @field_validator("chest_radii")
    @classmethod
    def _radii(cls, v):
        if min(v) <= 0:
            raise ValueError("chest radii must be positive")
        return v

    @property
    def background_m(self) -> float:
        """Depth of the flat backdrop behind the torso."""
        return self.camera_distance_m + BACKDROP_OFFSET_M

    @property
    def apex_body(self) -> np.ndarray:
        u, z = self.chest_center
        return np.array([self.half_axis_x_m * math.sin(u), self.half_axis_y_m * math.cos(u), z])

    def to_camera(self, p: np.ndarray) -> np.ndarray:
        """Body-frame points (..., 3) to camera-frame points."""
        p = np.asarray(p, dtype=np.float64)
        a = self.apex_body
        out = np.empty_like(p)
        out[..., 0] = p[..., 0] - a[0]
        out[..., 1] = -(p[..., 2] - a[2])
        out[..., 2] = (a[1] + self.camera_distance_m) - p[..., 1]
        return out

    @property
    def motion_dir_camera(self) -> np.ndarray:
        mx, my, mz = self.motion_dir
        return np.array([mx, -mz, -my])

    def apex_pixel(self) -> tuple[float, float]:
        """Continuous image coordinates (x, y) of the chest apex."""
        return self.intrinsics.center


@dataclass(frozen=True)
class TriangleMesh:
    """Triangle mesh in camera coordinates with per-vertex displacement weights."""

    vertices: np.ndarray
    triangles: np.ndarray
    weights: np.ndarray
    region: np.ndarray = field(repr=False)
    centroid: np.ndarray | None = None
    grid_shape: tuple[int, int] | None = None

    @classmethod
    def empty(cls) -> TriangleMesh:
        return cls(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64), np.zeros(0), np.zeros(0, bool))


@dataclass(frozen=True)
class DepthFrame:
    """One depth image in meters along the optical axis (float32, row-major)."""

    depth_m: np.ndarray
    background_m: float

    @property
    def height_px(self) -> int:
        return self.depth_m.shape[0]

    @property
    def width_px(self) -> int:
        return self.depth_m.shape[1]


@dataclass
class DepthVideo:
    """Frames stacked as a (T, H, W) float32 array."""

    frames: np.ndarray
    frame_rate_hz: float = 30.0
    background_m: float = 3.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        f = np.asarray(self.frames)
        if f.ndim != 3 or f.shape[0] == 0:
            raise ParameterError("a video needs a (T, H, W) frame stack with T > 0")
        if f.dtype != np.float32:
            f = f.astype(np.float32)
        self.frames = np.ascontiguousarray(f)
        if not self.frame_rate_hz > 0:
            raise ParameterError("frame_rate_hz must be positive")

    def __len__(self) -> int:
        return self.frames.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.frames.shape[1], self.frames.shape[2]

    def frame(self, t: int) -> DepthFrame:
        return DepthFrame(self.frames[t], self.background_m)


def displacement_weight(d, d_max: float):
    """``(1 - d / d_max)**2``; distances beyond ``d_max`` get weight 0.

    Works on scalars and arrays. Out-of-range distances are reported through
    the module logger.
    """
    if not d_max > 0:
        raise ParameterError("d_max must be positive")
    d = np.asarray(d, dtype=np.float64)
    if np.any(d < 0):
        raise ParameterError("distances must be non-negative")
    outside = d > d_max
    if np.any(outside):
        log.warning("%d vertex distance(s) exceed d_max=%g; weight clamped to 0",
                    int(np.count_nonzero(outside)), d_max)
    w = np.where(outside, 0.0, (1.0 - d / d_max) ** 2)
    return float(w) if w.ndim == 0 else w


def build_torso(scene: TorsoScene) -> TriangleMesh:
    """Tessellate the front half of the torso and weight the chest vertices."""
    if scene.n_u < 2 or scene.n_v < 2:
        raise ParameterError(f"tessellation needs n_u, n_v >= 2, got {scene.n_u}x{scene.n_v}")
    u = np.linspace(-math.pi / 2, math.pi / 2, scene.n_u)
    z = np.linspace(-scene.height_m / 2, scene.height_m / 2, scene.n_v)
    uu, zz = np.meshgrid(u, z)  # (n_v, n_u), vertex id = j * n_u + i
    body = np.stack([scene.half_axis_x_m * np.sin(uu), scene.half_axis_y_m * np.cos(uu), zz], axis=-1)
    body = body.reshape(-1, 3)

    uc, zc = scene.chest_center
    ru, rz = scene.chest_radii
    region = (((uu - uc) / ru) ** 2 + ((zz - zc) / rz) ** 2 <= 1.0).ravel()
    if not region.any():
        raise ParameterError("chest region selects no vertices at this tessellation")

    centroid = body[region].mean(axis=0)
    d = np.linalg.norm(body - centroid, axis=1)
    d_max = float(d[region].max())
    weights = np.zeros(body.shape[0])
    if d_max == 0.0:
        weights[region] = 1.0
    else:
        weights[region] = displacement_weight(d[region], d_max)

    i = np.arange(scene.n_u - 1)
    j = np.arange(scene.n_v - 1)
    ii, jj = np.meshgrid(i, j)
    v00 = (jj * scene.n_u + ii).ravel()
    v01 = v00 + 1
    v10 = v00 + scene.n_u
    v11 = v10 + 1
    tris = np.concatenate([np.stack([v00, v01, v11], 1), np.stack([v00, v11, v10], 1)]).astype(np.int64)
    return TriangleMesh(scene.to_camera(body), tris, weights, region,
                        scene.to_camera(centroid), (scene.n_v, scene.n_u))


def render_frame(mesh: TriangleMesh | np.ndarray, intrinsics: CameraIntrinsics,
                 background_m: float, triangles: np.ndarray | None = None,
                 backend: str | None = None) -> DepthFrame:
    """Perspective z-buffer rasterization of ``mesh``; nearest surface wins.

    Pixels no triangle covers keep ``background_m``. Triangles with a vertex
    behind the near plane are dropped.
    """
    if isinstance(mesh, TriangleMesh):
        verts, tris = mesh.vertices, mesh.triangles
    else:
        verts, tris = np.asarray(mesh, dtype=np.float64), triangles
    tris = np.asarray(tris, dtype=np.int64).reshape(-1, 3)
    kern = get_backend(backend)
    h, w = intrinsics.height_px, intrinsics.width_px
    if tris.shape[0] == 0:
        return DepthFrame(np.full((h, w), background_m, dtype=np.float32), background_m)
    X, Y, Z = verts[:, 0], verts[:, 1], verts[:, 2]
    front = Z > NEAR_PLANE_M
    if not front.all():
        tris = tris[front[tris].all(axis=1)]
        Z = np.where(front, Z, 1.0)
    cx, cy = intrinsics.center
    f = intrinsics.focal_px
    xs = np.ascontiguousarray(f * X / Z + cx)
    ys = np.ascontiguousarray(f * Y / Z + cy)
    qs = np.ascontiguousarray(1.0 / Z)
    zbuf = kern.rasterize(xs, ys, qs, np.ascontiguousarray(tris), h, w, float(background_m))
    return DepthFrame(zbuf.astype(np.float32), background_m)


def displaced_vertices(mesh: TriangleMesh, scene: TorsoScene, value: float) -> np.ndarray:
    """Vertex positions for one driving-signal value."""
    step = (value * scene.amplitude_m) * mesh.weights
    return mesh.vertices + step[:, None] * scene.motion_dir_camera[None, :]


def animate(scene: TorsoScene, signal: RespSignal, frame_rate_hz: float = 30.0, *,
            threads: int | None = 1, backend: str | None = None) -> DepthVideo:
    """Render one depth frame per signal sample.

    Vertex v of frame t sits at ``rest(v) + signal[t] * amplitude_m * w(v) *
    motion_dir``. The signal must already be sampled at ``frame_rate_hz``.
    """
    if signal.sample_rate_hz != frame_rate_hz:
        raise ParameterError(
            f"signal is sampled at {signal.sample_rate_hz} Hz; resample to {frame_rate_hz} Hz first"
        )
    if len(signal) < 2:
        raise ParameterError("driving signal must span at least 2 frames")
    mesh = build_torso(scene)
    if np.count_nonzero(mesh.region) < 3:
        raise ParameterError("chest region must select at least 3 vertices")
    intr = scene.intrinsics
    frames = np.empty((len(signal), intr.height_px, intr.width_px), dtype=np.float32)

    def one(t: int) -> None:
        verts = displaced_vertices(mesh, scene, float(signal.samples[t]))
        frames[t] = render_frame(verts, intr, scene.background_m, mesh.triangles, backend).depth_m

    for _ in ordered_map(one, range(len(signal)), threads):
        pass
    return DepthVideo(frames, frame_rate_hz, scene.background_m,
                      {"scene": scene.model_dump(mode="json")})
