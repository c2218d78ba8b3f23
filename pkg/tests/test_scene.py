import math

import numpy as np
import pytest
from pydantic import ValidationError

from depthresp.errors import ParameterError
from depthresp.scene import (CameraIntrinsics, DepthVideo, TorsoScene, animate, build_torso,
                             displaced_vertices, displacement_weight, render_frame)
from depthresp.signals import RespSignal


def quad(z, half=10.0, x0=0.0, y0=0.0):
    """Camera-frame quad (two triangles) at constant depth z."""
    v = np.array([[x0 - half, y0 - half, z], [x0 + half, y0 - half, z],
                  [x0 + half, y0 + half, z], [x0 - half, y0 + half, z]])
    t = np.array([[0, 1, 2], [0, 2, 3]])
    return v, t


SMALL = CameraIntrinsics(width_px=64, height_px=48, focal_px=50.0)


class TestWeights:
    @pytest.mark.parametrize("d,expected", [(0.0, 1.0), (2.0, 0.0), (1.0, 0.25)])
    def test_formula(self, d, expected):
        assert displacement_weight(d, 2.0) == expected

    def test_outside_clamped_and_logged(self, caplog):
        with caplog.at_level("WARNING"):
            assert displacement_weight(3.0, 2.0) == 0.0
        assert "exceed" in caplog.text

    def test_bad_inputs(self):
        with pytest.raises(ParameterError):
            displacement_weight(1.0, 0.0)
        with pytest.raises(ParameterError):
            displacement_weight(-1.0, 1.0)


class TestSceneModel:
    def test_motion_dir_is_unit(self):
        for s in (TorsoScene(), TorsoScene(motion_dir=(1.0, 2.0, 2.0))):
            assert abs(np.linalg.norm(s.motion_dir) - 1.0) < 1e-12
        np.testing.assert_allclose(TorsoScene().motion_dir, np.array([0, 2, 1]) / math.sqrt(5))

    @pytest.mark.parametrize("bad", [{"amplitude_m": 0}, {"motion_dir": (0, 0, 0)},
                                     {"chest_radii": (0.0, 1.0)}, {"unknown": 1}])
    def test_invalid(self, bad):
        with pytest.raises(ValidationError):
            TorsoScene(**bad)

    def test_intrinsics_bounds(self):
        with pytest.raises(ValidationError):
            CameraIntrinsics(width_px=4)
        with pytest.raises(ValidationError):
            CameraIntrinsics(principal_point=(700.0, 10.0))
        assert CameraIntrinsics().center == (320.0, 240.0)


class TestBuildTorso:
    def test_degenerate_tessellation(self):
        with pytest.raises(ParameterError):
            build_torso(TorsoScene(n_u=1))

    def test_single_vertex_region(self):
        u = np.linspace(-math.pi / 2, math.pi / 2, 9)[4]
        z = np.linspace(-0.3, 0.3, 7)[5]
        mesh = build_torso(TorsoScene(n_u=9, n_v=7, chest_center=(u, z), chest_radii=(1e-3, 1e-3)))
        assert np.count_nonzero(mesh.region) == 1
        assert mesh.weights[5 * 9 + 4] == 1.0
        assert np.count_nonzero(mesh.weights) == 1

    def test_weights_radially_monotone(self):
        scene = TorsoScene()
        mesh = build_torso(scene)
        assert np.all((mesh.weights >= 0) & (mesh.weights <= 1))
        assert np.all(mesh.weights[~mesh.region] == 0)
        d = np.linalg.norm(mesh.vertices - mesh.centroid, axis=1)
        inside = np.flatnonzero(mesh.region)
        order = inside[np.argsort(d[inside], kind="stable")]
        # distances here are recomputed in camera coordinates: allow rounding
        assert np.all(np.diff(mesh.weights[order]) <= 1e-12)
        # walking outward along surface grid lines never increases the weight
        w = mesh.weights.reshape(mesh.grid_shape)
        z_rows = np.linspace(-scene.height_m / 2, scene.height_m / 2, scene.n_v)
        j0 = int(np.argmin(np.abs(z_rows - mesh.centroid[1] * -1 - scene.apex_body[2])))
        i0 = scene.n_u // 2
        assert np.all(np.diff(w[:, i0:], axis=1) <= 0)
        assert np.all(np.diff(w[:, :i0][:, ::-1], axis=1) <= 0)
        assert np.all(np.diff(w[j0:, :], axis=0) <= 0)
        assert np.all(np.diff(w[:j0 + 1, :][::-1], axis=0) <= 0)

    def test_triangle_count(self):
        mesh = build_torso(TorsoScene(n_u=5, n_v=4))
        assert mesh.triangles.shape == (2 * 4 * 3, 3)
        assert mesh.vertices.shape == (20, 3)


class TestRender:
    def test_flat_quad_fills_view(self):
        v, t = quad(2.0)
        f = render_frame(v, SMALL, 5.0, t)
        assert f.depth_m.dtype == np.float32
        assert np.all(np.abs(f.depth_m - 2.0) <= 1e-6)

    def test_nearest_surface_wins(self):
        v1, t1 = quad(1.0, half=0.2)
        v2, t2 = quad(2.0, half=10.0)
        v = np.vstack([v2, v1])
        t = np.vstack([t2, t1 + 4])
        z = render_frame(v, SMALL, 5.0, t).depth_m
        assert z[24, 32] == pytest.approx(1.0, abs=1e-6)
        assert z[0, 0] == pytest.approx(2.0, abs=1e-6)
        # order of submission does not matter
        z2 = render_frame(np.vstack([v1, v2]), SMALL, 5.0, np.vstack([t1, t2 + 4])).depth_m
        assert np.array_equal(z, z2)

    def test_empty_mesh(self):
        f = render_frame(np.zeros((0, 3)), SMALL, 3.0, np.zeros((0, 3), dtype=np.int64))
        assert np.all(f.depth_m == 3.0)

    def test_behind_camera_dropped(self):
        v, t = quad(-1.0)
        assert np.all(render_frame(v, SMALL, 3.0, t).depth_m == 3.0)

    def test_default_scene_foreground(self, clean_video, scene):
        z = clean_video.frames[0]
        fg = z[z < scene.background_m]
        assert fg.size > 0
        assert np.all((fg > 0) & (fg < 100))
        assert np.all(z <= scene.background_m)


class TestAnimate:
    def test_default_900_frames(self, clean_video):
        assert clean_video.frames.shape == (900, 480, 640)
        assert clean_video.frame_rate_hz == 30.0

    def test_constant_signal_static(self):
        s = TorsoScene(n_u=32, n_v=32, intrinsics=CameraIntrinsics(width_px=80, height_px=60, focal_px=250))
        v = animate(s, RespSignal(np.zeros(5), 30.0), 30.0)
        assert all(np.array_equal(v.frames[0], f) for f in v.frames[1:])

    def test_preconditions(self):
        with pytest.raises(ParameterError):
            animate(TorsoScene(), RespSignal(np.zeros(5), 100.0), 30.0)
        with pytest.raises(ParameterError):
            animate(TorsoScene(), RespSignal(np.zeros(1), 30.0), 30.0)

    def _apex_scene(self, **kw):
        # odd tessellation puts a vertex exactly on the chest apex; the shifted
        # principal point makes pixel (240, 320)'s center ray pass through it
        return TorsoScene(n_u=129, n_v=121, intrinsics=CameraIntrinsics(principal_point=(320.5, 240.5)), **kw)

    def _apex_oracle(self, scene):
        mesh = build_torso(scene)
        apex = scene.to_camera(scene.apex_body)
        pts = mesh.vertices[mesh.region]
        centroid = pts.mean(axis=0)
        d_max = np.linalg.norm(pts - centroid, axis=1).max()
        w = (1 - np.linalg.norm(apex - centroid) / d_max) ** 2
        along_axis = -scene.motion_dir_camera[2]
        return scene.amplitude_m * along_axis * w, mesh

    @pytest.mark.parametrize("kw", [{"motion_dir": (0.0, 1.0, 0.0)},
                                    {"amplitude_m": 1e-3}])
    def test_apex_displacement(self, kw):
        scene = self._apex_scene(**kw)
        expected, mesh = self._apex_oracle(scene)
        z0 = render_frame(displaced_vertices(mesh, scene, 0.0), scene.intrinsics, scene.background_m, mesh.triangles)
        z1 = render_frame(displaced_vertices(mesh, scene, 1.0), scene.intrinsics, scene.background_m, mesh.triangles)
        assert float(z0.depth_m[240, 320]) - float(z1.depth_m[240, 320]) == pytest.approx(expected, abs=1e-4)

    @staticmethod
    def _affine_residual(video, x, roi):
        a = np.vstack([x, np.ones_like(x)]).T
        crop = video.frames[:, roi.y0:roi.y0 + roi.height_px:10, roi.x0:roi.x0 + roi.width_px:10]
        y = crop.reshape(len(x), -1).astype(np.float64)
        coef, *_ = np.linalg.lstsq(a, y, rcond=None)
        return np.abs(y - a @ coef).max(), np.abs(coef[0]).max()

    def test_chest_depth_affine_in_signal(self, driver, roi):
        # the surface slides tangentially under each pixel ray, so affinity
        # holds to first order in the amplitude; at 1 mm it is below 1e-6 m
        scene = TorsoScene(amplitude_m=1e-3)
        x = driver.samples[::15]
        video = animate(scene, RespSignal(x, 30.0), 30.0)
        resid, _ = self._affine_residual(video, x, roi)
        assert resid < 1e-6

    def test_chest_depth_nearly_affine_at_default_amplitude(self, clean_video, driver, roi):
        resid, slope = self._affine_residual(clean_video, driver.samples, roi)
        assert resid < 0.01 * slope

    def test_region_constant_over_time(self):
        scene = TorsoScene(n_u=16, n_v=16)
        mesh = build_torso(scene)
        for value in (0.0, 0.3, 1.0):
            v = displaced_vertices(mesh, scene, value)
            assert np.array_equal(v[~mesh.region], mesh.vertices[~mesh.region])

    def test_threads_bit_identical(self, driver):
        scene = TorsoScene(n_u=48, n_v=48, intrinsics=CameraIntrinsics(width_px=160, height_px=120, focal_px=500))
        short = RespSignal(driver.samples[:24], 30.0)
        a = animate(scene, short, 30.0, threads=1)
        b = animate(scene, short, 30.0, threads=4)
        c = animate(scene, short, 30.0, threads=1)
        assert np.array_equal(a.frames, b.frames)
        assert np.array_equal(a.frames, c.frames)


class TestDepthVideo:
    def test_invariants(self):
        with pytest.raises(ParameterError):
            DepthVideo(np.zeros((0, 4, 4)))
        with pytest.raises(ParameterError):
            DepthVideo(np.zeros((2, 4, 4)), frame_rate_hz=0)
        v = DepthVideo(np.zeros((2, 4, 5), dtype=np.float64))
        assert v.frames.dtype == np.float32 and v.shape == (4, 5) and len(v) == 2
