import json
import math

import numpy as np
import pytest
from pydantic import ValidationError

from conftest import flat_video, step_frame
from depthresp.analysis import measure_noise_std
from depthresp.errors import ParameterError
from depthresp.noise import (Axial, EdgeGaussian, EdgePermutation, Gaussian, Motion, Radial,
                             apply_axial, apply_chain, apply_edge_gaussian, apply_edge_permutation,
                             apply_gaussian, apply_motion, apply_motion_frame, apply_radial,
                             chain_json, disk_offsets, dump_chain, edge_aoe, motion_offset,
                             parse_chain, parse_spec, radial_mask, shift_frame)
from depthresp.rng import frame_stream, stream
from depthresp.scene import CameraIntrinsics, DepthFrame, DepthVideo, TorsoScene, animate
from depthresp.signals import RespSignal


def flat(z=2.0, h=480, w=640):
    return np.full((h, w), z, dtype=np.float32)


def diff(out, inp):
    return np.asarray(out, dtype=np.float64) - np.asarray(inp, dtype=np.float64)


@pytest.fixture(scope="module")
def small_torso():
    scene = TorsoScene(n_u=48, n_v=48, intrinsics=CameraIntrinsics(width_px=160, height_px=120, focal_px=500))
    x = 0.5 - 0.5 * np.cos(2 * np.pi * 0.25 * np.arange(6) / 30.0)
    return animate(scene, RespSignal(x, 30.0), 30.0)


class TestSpecs:
    def test_roundtrip_json(self):
        chain = [Gaussian(sigma_m=0.1, seed=3), Axial(d_level=0.2), Radial(sigma_m=0.05),
                 Motion(max_shift_px=2), EdgePermutation(sigma_g_px=3, r_p_px=2),
                 EdgeGaussian(sigma_g_px=4, sigma_m=0.3, aoe_threshold=0.1)]
        text = chain_json(chain)
        assert parse_chain(text) == chain
        assert parse_chain(json.loads(text)) == chain
        assert [d["type"] for d in dump_chain(chain)] == [
            "Gaussian", "Axial", "Radial", "Motion", "EdgePermutation", "EdgeGaussian"]

    @pytest.mark.parametrize("bad", [
        {"type": "Nope"}, {"type": "Gaussian", "sigma_m": 0}, {"type": "Gaussian", "sigma_m": 1, "x": 1},
        {"type": "Axial", "d_level": -1}, {"type": "Motion", "max_shift_px": 0},
        {"type": "EdgePermutation", "sigma_g_px": 1, "r_p_px": 0},
        {"type": "EdgeGaussian", "sigma_g_px": 1, "sigma_m": 1, "aoe_threshold": 1.0},
        {"type": "Gaussian", "sigma_m": 1, "seed": -1}])
    def test_invalid(self, bad):
        with pytest.raises(ValidationError):
            parse_spec(bad)

    def test_empty_chain(self):
        with pytest.raises(ParameterError):
            apply_chain(flat_video(), [])


class TestGaussian:
    def test_zero_limit(self):
        z = flat()
        assert np.array_equal(apply_gaussian(z, 1e-12, stream(0)), z)

    def test_std(self):
        out = apply_gaussian(flat(), 0.05, stream(1))
        assert diff(out, flat()).std() == pytest.approx(0.05, abs=0.001)

    def test_seeded(self):
        a = apply_gaussian(flat(), 0.05, stream(2))
        b = apply_gaussian(flat(), 0.05, stream(2))
        assert np.array_equal(a, b)

    def test_depth_frame_in_out(self):
        out = apply_gaussian(DepthFrame(flat(), 3.0), 0.01, stream(0))
        assert isinstance(out, DepthFrame) and out.background_m == 3.0


class TestAxial:
    def test_zero_factor(self):
        z = flat(1.5)
        assert np.array_equal(apply_axial(z, 1.5, 0.3, stream(0)), z)

    @pytest.mark.parametrize("z,d_off,level", [(2.0, 0.0, 0.1), (3.0, 0.5, 0.2), (1.0, 2.0, 0.15)])
    def test_closed_form_std(self, z, d_off, level):
        out = apply_axial(flat(z), d_off, level, stream(3))
        expected = ((z - d_off) * level) ** 2
        assert diff(out, flat(z)).std() == pytest.approx(expected, rel=0.02)

    def test_distance_power_law(self):
        # std grows as Z^2, so the variance grows as Z^4
        s1 = diff(apply_axial(flat(1.0), 0.0, 0.2, stream(4)), flat(1.0)).std()
        s2 = diff(apply_axial(flat(2.0), 0.0, 0.2, stream(5)), flat(2.0)).std()
        assert (s2 / s1) ** 2 == pytest.approx(2.0 ** 4, rel=0.05)
        assert s2 / s1 == pytest.approx(2.0 ** 2, rel=0.05)


class TestRadial:
    def test_mask_geometry(self):
        m = radial_mask(9, 13)
        assert m[4, 6] == 0.0
        assert m[0, 0] == pytest.approx(1.0) and m[8, 12] == pytest.approx(1.0)
        assert m[6, 9] == pytest.approx(0.5)
        assert m.min() >= 0 and m.max() <= 1 + 1e-12

    def test_center_unchanged(self):
        z = flat(2.0, 481, 641)
        assert apply_radial(z, 0.5, stream(0))[240, 320] == 2.0

    def test_corner_std(self):
        z = flat(2.0, 5, 5)
        corner = np.array([apply_radial(z, 0.1, stream(7, k))[0, 0] for k in range(10_000)])
        assert (corner - 2.0).std() == pytest.approx(0.1, rel=0.02)


class TestMotion:
    def test_zero_limit(self):
        v = flat_video()
        out = apply_motion(v, 0.4)
        assert np.array_equal(out.frames, v.frames)

    def test_translation(self):
        ramp = np.tile(np.arange(10, dtype=np.float32), (6, 1))
        out = shift_frame(ramp, 1, 0)
        assert np.array_equal(out[:, 1:], ramp[:, :-1])
        assert np.array_equal(out[:, 0], ramp[:, 0])  # edge replication

    def test_seeded_frame_matches_offset(self):
        ramp = np.arange(48 * 64, dtype=np.float32).reshape(48, 64)
        dx, dy = motion_offset(3, frame_stream(5, 0, 7))
        out = apply_motion_frame(ramp, 3, frame_stream(5, 0, 7))
        assert np.array_equal(out, shift_frame(ramp, dx, dy))

    def test_offsets_uniform_zero_mean(self):
        offs = np.array([motion_offset(4, frame_stream(0, 0, t)) for t in range(900)])
        assert np.all(np.abs(offs) <= 4)
        assert set(np.unique(offs)) == set(range(-4, 5))
        assert np.all(np.abs(offs.mean(axis=0)) <= 0.2)

    def test_too_large(self):
        with pytest.raises(ParameterError):
            apply_motion(flat_video(h=8, w=8), 8)

    def test_interior_submultiset(self):
        rng = np.random.default_rng(0)
        v = DepthVideo(rng.normal(2, 0.1, (5, 30, 40)).astype(np.float32))
        out = apply_motion(v, 3, seed=1)
        for a, b in zip(v.frames, out.frames):
            inner = np.sort(b[3:-3, 3:-3].ravel())
            src, counts = np.unique(a, return_counts=True)
            vals, got = np.unique(inner, return_counts=True)
            idx = np.searchsorted(src, vals)
            assert np.array_equal(src[idx], vals)
            assert np.all(got <= counts[idx])


class TestEdgeAoe:
    def test_flat(self):
        assert not edge_aoe(flat(2.0, 32, 32), 3.0).any()

    def test_step_edge(self):
        z = step_frame()
        masks = [edge_aoe(z, s) for s in (1.0, 2.0, 4.0, 8.0)]
        for m in masks:
            assert m.min() >= 0 and m.max() == 1.0
            row = m[32]
            assert row.argmax() in (31, 32)
            # symmetric about the step between columns 31 and 32
            np.testing.assert_allclose(row[:32][::-1][:20], row[32:][:20], atol=1e-12)
            assert np.all(np.diff(row[32:]) <= 1e-12)
        supports = [np.count_nonzero(m[32]) for m in masks]
        assert supports == sorted(supports) and supports[0] < supports[-1]

    def test_threshold(self):
        m = edge_aoe(step_frame(), 4.0, 0.3)
        nz = m[m > 0]
        assert nz.min() >= 0.3


class TestEdgeGaussian:
    def test_flat_unchanged(self):
        z = flat(2.0, 32, 32)
        assert np.array_equal(apply_edge_gaussian(z, EdgeGaussian(sigma_g_px=2, sigma_m=1), stream(0)), z)

    def test_column_std_follows_mask(self):
        z = step_frame(h=64, w=64)
        spec = EdgeGaussian(sigma_g_px=3, sigma_m=0.5)
        m = edge_aoe(z, 3)
        samples = np.stack([diff(apply_edge_gaussian(z, spec, stream(11, k)), z) for k in range(60)])
        col_std = samples.std(axis=(0, 1))
        for c in (31, 32, 29, 35):
            assert col_std[c] == pytest.approx(0.5 * m[0, c], rel=0.05)
        far = m[0] == 0
        assert far.any() and np.all(samples[:, :, far] == 0)

    def test_support_grows(self):
        z = step_frame()
        prev = None
        for s in (1.0, 2.0, 4.0, 8.0):
            support = edge_aoe(z, s) > 0
            if prev is not None:
                assert np.all(support[prev]) and support.sum() > prev.sum()
            prev = support


class TestEdgePermutation:
    def test_flat_unchanged(self):
        z = flat(2.0, 32, 32)
        assert np.array_equal(apply_edge_permutation(z, EdgePermutation(sigma_g_px=3, r_p_px=2), stream(0)), z)

    def test_disk(self):
        dy, dx = disk_offsets(2)
        assert dy.size == 13
        assert np.all(dy ** 2 + dx ** 2 <= 4)

    def test_values_come_from_disk(self):
        rng = np.random.default_rng(1)
        z = (step_frame() + rng.normal(0, 0.01, (64, 64))).astype(np.float32)
        r = 3
        out = apply_edge_permutation(z, EdgePermutation(sigma_g_px=2, r_p_px=r), stream(2))
        dy, dx = disk_offsets(r)
        changed = np.argwhere(out != z)
        assert changed.size > 0
        for y, x in changed:
            ys = np.clip(y + dy, 0, 63)
            xs = np.clip(x + dx, 0, 63)
            assert out[y, x] in z[ys, xs]

    def test_histogram_mix_near_edge_only(self):
        z = step_frame()
        out = apply_edge_permutation(z, EdgePermutation(sigma_g_px=2, r_p_px=3), stream(3))
        m = edge_aoe(z, 2)
        near = out[:, 29:35]
        assert np.count_nonzero(near[:, :3] == 3.0) > 0 and np.count_nonzero(near[:, 3:] == 2.0) > 0
        assert set(np.unique(out)) <= {2.0, 3.0}
        assert np.array_equal(out[m == 0], z[m == 0])

    def test_toroidal_expected_multiplicity(self):
        # mask = 1 everywhere, wrap-around: every source pixel is drawn once
        # on average, so the value histogram is preserved in expectation
        h, w, r = 12, 16, 2
        z = np.arange(h * w, dtype=np.float32).reshape(h, w)
        counts = np.zeros(h * w)
        n = 400
        for k in range(n):
            out = apply_edge_permutation(z, EdgePermutation(sigma_g_px=1, r_p_px=r), stream(4, k),
                                         mask=np.ones((h, w)), wrap=True)
            counts += np.bincount(out.ravel().astype(np.int64), minlength=h * w)
        mult = counts / n
        assert mult.mean() == 1.0
        # multiplicity ~ Binomial(13 draws, 1/13) per frame: std 0.96/sqrt(400)
        assert np.all(np.abs(mult - 1.0) < 6 * 0.96 / math.sqrt(n))

    def test_toroidal_full_permutation_disk_zero(self):
        z = np.arange(20, dtype=np.float32).reshape(4, 5)
        out = apply_edge_permutation(z, EdgePermutation(sigma_g_px=1, r_p_px=1), stream(0),
                                     mask=np.ones((4, 5)), wrap=True)
        assert set(np.unique(out)) <= set(z.ravel())


class TestChain:
    def test_gaussian_variance_adds(self):
        v = flat_video(n=2, h=480, w=640)
        out = apply_chain(v, [Gaussian(sigma_m=0.03, seed=1), Gaussian(sigma_m=0.04, seed=1)])
        assert measure_noise_std(out, v) == pytest.approx(0.05, rel=0.02)

    def test_identity_chain(self, small_torso):
        out = apply_chain(small_torso, [Motion(max_shift_px=0.1)])
        assert np.array_equal(out.frames, small_torso.frames)

    def test_chain_recorded(self, small_torso):
        chain = [Motion(max_shift_px=1), Gaussian(sigma_m=0.01)]
        out = apply_chain(small_torso, chain)
        assert [d["type"] for d in out.meta["noise_chain"]] == ["Motion", "Gaussian"]

    def test_aoe_tracks_shifted_silhouette(self):
        base = step_frame(48, 64, col=32)
        v = DepthVideo(np.stack([base] * 6))
        spec = EdgeGaussian(sigma_g_px=1.5, sigma_m=0.2, seed=2)
        motion = Motion(max_shift_px=6, seed=2)
        combined = apply_chain(v, [motion, spec])
        edge_only = apply_chain(v, [spec])
        assert not np.array_equal(combined.frames, edge_only.frames)
        for t in range(len(v)):
            dx, dy = motion_offset(6, frame_stream(2, 0, t))
            shifted = shift_frame(base, dx, dy)
            noise = diff(combined.frames[t], shifted)
            mask = edge_aoe(shifted, 1.5)
            assert np.all(noise[mask == 0] == 0)
            assert np.any(noise[mask > 0] != 0)

    @pytest.mark.parametrize("spec", [Gaussian(sigma_m=0.05), Axial(d_level=0.1), Radial(sigma_m=0.05),
                                      EdgeGaussian(sigma_g_px=4, sigma_m=0.2)])
    def test_zero_mean(self, small_torso, spec):
        out = apply_chain(small_torso, [spec])
        d = diff(out.frames, small_torso.frames)
        n = d.size
        assert abs(d.mean()) < 4 * d.std() / math.sqrt(n)

    @pytest.mark.parametrize("spec", [Gaussian(sigma_m=0.05), Motion(max_shift_px=3),
                                      EdgePermutation(sigma_g_px=3, r_p_px=2),
                                      EdgeGaussian(sigma_g_px=3, sigma_m=0.2)])
    def test_threads_and_reruns_bit_identical(self, small_torso, spec):
        a = apply_chain(small_torso, [spec], threads=1)
        b = apply_chain(small_torso, [spec], threads=3)
        c = apply_chain(small_torso, [spec], threads=1)
        assert np.array_equal(a.frames, b.frames) and np.array_equal(a.frames, c.frames)

    @pytest.mark.parametrize("make,grid", [
        (lambda v, s: Gaussian(sigma_m=v, seed=s), [0.01, 0.02, 0.04, 0.08, 0.16]),
        (lambda v, s: Radial(sigma_m=v, seed=s), [0.01, 0.02, 0.04, 0.08, 0.16]),
        (lambda v, s: Axial(d_level=v, seed=s), [0.05, 0.1, 0.15, 0.2, 0.25]),
        (lambda v, s: Motion(max_shift_px=v, seed=s), [1, 2, 4, 8, 16]),
        (lambda v, s: EdgeGaussian(sigma_g_px=v, sigma_m=0.3, seed=s), [1, 2, 4, 8, 16]),
    ])
    def test_measured_std_monotone(self, small_torso, make, grid):
        stds = [np.mean([measure_noise_std(apply_chain(small_torso, [make(v, s)]), small_torso)
                         for s in range(3)]) for v in grid]
        assert all(b >= a for a, b in zip(stds, stds[1:])), stds

    def test_permutation_std_monotone_before_saturation(self, clean_video):
        # only pixels within r_p of a depth step can change, so once sigma_g
        # is a few r_p the measured std plateaus
        v = DepthVideo(clean_video.frames[:2])
        stds = [np.mean([measure_noise_std(apply_chain(v, [EdgePermutation(sigma_g_px=g, r_p_px=3, seed=s)]), v)
                         for s in range(3)]) for g in (1, 2, 3, 4, 6)]
        assert all(b >= a for a, b in zip(stds, stds[1:])), stds
