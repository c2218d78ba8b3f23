"""Time the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat N]
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from depthresp import _backend
from depthresp.noise import EdgePermutation, apply_edge_permutation, edge_aoe
from depthresp.rng import frame_stream
from depthresp.scene import TorsoScene, build_torso, displaced_vertices, render_frame


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    scene = TorsoScene()
    mesh = build_torso(scene)
    verts = displaced_vertices(mesh, scene, 0.5)
    frame = render_frame(verts, scene.intrinsics, scene.background_m, mesh.triangles).depth_m
    spec = EdgePermutation(sigma_g_px=10, r_p_px=5)
    mask = edge_aoe(frame, spec.sigma_g_px)

    jobs = {
        "rasterize 640x480": lambda b: render_frame(verts, scene.intrinsics, scene.background_m,
                                                    mesh.triangles, backend=b),
        "edge permutation": lambda b: apply_edge_permutation(frame, spec, frame_stream(0, 0, 0), mask,
                                                             backend=b),
    }
    print(f"{'kernel':<20}{'backend':<10}{'best ms':>10}")
    for name, job in jobs.items():
        ref = None
        times = {}
        for b in _backend.available():
            out = job(b)
            out = out.depth_m if hasattr(out, "depth_m") else out
            if ref is None:
                ref = out
            elif not np.array_equal(ref, out):
                raise SystemExit(f"{name}: backends disagree")
            times[b] = min(timeit.repeat(lambda: job(b), number=1, repeat=args.repeat)) * 1e3
            print(f"{name:<20}{b:<10}{times[b]:>10.2f}")
        if len(times) == 2:
            print(f"{'':<20}{'speedup':<10}{times['python'] / times['cython']:>9.1f}x")


if __name__ == "__main__":
    main()
