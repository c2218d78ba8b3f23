"""Command-line entry point: ``depthresp {render,corrupt,extract,analyze,sweep}``.

Exit codes: 0 success, 2 configuration or validation error, 3 data error.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np
from pydantic import ValidationError

from . import __version__
from ._parallel import default_threads
from .analysis import (SUMMARY_COLUMNS, SWEEP_COLUMNS, estimate_f0, run_sweep, spectral_snr,
                       write_csv)
from .config import ExperimentConfig, load_chain_file, load_config, load_grid
from .errors import DepthRespError, ParameterError
from .extract import RoiSpec, default_roi, extract_signal, read_signal_csv, write_signal_csv
from .noise import apply_chain, dump_chain
from .scene import TorsoScene, animate
from .svgplot import write_sweep_svg
from .videoio import provenance, read_meta, read_video, write_video

EXIT_OK, EXIT_CONFIG, EXIT_DATA = 0, 2, 3

log = logging.getLogger("depthresp")


class _Usage(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _Usage(f"{self.prog}: {message}")


def _format_validation(exc: ValidationError) -> str:
    lines = [f"invalid configuration ({exc.error_count()} error(s)):"]
    for err in exc.errors():
        path = ".".join(str(p) for p in err["loc"]) or "<root>"
        lines.append(f"  {path}: {err['msg']}")
    return "\n".join(lines)


def _config_record(cfg: ExperimentConfig) -> dict:
    return cfg.model_dump(mode="json")


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def cmd_render(args) -> int:
    cfg = load_config(args.config)
    seed = args.seed
    signal = cfg.driving_signal(seed)
    video = animate(cfg.scene, signal, cfg.frame_rate_hz, threads=args.threads)
    out = Path(args.out or cfg.output_dir or "video")
    prov = provenance("render", _config_record(cfg), seed if seed is not None else
                      (cfg.signal.synthetic.seed if cfg.signal.synthetic else None))
    write_video(out, video, {"provenance": prov, "config": _config_record(cfg)})
    lines = ["time_s,value"] + [f"{t:.9g},{v:.9g}" for t, v in zip(signal.times, signal.samples)]
    (out / "driver.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    h, w = video.shape
    print(f"rendered {len(video)} frames ({len(video) / video.frame_rate_hz:g} s at "
          f"{video.frame_rate_hz:g} Hz, {w}x{h}) to {out}")
    return EXIT_OK


def cmd_corrupt(args) -> int:
    cfg = load_config(args.config)
    if args.chain is not None:
        chain = load_chain_file(args.chain)
    elif cfg.noise:
        chain = list(cfg.noise)
    else:
        raise ParameterError("no noise chain: pass --chain or set 'noise' in the config")
    if args.seed is not None:
        chain = [s.model_copy(update={"seed": args.seed}) for s in chain]
    src = Path(args.video)
    video = read_video(src)
    noisy = apply_chain(video, chain, threads=args.threads)
    out = Path(args.out) if args.out else src.with_name(src.name + "_noisy")
    if out.resolve() == src.resolve():
        raise ParameterError("output directory must differ from the input video")
    record = {"noise_chain": dump_chain(chain), "source_video": str(src)}
    prov = provenance("corrupt", {"chain": record["noise_chain"], "source_meta": read_meta(src)}, args.seed)
    write_video(out, noisy, {**record, "provenance": prov})
    print(f"corrupted {len(noisy)} frames with {len(chain)} model(s) to {out}")
    return EXIT_OK


def _resolve_roi(args, meta: dict) -> RoiSpec:
    explicit = [args.x0, args.y0, args.width, args.height]
    if any(v is not None for v in explicit):
        if any(v is None for v in explicit):
            raise ParameterError("--x0, --y0, --width and --height must be given together")
        return RoiSpec(x0=args.x0, y0=args.y0, width_px=args.width, height_px=args.height,
                       scale=args.scale)
    if args.config is not None:
        cfg = load_config(args.config)
        return cfg.resolved_roi(args.scale)
    recorded = meta.get("config") or {}
    if recorded.get("roi"):
        return RoiSpec.model_validate(recorded["roi"]).at_scale(args.scale)
    scene = meta.get("scene") or recorded.get("scene")
    if scene is None:
        raise ParameterError("video carries no scene description; pass an explicit RoI")
    return default_roi(TorsoScene.model_validate(scene), args.scale)


def cmd_extract(args) -> int:
    src = Path(args.video)
    meta = read_meta(src)
    roi = _resolve_roi(args, meta)
    roi.check(int(meta["height"]), int(meta["width"]))
    video = read_video(src)
    signal = extract_signal(video, roi)
    out = Path(args.out) if args.out else src.with_name(f"{src.name}_signal.csv")
    write_signal_csv(out, signal)
    print(f"extracted {len(signal)} samples (RoI {roi.width_px}x{roi.height_px} at "
          f"({roi.x0},{roi.y0}), scale {roi.scale:g}) to {out}")
    return EXIT_OK


def _num(v: float):
    return v if math.isfinite(v) else None


def cmd_analyze(args) -> int:
    cfg = load_config(args.config)
    noisy = read_signal_csv(args.noisy)
    ref = read_signal_csv(args.reference)
    if len(noisy) != len(ref):
        raise ParameterError(f"length mismatch: {args.noisy} has {len(noisy)} samples, "
                             f"{args.reference} has {len(ref)}")
    if noisy.sample_rate_hz != ref.sample_rate_hz:
        raise ParameterError(f"rate mismatch: {noisy.sample_rate_hz} Hz vs {ref.sample_rate_hz} Hz")
    band = args.band_hz if args.band_hz is not None else cfg.analysis.band_hz
    est = estimate_f0(ref, cfg.analysis.f0_range_hz)
    res = spectral_snr(noisy, est.f0_hz, band)
    report = {
        "noisy": str(args.noisy),
        "reference": str(args.reference),
        "n_samples": len(noisy),
        "sample_rate_hz": noisy.sample_rate_hz,
        "f0_hz": est.f0_hz,
        "f0_ambiguous": est.ambiguous,
        "band_hz": band,
        "rho": res.rho,
        "snr_db": _num(res.snr_db),
        "provenance": provenance("analyze", {"config": _config_record(cfg), "band_hz": band}, None),
    }
    text = json.dumps(report, indent=2, sort_keys=True) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    grid = load_grid(args.grid)
    if args.seed is not None:
        grid = grid.model_copy(update={"seeds": [args.seed + s for s in grid.seeds]})
    signal = cfg.driving_signal()
    clean = animate(cfg.scene, signal, cfg.frame_rate_hz, threads=args.threads)
    roi = cfg.resolved_roi(1.0)
    rows, summary = run_sweep(grid, clean, roi, threads=args.threads)
    out = Path(args.out or cfg.output_dir or "sweep")
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "sweep.csv", rows, SWEEP_COLUMNS)
    write_csv(out / "summary.csv", summary, SUMMARY_COLUMNS)
    write_sweep_svg(out / "sweep.svg", summary)
    record = {"config": _config_record(cfg), "grid": grid.model_dump(mode="json")}
    _write_json(out / "provenance.json", {**record, "provenance": provenance("sweep", record, args.seed),
                                          "noise_chains": [r.noise_spec for r in rows]})
    failed = sum(1 for r in rows if r.error)
    print(f"swept {len(rows)} cells ({failed} failed) to {out}")
    return EXIT_OK


def _common(p: argparse.ArgumentParser, out_help: str) -> None:
    p.add_argument("--config", type=Path, help="experiment config (JSON)")
    p.add_argument("--seed", type=int, help="override the random seed")
    p.add_argument("--out", help=out_help)
    p.add_argument("--threads", type=int, default=None,
                   help="worker threads (default: all cores); results do not depend on it")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="depthresp", description="Synthetic depth-video respiration noise study.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("render", help="render the clean depth video")
    _common(p, "output video directory")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("corrupt", help="apply a noise chain to a video")
    p.add_argument("video", help="input video directory")
    p.add_argument("--chain", type=Path, help="noise chain (JSON list of specs)")
    _common(p, "output video directory (default: sibling '<video>_noisy')")
    p.set_defaults(func=cmd_corrupt)

    p = sub.add_parser("extract", help="extract the RoI signal as CSV")
    p.add_argument("video", help="input video directory")
    p.add_argument("--x0", type=int)
    p.add_argument("--y0", type=int)
    p.add_argument("--width", type=int)
    p.add_argument("--height", type=int)
    p.add_argument("--scale", type=float, default=1.0)
    _common(p, "output CSV path (default: sibling '<video>_signal.csv')")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("analyze", help="spectral SNR of a signal against a reference")
    p.add_argument("noisy", help="signal CSV to score")
    p.add_argument("reference", help="clean signal CSV giving the respiration rate")
    p.add_argument("--band-hz", type=float)
    _common(p, "report JSON path (also printed)")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("sweep", help="run a noise parameter sweep")
    p.add_argument("--grid", type=Path, required=True, help="sweep grid (JSON)")
    _common(p, "output directory")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except _Usage as exc:
        print(exc, file=sys.stderr)
        return EXIT_CONFIG
    except SystemExit as exc:  # --help / --version
        return EXIT_OK if not exc.code else EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads is None:
        args.threads = default_threads()
    elif args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    if args.seed is not None and args.seed < 0:
        print("error: --seed must be >= 0", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except ValidationError as exc:
        print(_format_validation(exc), file=sys.stderr)
        return EXIT_CONFIG
    except ParameterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DepthRespError, OSError, ValueError, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:
        print(f"error: unexpected failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
