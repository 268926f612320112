"""Command-line entry point: render, bench, and serve subcommands."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import ConfigError, PipelineConfig

__all__ = ["main", "build_parser"]


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key=value config file; CLI flags override it")
    p.add_argument("--input", help="line-set path or gen:<kind>[?k=v&...] spec")
    p.add_argument("--res", type=int, help="grid resolution (power of two)")
    p.add_argument("--method", choices=("dda", "capsule", "aabb"))
    p.add_argument("--strategy", choices=("vss", "vsv", "vcsv"))
    p.add_argument("--mode", choices=("opaque", "transparent"))
    p.add_argument("--alpha", type=float, help="per-surface opacity in (0, 1]")
    p.add_argument("--k", type=int, help="transparency k-buffer depth (1..64)")
    p.add_argument("--r", type=float, help="line radius in voxel units (0 keeps file radius)")
    p.add_argument("--r-min", dest="r_min", type=float, help="anti-aliasing clamp radius")
    p.add_argument("--out", help="output path prefix")
    p.add_argument("--workers", type=int, help="thread count (0 = all)")
    p.add_argument("--seed", type=int)
    p.add_argument("--port", type=int)
    p.add_argument("--width", type=int)
    p.add_argument("--height", type=int)
    p.add_argument("--cam-azimuth", dest="cam_azimuth", type=float)
    p.add_argument("--cam-elevation", dest="cam_elevation", type=float)
    p.add_argument("--cam-distance", dest="cam_distance", type=float)
    p.add_argument("--cam-fov", dest="cam_fov", type=float)
    p.add_argument("--light", help="light direction as x,y,z")
    p.add_argument("--dump", action="store_const", const=True, default=None,
                   help="also write occupancy/culling/A-buffer dumps")
    p.add_argument("--revoxelize", action="store_const", const=True, default=None,
                   help="serve: rebuild the voxel grid every frame")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="linevox",
                                 description="voxel ray tracer for dynamic line sets")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, help_ in (("render", "render one frame to image files"),
                        ("bench", "run counter benchmarks to CSV + figures"),
                        ("serve", "stream frames over a websocket")):
        p = sub.add_parser(name, help=help_)
        _add_common(p)
        if name == "bench":
            p.add_argument("--experiments",
                           help="comma list of traversal,seglen,strategy,opacity"
                                " (default all; 'none' for an empty report)")
    return ap


def _config_from(args: argparse.Namespace) -> PipelineConfig:
    overrides = {k: v for k, v in vars(args).items()
                 if k not in ("command", "config", "experiments")}
    return PipelineConfig.from_sources(args.config, overrides)


def cmd_render(cfg: PipelineConfig) -> int:
    from .pipeline import ScenePipeline

    pipe = ScenePipeline(cfg)
    img = pipe.render_frame()
    out = cfg.out
    img.save_ppm(f"{out}.ppm")
    img.save_hit_ids(f"{out}.hiti")
    lines = [f"{k}={v}" for k, v in sorted(pipe.stats.items())]
    Path(f"{out}.stats.txt").write_text("\n".join(lines) + "\n")
    if cfg.dump:
        pipe.dump_intermediates(out)
    print(f"wrote {out}.ppm ({img.width}x{img.height}), {out}.hiti, {out}.stats.txt")
    return 0


def cmd_bench(cfg: PipelineConfig, experiments: str | None) -> int:
    from .report import run_bench, write_csv, write_figures

    if experiments is None:
        names = None
    elif experiments.strip().lower() == "none":
        names = []
    else:
        names = [e.strip() for e in experiments.split(",") if e.strip()]
    rows = run_bench(names, seed=cfg.seed)
    csv_path = f"{cfg.out}.csv"
    write_csv(rows, csv_path)
    figs = write_figures(rows, cfg.out)
    print(f"wrote {csv_path} ({len(rows)} rows)"
          + (f" and {len(figs)} figures" if figs else ""))
    return 0


def cmd_serve(cfg: PipelineConfig) -> int:
    import asyncio

    from .server import serve_forever

    asyncio.run(serve_forever(cfg))
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _config_from(args)
    except (ConfigError, OSError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    try:
        if args.command == "render":
            return cmd_render(cfg)
        if args.command == "bench":
            return cmd_bench(cfg, getattr(args, "experiments", None))
        return cmd_serve(cfg)
    except KeyboardInterrupt:
        return 130
    except Exception as e:
        stage = type(e).__name__
        print(f"error [{stage}]: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
