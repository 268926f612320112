"""Benchmark runner: counter CSV plus summary figures.

Four desk-scale experiments: traversal-method comparison over resolutions,
segment-length sweep via decimation, A-buffer strategy comparison, and an
opacity sweep. Wall times are recorded for context only; the assertable
quantities are the instrumented counters.
"""

from __future__ import annotations

import csv
import dataclasses
import time
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from . import abuffer, lineset  # noqa: E402
from .config import PipelineConfig  # noqa: E402
from .grid import fit_grid  # noqa: E402
from .pipeline import ScenePipeline  # noqa: E402
from .voxelizer import voxelize  # noqa: E402

__all__ = ["BenchRow", "run_bench", "write_csv", "write_figures"]

FIELDS = ["experiment", "dataset", "resolution", "method", "strategy", "mode",
          "alpha", "k", "segments", "visited", "fragments", "touches",
          "sorted_elements", "ray_tests", "time_ms"]


@dataclasses.dataclass
class BenchRow:
    experiment: str
    dataset: str
    resolution: int
    method: str = ""
    strategy: str = ""
    mode: str = ""
    alpha: float = 0.0
    k: int = 0
    segments: int = 0
    visited: int = 0
    fragments: int = 0
    touches: int = 0
    sorted_elements: int = 0
    ray_tests: int = 0
    time_ms: float = 0.0


def _voxelize_row(experiment, dataset, ls, res, method, r=0.2) -> BenchRow:
    cn = lineset.compute_clip_normals(ls)
    g, rw = fit_grid(ls, res, radius_voxels=r)
    t0 = time.perf_counter()
    pyr = voxelize(ls, cn, g, method=method, r_world=rw)
    dt = 1e3 * (time.perf_counter() - t0)
    return BenchRow(experiment, dataset, res, method=method,
                    segments=len(ls.segment_vertex_ids()),
                    visited=pyr.visited, time_ms=dt)


def _traversal_rows(seed):
    rows = []
    sets = {
        "helix": lineset.generate("helix", turns=4.0, verts=200),
        "streamlines": lineset.generate("random_streamlines", seed=seed,
                                        polylines=20, verts_per_line=20),
    }
    for name, ls in sets.items():
        for res in (32, 64):
            for method in ("dda", "capsule", "aabb"):
                rows.append(_voxelize_row("traversal", name, ls, res, method))
    return rows


def _seglen_rows(seed):
    rows = []
    ls = lineset.generate("helix", turns=6.0, verts=257)
    for n in (1, 2, 4, 8):
        dec = lineset.decimate(ls, n)
        for method in ("capsule", "aabb"):
            row = _voxelize_row("seglen", f"helix_n{n}", dec, 64, method)
            rows.append(row)
    return rows


def _strategy_rows(seed):
    rows = []
    ls = lineset.generate("random_streamlines", seed=seed,
                          polylines=20, verts_per_line=20)
    cn = lineset.compute_clip_normals(ls)
    g, rw = fit_grid(ls, 64, radius_voxels=0.2)
    pyr = voxelize(ls, cn, g, r_world=rw)
    builders = {
        "vss": lambda: abuffer.build_vss(ls, cn, g, r_world=rw),
        "vsv": lambda: abuffer.build_vsv(ls, cn, g, pyr, r_world=rw),
    }
    for strat, build in builders.items():
        t0 = time.perf_counter()
        ab = build()
        dt = 1e3 * (time.perf_counter() - t0)
        rows.append(BenchRow("strategy", "streamlines", 64, strategy=strat,
                             segments=len(ls.segment_vertex_ids()),
                             fragments=ab.total,
                             touches=ab.stats.get("fragment_touches", 0),
                             sorted_elements=ab.stats.get("sorted_elements", 0),
                             time_ms=dt))
    # VCSV is view dependent; render a frame to exercise culling
    cfg = PipelineConfig(input="gen:random_streamlines?polylines=20&verts_per_line=20",
                         res=64, strategy="vcsv", width=64, height=64, seed=seed)
    pipe = ScenePipeline(cfg)
    t0 = time.perf_counter()
    pipe.render_frame()
    dt = 1e3 * (time.perf_counter() - t0)
    rows.append(BenchRow("strategy", "streamlines", 64, strategy="vcsv",
                         segments=pipe.stats["segments"],
                         fragments=pipe.stats["fragments"],
                         touches=pipe.stats["fragment_touches"], time_ms=dt))
    return rows


def _opacity_rows(seed):
    # a deep fixture (many overlapping lines along the view) so early
    # termination actually changes the work done per alpha
    rows = []
    cfg = PipelineConfig(input="gen:grid_diagonals?count=400&length=20&domain=26",
                         res=64, r=1.5, width=96, height=96, seed=seed)
    pipe = ScenePipeline(cfg)
    for alpha in (1.0, 0.5, 0.2, 0.1):
        pipe.cfg = dataclasses.replace(pipe.cfg, mode="transparent", alpha=alpha)
        t0 = time.perf_counter()
        img = pipe.render_frame()
        dt = 1e3 * (time.perf_counter() - t0)
        rows.append(BenchRow("opacity", "diagonals", 64, mode="transparent",
                             alpha=alpha, k=cfg.k,
                             segments=pipe.stats["segments"],
                             ray_tests=img.stats["ray_capsule_tests"],
                             time_ms=dt))
    return rows


_EXPERIMENTS = {
    "traversal": _traversal_rows,
    "seglen": _seglen_rows,
    "strategy": _strategy_rows,
    "opacity": _opacity_rows,
}


def run_bench(experiments=None, seed: int = 0) -> list:
    """Run the requested experiments (all by default); empty list → no rows."""
    if experiments is None:
        experiments = list(_EXPERIMENTS)
    rows = []
    for name in experiments:
        if name not in _EXPERIMENTS:
            raise ValueError(f"unknown experiment {name!r}")
        rows.extend(_EXPERIMENTS[name](seed))
    return rows


def write_csv(rows: list, path: str | Path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=FIELDS)
        w.writeheader()
        for r in rows:
            w.writerow(dataclasses.asdict(r))


def write_figures(rows: list, prefix: str | Path) -> list:
    """One figure per experiment present in the rows; returns written paths."""
    prefix = Path(prefix)
    written = []
    by_exp = {}
    for r in rows:
        by_exp.setdefault(r.experiment, []).append(r)

    if "traversal" in by_exp:
        fig, ax = plt.subplots(figsize=(7, 4))
        data = by_exp["traversal"]
        keys = sorted({(r.dataset, r.resolution) for r in data})
        methods = ("dda", "capsule", "aabb")
        x = range(len(keys))
        for i, m in enumerate(methods):
            vals = []
            for ds, res in keys:
                vals.append(next(r.visited for r in data
                                 if (r.dataset, r.resolution) == (ds, res)
                                 and r.method == m))
            ax.bar([xi + 0.25 * i for xi in x], vals, width=0.25, label=m)
        ax.set_xticks([xi + 0.25 for xi in x])
        ax.set_xticklabels([f"{ds}\n{res}³" for ds, res in keys])
        ax.set_ylabel("voxels visited")
        ax.set_yscale("log")
        ax.legend()
        ax.set_title("Traversal methods")
        p = prefix.with_name(prefix.name + "_traversal.png")
        fig.tight_layout()
        fig.savefig(p)
        plt.close(fig)
        written.append(p)

    if "seglen" in by_exp:
        fig, ax = plt.subplots(figsize=(6, 4))
        data = by_exp["seglen"]
        ns = sorted({int(r.dataset.split("_n")[1]) for r in data})
        for m in ("capsule", "aabb"):
            ys = [next(r.visited for r in data
                       if r.dataset == f"helix_n{n}" and r.method == m) for n in ns]
            ax.plot(ns, ys, marker="o", label=m)
        ax.set_xlabel("decimation step (segment length ×n)")
        ax.set_ylabel("voxels visited")
        ax.set_xscale("log", base=2)
        ax.set_yscale("log")
        ax.legend()
        ax.set_title("Segment length sweep")
        p = prefix.with_name(prefix.name + "_seglen.png")
        fig.tight_layout()
        fig.savefig(p)
        plt.close(fig)
        written.append(p)

    if "strategy" in by_exp:
        fig, ax = plt.subplots(figsize=(6, 4))
        data = by_exp["strategy"]
        names = [r.strategy for r in data]
        ax.bar(names, [r.touches for r in data], width=0.5)
        ax.set_ylabel("fragment memory touches")
        ax.set_title("A-buffer strategies")
        p = prefix.with_name(prefix.name + "_strategy.png")
        fig.tight_layout()
        fig.savefig(p)
        plt.close(fig)
        written.append(p)

    if "opacity" in by_exp:
        fig, ax = plt.subplots(figsize=(6, 4))
        data = sorted(by_exp["opacity"], key=lambda r: -r.alpha)
        ax.plot([r.alpha for r in data], [r.ray_tests for r in data], marker="o")
        ax.invert_xaxis()
        ax.set_xlabel("opacity α")
        ax.set_ylabel("ray-capsule tests")
        ax.set_title("Opacity sweep")
        p = prefix.with_name(prefix.name + "_opacity.png")
        fig.tight_layout()
        fig.savefig(p)
        plt.close(fig)
        written.append(p)

    return written
