"""Pipeline configuration: flat key=value files mirrored by CLI flags."""

from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

__all__ = ["PipelineConfig", "ConfigError", "parse_config_file"]

_METHODS = ("dda", "capsule", "aabb")
_STRATEGIES = ("vss", "vsv", "vcsv")
_MODES = ("opaque", "transparent")


class ConfigError(ValueError):
    pass


@dataclass
class PipelineConfig:
    input: str = "gen:helix"
    res: int = 128
    method: str = "capsule"
    strategy: str = "vsv"
    mode: str = "opaque"
    alpha: float = 1.0
    k: int = 8
    r: float = 0.2          # line radius in voxel units; 0 = keep file radius
    r_min: float = 0.5      # PWAA clamp radius, voxel units
    out: str = "out"
    workers: int = 0        # 0 = all hardware threads
    seed: int = 0
    port: int = 8765
    width: int = 256
    height: int = 256
    cam_azimuth: float = 35.0    # degrees
    cam_elevation: float = 25.0  # degrees
    cam_distance: float = 0.0    # world units; 0 = auto-fit to the scene
    cam_fov: float = 45.0        # vertical, degrees
    light: str = "-0.5,-0.3,-0.8"
    dump: bool = False           # also write occupancy/culling/A-buffer dumps
    revoxelize: bool = False     # serve: rebuild the grid every frame

    def validate(self) -> "PipelineConfig":
        if self.res < 2 or self.res & (self.res - 1):
            raise ConfigError(f"res must be a power of two >= 2, got {self.res}")
        if self.method not in _METHODS:
            raise ConfigError(f"method must be one of {_METHODS}, got {self.method!r}")
        if self.strategy not in _STRATEGIES:
            raise ConfigError(f"strategy must be one of {_STRATEGIES}, got {self.strategy!r}")
        if self.mode not in _MODES:
            raise ConfigError(f"mode must be one of {_MODES}, got {self.mode!r}")
        if self.strategy == "vcsv" and self.mode == "transparent":
            raise ConfigError("strategy vcsv cannot be combined with transparent mode: "
                              "culling would drop fragments that still contribute")
        if not 0.0 < self.alpha <= 1.0:
            raise ConfigError(f"alpha must be in (0, 1], got {self.alpha}")
        if not 1 <= self.k <= 64:
            raise ConfigError(f"k must be in [1, 64], got {self.k}")
        if self.r < 0:
            raise ConfigError("r must be >= 0")
        if self.r_min <= 0:
            raise ConfigError("r_min must be > 0")
        if self.workers < 0:
            raise ConfigError("workers must be >= 0")
        if self.width <= 0 or self.height <= 0:
            raise ConfigError("width and height must be positive")
        if not 0.0 < self.cam_fov < 180.0:
            raise ConfigError("cam_fov must be in (0, 180) degrees")
        try:
            self.light_vector()
        except Exception as e:
            raise ConfigError(f"bad light direction {self.light!r}: {e}") from None
        return self

    def light_vector(self):
        try:
            parts = [float(p) for p in self.light.split(",")]
        except ValueError:
            raise ConfigError(f"bad light direction {self.light!r}") from None
        if len(parts) != 3 or all(p == 0.0 for p in parts):
            raise ConfigError("light needs three comma-separated components, not all zero")
        v = np.asarray(parts, dtype=np.float64)
        return v / np.linalg.norm(v)

    @classmethod
    def from_sources(cls, file_path: str | None = None,
                     overrides: dict | None = None) -> "PipelineConfig":
        """File values first, then explicit overrides (CLI wins)."""
        values: dict = {}
        if file_path is not None:
            values.update(parse_config_file(file_path))
        for k, v in (overrides or {}).items():
            if v is not None:
                values[k] = v
        known = {f.name: f.type for f in fields(cls)}
        cfg = cls()
        for k, v in values.items():
            if k not in known:
                raise ConfigError(f"unknown config key {k!r}")
            cur = getattr(cfg, k)
            try:
                if isinstance(cur, bool):
                    v = v if isinstance(v, bool) else str(v).lower() in ("1", "true", "yes", "on")
                elif isinstance(cur, int):
                    v = int(v)
                elif isinstance(cur, float):
                    v = float(v)
                else:
                    v = str(v)
            except ValueError:
                raise ConfigError(f"bad value for {k!r}: {v!r}") from None
            setattr(cfg, k, v)
        return cfg.validate()


def parse_config_file(path: str | Path) -> dict:
    values = {}
    for ln, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{ln}: expected key=value, got {line!r}")
        k, _, v = line.partition("=")
        values[k.strip()] = v.strip()
    return values
