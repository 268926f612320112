"""Frame-streaming service.

One socket per client; JSON pose/set messages in, frame_header JSON plus a
binary sRGB body out. Incoming poses are coalesced to the latest before
each render, so a burst of camera motion costs at most one frame of
latency. View-dependent stages rerun per pose; geometry is voxelized once
unless a geometry setting changes (or revoxelize is on).
"""

from __future__ import annotations

import asyncio
import dataclasses
import json

import numpy as np
from websockets.asyncio.server import serve
from websockets.exceptions import ConnectionClosed

from .config import ConfigError, PipelineConfig
from .culling import Camera
from .pipeline import ScenePipeline

__all__ = ["serve_forever", "handle_connection"]

# settings that invalidate the voxel grid when changed
_GEOMETRY_KEYS = {"input", "res", "method", "r", "r_min", "seed"}
_DRAIN_TIMEOUT = 0.005


async def _send_error(ws, message: str) -> None:
    await ws.send(json.dumps({"type": "error", "message": message}))


def _camera_from_pose(pose: dict, cfg: PipelineConfig) -> Camera:
    return Camera(np.asarray(pose["position"], dtype=np.float64),
                  np.asarray(pose["forward"], dtype=np.float64),
                  np.asarray(pose["up"], dtype=np.float64),
                  fov=float(pose.get("fov", np.deg2rad(cfg.cam_fov))),
                  width=cfg.width, height=cfg.height)


async def handle_connection(ws, base_cfg: PipelineConfig) -> None:
    loop = asyncio.get_running_loop()
    cfg = dataclasses.replace(base_cfg)
    pipe = await loop.run_in_executor(None, ScenePipeline, cfg)
    frame_id = 0
    pose = None
    dirty = False

    async def apply_message(raw) -> None:
        nonlocal pose, dirty
        if isinstance(raw, bytes):
            await _send_error(ws, "binary messages are not accepted")
            return
        try:
            msg = json.loads(raw)
        except json.JSONDecodeError as e:
            await _send_error(ws, f"bad JSON: {e}")
            return
        mtype = msg.get("type")
        if mtype == "pose":
            try:
                _camera_from_pose(msg, pipe.cfg)
                int(msg["id"])
            except (KeyError, TypeError, ValueError) as e:
                await _send_error(ws, f"bad pose: {e}")
                return
            pose = msg
            dirty = True
        elif mtype == "set":
            key = msg.get("key")
            value = msg.get("value")
            try:
                new_cfg = PipelineConfig.from_sources(
                    None, {**dataclasses.asdict(pipe.cfg), str(key): value})
            except ConfigError as e:
                await _send_error(ws, str(e))
                return
            rebuild = key in _GEOMETRY_KEYS
            pipe.cfg = new_cfg
            if rebuild:
                await loop.run_in_executor(None, pipe.build_geometry)
            dirty = True
        else:
            await _send_error(ws, f"unknown message type {mtype!r}")

    try:
        while True:
            raw = await ws.recv()
            await apply_message(raw)
            # coalesce any burst that arrived meanwhile: latest pose wins
            while True:
                try:
                    raw = await asyncio.wait_for(ws.recv(), _DRAIN_TIMEOUT)
                except (asyncio.TimeoutError, TimeoutError):
                    break
                await apply_message(raw)
            if pose is None or not dirty:
                continue
            cam = _camera_from_pose(pose, pipe.cfg)
            img = await loop.run_in_executor(None, pipe.render_frame, cam)
            frame_id += 1
            dirty = False
            stats = {k: (round(v, 3) if isinstance(v, float) else v)
                     for k, v in pipe.stats.items()}
            await ws.send(json.dumps({
                "type": "frame_header",
                "id": frame_id,
                "pose_id": int(pose["id"]),
                "width": img.width,
                "height": img.height,
                "stats": stats,
            }))
            await ws.send(img.srgb_bytes())
    except ConnectionClosed:
        pass


async def serve_forever(cfg: PipelineConfig, ready: asyncio.Event | None = None):
    cfg.validate()

    async def handler(ws):
        await handle_connection(ws, cfg)

    async with serve(handler, "127.0.0.1", cfg.port, max_size=None) as server:
        print(f"serving on ws://127.0.0.1:{cfg.port}")
        if ready is not None:
            ready.set()
        await server.serve_forever()
