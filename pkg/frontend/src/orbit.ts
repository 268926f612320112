/** Orbit camera state and its deterministic mapping to pose messages. */

import type { PoseMessage } from "./protocol.js";

export interface OrbitState {
  target: [number, number, number];
  distance: number;
  azimuth: number; // radians
  elevation: number; // radians, in (-pi/2, pi/2)
  fov: number; // vertical, radians
}

const ELEVATION_LIMIT = Math.PI / 2 - 1e-3;
const MIN_DISTANCE = 1e-6;

export function clampOrbit(o: OrbitState): OrbitState {
  return {
    ...o,
    distance: Math.max(o.distance, MIN_DISTANCE),
    elevation: Math.min(Math.max(o.elevation, -ELEVATION_LIMIT), ELEVATION_LIMIT),
  };
}

/** Camera basis: z-up orbit around the target (matches the server's
 * orbit convention: offset = [cos e cos a, cos e sin a, sin e]). */
export function orbitPose(o: OrbitState, id: number): PoseMessage {
  const ce = Math.cos(o.elevation);
  const offset = [
    ce * Math.cos(o.azimuth),
    ce * Math.sin(o.azimuth),
    Math.sin(o.elevation),
  ];
  const position: [number, number, number] = [
    o.target[0] + o.distance * offset[0],
    o.target[1] + o.distance * offset[1],
    o.target[2] + o.distance * offset[2],
  ];
  const forward: [number, number, number] = [
    -offset[0],
    -offset[1],
    -offset[2],
  ];
  return { type: "pose", id, position, forward, up: [0, 0, 1], fov: o.fov };
}
