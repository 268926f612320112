/** Message types of the frame-streaming protocol.
 *
 * Client -> server: JSON `pose` and `set` messages.
 * Server -> client: JSON `frame_header` / `error` messages; each
 * frame_header is followed by one binary message of width*height*3
 * sRGB bytes.
 */

export interface PoseMessage {
  type: "pose";
  id: number;
  position: [number, number, number];
  forward: [number, number, number];
  up: [number, number, number];
  fov: number;
}

export interface SetMessage {
  type: "set";
  key: string;
  value: string;
}

/** Per-frame counters and timings, reported verbatim from the server.
 * Displayed values must come only from here, never be recomputed
 * client-side. */
export interface SessionStats {
  segments?: number;
  vertices?: number;
  resolution?: number;
  fragments?: number;
  fragment_touches?: number;
  culled_fraction?: number;
  ray_capsule_tests?: number;
  load_ms?: number;
  voxelize_ms?: number;
  cull_ms?: number;
  abuffer_ms?: number;
  shading_ms?: number;
  render_ms?: number;
  [key: string]: number | undefined;
}

export interface FrameHeader {
  type: "frame_header";
  id: number;
  pose_id: number;
  width: number;
  height: number;
  stats: SessionStats;
}

export interface ErrorMessage {
  type: "error";
  message: string;
}

export type ServerMessage = FrameHeader | ErrorMessage;

export function parseServerMessage(text: string): ServerMessage {
  const msg = JSON.parse(text);
  if (msg.type !== "frame_header" && msg.type !== "error") {
    throw new Error(`unknown server message type ${JSON.stringify(msg.type)}`);
  }
  return msg as ServerMessage;
}
