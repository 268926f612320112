/** Viewer session: one websocket, latest-wins pose throttling, and the
 * frame-display rules.
 *
 * - At most one unacknowledged pose is in flight; input only updates the
 *   local OrbitState, and the next pose is sent when the previous one is
 *   acknowledged by a frame_header (or rejected with an error). This
 *   mirrors the server's own coalescing, so a burst of camera motion
 *   costs at most one frame of latency end to end.
 * - A frame body is displayed at most once per frame id, never after a
 *   newer frame, and never when its pose_id is older than the last one
 *   displayed. Bodies whose size disagrees with their header are
 *   discarded and logged.
 * - On connection loss the session shows a banner and retries; a
 *   reconnect resumes from the current OrbitState.
 */

import { clampOrbit, orbitPose, type OrbitState } from "./orbit.js";
import { parseServerMessage, type FrameHeader } from "./protocol.js";

/** Minimal surface shared by the browser WebSocket and the `ws` package.
 * Event parameters are `any` so both libraries' concrete event types
 * satisfy the interface. */
export interface SocketLike {
  binaryType: string;
  // eslint-disable-next-line @typescript-eslint/no-explicit-any
  onopen: ((ev?: any) => void) | null;
  onclose: ((ev?: any) => void) | null;
  onerror: ((ev?: any) => void) | null;
  onmessage: ((ev: any) => void) | null;
  send(data: string): void;
  close(): void;
}

export type SocketFactory = (url: string) => SocketLike;

export interface SessionCallbacks {
  /** A frame passed every display rule; body is the untouched received bytes. */
  onFrame(header: FrameHeader, body: Uint8Array): void;
  /** Server-reported protocol error (connection stays up). */
  onServerError?(message: string): void;
  /** Client-side discard (missing header, size mismatch). */
  onClientError?(message: string): void;
  /** Connection state for the banner; detail set when disconnected. */
  onConnectionChange?(connected: boolean, detail?: string): void;
}

export interface SessionOptions {
  url: string;
  orbit: OrbitState;
  callbacks: SessionCallbacks;
  socketFactory: SocketFactory;
  retryDelayMs?: number;
}

export class ViewerSession {
  orbit: OrbitState;

  private readonly url: string;
  private readonly callbacks: SessionCallbacks;
  private readonly socketFactory: SocketFactory;
  private readonly retryDelayMs: number;

  private socket: SocketLike | null = null;
  private open = false;
  private closedByUser = false;
  private retryTimer: ReturnType<typeof setTimeout> | null = null;

  private nextPoseId = 0;
  private poseInFlight = false;
  private poseDirty = true; // send the initial pose on open
  private pendingHeader: FrameHeader | null = null;
  private lastFrameId = 0;
  private lastPoseId = 0;

  constructor(options: SessionOptions) {
    this.url = options.url;
    this.orbit = clampOrbit(options.orbit);
    this.callbacks = options.callbacks;
    this.socketFactory = options.socketFactory;
    this.retryDelayMs = options.retryDelayMs ?? 1000;
  }

  connect(): void {
    if (this.socket !== null || this.closedByUser) return;
    const ws = this.socketFactory(this.url);
    ws.binaryType = "arraybuffer";
    ws.onopen = () => this.handleOpen();
    ws.onclose = () => this.handleClose("connection closed");
    ws.onerror = () => {
      /* the close event that follows drives the banner and retry */
    };
    ws.onmessage = (ev) => this.handleMessage(ev.data);
    this.socket = ws;
  }

  close(): void {
    this.closedByUser = true;
    if (this.retryTimer !== null) {
      clearTimeout(this.retryTimer);
      this.retryTimer = null;
    }
    this.socket?.close();
    this.socket = null;
    this.open = false;
  }

  /** Apply an input delta to the orbit state; the pose is sent
   * immediately if nothing is in flight, otherwise it rides along once
   * the current frame is acknowledged (latest wins). */
  updateOrbit(change: Partial<OrbitState>): void {
    this.orbit = clampOrbit({ ...this.orbit, ...change });
    this.poseDirty = true;
    this.maybeSendPose();
  }

  /** Send a parameter change; the server answers with a re-render. */
  setParam(key: string, value: string): void {
    if (!this.open) return;
    this.socket!.send(JSON.stringify({ type: "set", key, value }));
  }

  get connected(): boolean {
    return this.open;
  }

  private maybeSendPose(): void {
    if (!this.open || this.poseInFlight || !this.poseDirty) return;
    this.nextPoseId += 1;
    this.socket!.send(JSON.stringify(orbitPose(this.orbit, this.nextPoseId)));
    this.poseInFlight = true;
    this.poseDirty = false;
  }

  private handleOpen(): void {
    this.open = true;
    this.poseInFlight = false;
    this.poseDirty = true; // resume from the current OrbitState
    this.pendingHeader = null;
    this.callbacks.onConnectionChange?.(true);
    this.maybeSendPose();
  }

  private handleClose(detail: string): void {
    this.socket = null;
    this.open = false;
    this.poseInFlight = false;
    this.pendingHeader = null;
    if (this.closedByUser) return;
    this.callbacks.onConnectionChange?.(false, detail);
    this.retryTimer = setTimeout(() => {
      this.retryTimer = null;
      this.connect();
    }, this.retryDelayMs);
  }

  private handleMessage(data: unknown): void {
    if (typeof data === "string") {
      this.handleText(data);
    } else if (data instanceof ArrayBuffer) {
      this.handleBody(new Uint8Array(data));
    } else if (ArrayBuffer.isView(data)) {
      const v = data as ArrayBufferView;
      this.handleBody(new Uint8Array(v.buffer, v.byteOffset, v.byteLength));
    } else {
      this.callbacks.onClientError?.("unrecognized websocket payload");
    }
  }

  private handleText(text: string): void {
    let msg;
    try {
      msg = parseServerMessage(text);
    } catch (e) {
      this.callbacks.onClientError?.(String(e));
      return;
    }
    if (msg.type === "error") {
      // A rejected message never produces a frame; release the slot so
      // the next pose is not stuck behind a lost acknowledgement.
      this.poseInFlight = false;
      this.callbacks.onServerError?.(msg.message);
      this.maybeSendPose();
      return;
    }
    this.pendingHeader = msg;
    this.poseInFlight = false;
    this.maybeSendPose();
  }

  private handleBody(body: Uint8Array): void {
    const header = this.pendingHeader;
    this.pendingHeader = null;
    if (header === null) {
      this.callbacks.onClientError?.("frame body without a header; discarded");
      return;
    }
    const expected = header.width * header.height * 3;
    if (body.byteLength !== expected) {
      this.callbacks.onClientError?.(
        `frame ${header.id}: body is ${body.byteLength} bytes, ` +
          `expected ${expected}; discarded`,
      );
      return;
    }
    if (header.id <= this.lastFrameId) return; // duplicate or out of order
    if (header.pose_id < this.lastPoseId) return; // stale pose
    this.lastFrameId = header.id;
    this.lastPoseId = header.pose_id;
    this.callbacks.onFrame(header, body);
  }
}
