import { afterEach, beforeEach, describe, expect, it, vi } from "vitest";

import type { OrbitState } from "../src/orbit.js";
import type { FrameHeader } from "../src/protocol.js";
import { ViewerSession } from "../src/session.js";
import { body2x2, mockFactory, type MockSocket } from "./mockSocket.js";

const ORBIT: OrbitState = {
  target: [0, 0, 2],
  distance: 12,
  azimuth: 0.6,
  elevation: 0.4,
  fov: Math.PI / 4,
};

interface Harness {
  session: ViewerSession;
  sockets: MockSocket[];
  frames: Array<{ header: FrameHeader; body: Uint8Array }>;
  serverErrors: string[];
  clientErrors: string[];
  connection: Array<boolean>;
}

function makeHarness(opts: { retryDelayMs?: number } = {}): Harness {
  const { factory, sockets } = mockFactory();
  const frames: Harness["frames"] = [];
  const serverErrors: string[] = [];
  const clientErrors: string[] = [];
  const connection: boolean[] = [];
  const session = new ViewerSession({
    url: "ws://test",
    orbit: ORBIT,
    socketFactory: factory,
    retryDelayMs: opts.retryDelayMs ?? 50,
    callbacks: {
      onFrame: (header, body) => frames.push({ header, body }),
      onServerError: (m) => serverErrors.push(m),
      onClientError: (m) => clientErrors.push(m),
      onConnectionChange: (c) => connection.push(c),
    },
  });
  return { session, sockets, frames, serverErrors, clientErrors, connection };
}

beforeEach(() => vi.useFakeTimers());
afterEach(() => vi.useRealTimers());

describe("connect", () => {
  it("sends exactly one initial pose once the socket opens", () => {
    const h = makeHarness();
    h.session.connect();
    expect(h.sockets[0].sent).toHaveLength(0);
    h.sockets[0].open();
    const poses = h.sockets[0].poses();
    expect(poses).toHaveLength(1);
    expect(poses[0].id).toBe(1);
    expect(poses[0].up).toEqual([0, 0, 1]);
    // deterministic mapping from OrbitState
    const ce = Math.cos(ORBIT.elevation);
    expect(poses[0].position[0]).toBeCloseTo(12 * ce * Math.cos(0.6), 12);
    expect(poses[0].position[2]).toBeCloseTo(2 + 12 * Math.sin(0.4), 12);
    expect(h.connection).toEqual([true]);
  });

  it("requests binary frames as arraybuffers", () => {
    const h = makeHarness();
    h.session.connect();
    expect(h.sockets[0].binaryType).toBe("arraybuffer");
  });
});

describe("pose throttling (latest wins)", () => {
  it("keeps at most one unacknowledged pose over a 50-drag burst", () => {
    const h = makeHarness();
    h.session.connect();
    const ws = h.sockets[0];
    ws.open();
    let acked = 0;
    for (let i = 0; i < 50; i++) {
      h.session.updateOrbit({ azimuth: ORBIT.azimuth + (i + 1) * 0.01 });
      expect(ws.poses().length - acked).toBeLessThanOrEqual(1);
    }
    // nothing extra went out while the initial pose was unacknowledged
    expect(ws.poses()).toHaveLength(1);
    ws.serverFrame({ id: 1, pose_id: 1 }, body2x2());
    acked = 2;
    // the acknowledgement flushes one pose carrying the latest state
    const poses = ws.poses();
    expect(poses).toHaveLength(2);
    expect(poses[1].id).toBe(2);
    const ce = Math.cos(ORBIT.elevation);
    expect(poses[1].position[0]).toBeCloseTo(
      12 * ce * Math.cos(ORBIT.azimuth + 50 * 0.01), 12);
    // acknowledging that one sends nothing further: no drags are queued
    ws.serverFrame({ id: 2, pose_id: 2 }, body2x2());
    expect(ws.poses()).toHaveLength(2);
  });

  it("releases the in-flight slot when the server rejects a message", () => {
    const h = makeHarness();
    h.session.connect();
    const ws = h.sockets[0];
    ws.open();
    h.session.updateOrbit({ distance: 13 });
    ws.serverJson({ type: "error", message: "bad pose: nope" });
    expect(h.serverErrors).toEqual(["bad pose: nope"]);
    expect(ws.poses()).toHaveLength(2); // queued update went out after the error
  });
});

describe("display rules", () => {
  function openSession() {
    const h = makeHarness();
    h.session.connect();
    const ws = h.sockets[0];
    ws.open();
    ws.serverFrame({ id: 1, pose_id: 1 }, body2x2(1));
    return { h, ws };
  }

  it("displays the received bytes untouched (checksum identity)", () => {
    const { h } = openSession();
    const sent = body2x2(1);
    expect(h.frames).toHaveLength(1);
    expect(Array.from(h.frames[0].body)).toEqual(Array.from(sent));
  });

  it("displays each frame id exactly once", () => {
    const { h, ws } = openSession();
    ws.serverFrame({ id: 1, pose_id: 1 }, body2x2(9));
    expect(h.frames).toHaveLength(1);
    expect(Array.from(h.frames[0].body)).toEqual(Array.from(body2x2(1)));
  });

  it("never lets an out-of-order frame overwrite a newer one", () => {
    const { h, ws } = openSession();
    ws.serverFrame({ id: 3, pose_id: 3 }, body2x2(3));
    ws.serverFrame({ id: 2, pose_id: 2 }, body2x2(2));
    expect(h.frames.map((f) => f.header.id)).toEqual([1, 3]);
  });

  it("drops frames with a stale pose_id", () => {
    const { h, ws } = openSession();
    ws.serverFrame({ id: 2, pose_id: 5 }, body2x2(5));
    ws.serverFrame({ id: 3, pose_id: 4 }, body2x2(4));
    expect(h.frames.map((f) => f.header.pose_id)).toEqual([1, 5]);
    // displayed pose ids stay monotone
    const ids = h.frames.map((f) => f.header.pose_id);
    expect([...ids].sort((a, b) => a - b)).toEqual(ids);
  });

  it("discards and logs a body whose size disagrees with its header", () => {
    const { h, ws } = openSession();
    ws.serverJson({ type: "frame_header", id: 2, pose_id: 2,
                    width: 2, height: 2, stats: {} });
    ws.serverBinary(new Uint8Array(7));
    expect(h.frames).toHaveLength(1);
    expect(h.clientErrors).toHaveLength(1);
    expect(h.clientErrors[0]).toMatch(/expected 12/);
    // the session recovers: the next well-formed frame displays
    ws.serverFrame({ id: 3, pose_id: 3 }, body2x2(3));
    expect(h.frames.map((f) => f.header.id)).toEqual([1, 3]);
  });

  it("discards a body that arrives without a header", () => {
    const { h, ws } = openSession();
    ws.serverBinary(body2x2(2));
    expect(h.frames).toHaveLength(1);
    expect(h.clientErrors[0]).toMatch(/without a header/);
  });
});

describe("reconnect", () => {
  it("shows a banner on drop and resumes from the current OrbitState", () => {
    const h = makeHarness({ retryDelayMs: 50 });
    h.session.connect();
    h.sockets[0].open();
    h.sockets[0].serverFrame({ id: 1, pose_id: 1 }, body2x2());
    h.session.updateOrbit({ azimuth: 1.25 });

    h.sockets[0].drop();
    expect(h.connection).toEqual([true, false]);
    expect(h.sockets).toHaveLength(1);

    vi.advanceTimersByTime(60);
    expect(h.sockets).toHaveLength(2);
    h.sockets[1].open();
    expect(h.connection).toEqual([true, false, true]);

    const poses = h.sockets[1].poses();
    expect(poses).toHaveLength(1);
    const ce = Math.cos(ORBIT.elevation);
    expect(poses[0].position[0]).toBeCloseTo(12 * ce * Math.cos(1.25), 12);
    // pose ids keep increasing across the reconnect
    expect(poses[0].id).toBeGreaterThan(2);
  });

  it("does not retry after an intentional close", () => {
    const h = makeHarness({ retryDelayMs: 50 });
    h.session.connect();
    h.sockets[0].open();
    h.session.close();
    vi.advanceTimersByTime(500);
    expect(h.sockets).toHaveLength(1);
  });
});

describe("set messages", () => {
  it("forwards parameter changes as set messages", () => {
    const h = makeHarness();
    h.session.connect();
    h.sockets[0].open();
    h.session.setParam("alpha", "0.1");
    expect(h.sockets[0].sets()).toEqual([
      { type: "set", key: "alpha", value: "0.1" },
    ]);
  });
});
