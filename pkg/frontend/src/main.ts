/** Page wiring: connects the session to the canvas, the stats panel,
 * and the input controls. The server URL comes from the `?server=`
 * query parameter. */

import { CanvasDisplay } from "./display.js";
import type { OrbitState } from "./orbit.js";
import { ViewerSession } from "./session.js";
import { formatStats } from "./stats.js";

const DRAG_SENSITIVITY = 0.01; // radians per pixel
const WHEEL_SCALE = 1.1; // distance factor per wheel notch

function element<T extends HTMLElement>(id: string): T {
  const el = document.getElementById(id);
  if (el === null) throw new Error(`missing element #${id}`);
  return el as T;
}

function main(): void {
  const params = new URLSearchParams(window.location.search);
  const url = params.get("server") ?? "ws://127.0.0.1:8765";

  const canvas = element<HTMLCanvasElement>("frame");
  const banner = element<HTMLDivElement>("banner");
  const statsPanel = element<HTMLPreElement>("stats");
  const display = new CanvasDisplay(canvas);

  // The protocol has no scene-bounds message, so the initial framing is
  // the client's choice: defaults suit the default helix dataset and can
  // be overridden with ?target=x,y,z&distance=d for other scenes.
  const target = (params.get("target") ?? "0,0,2")
    .split(",")
    .map(Number) as [number, number, number];
  const orbit: OrbitState = {
    target,
    distance: Number(params.get("distance") ?? 12),
    azimuth: 0.6,
    elevation: 0.4,
    fov: Math.PI / 4,
  };

  let lastPoseSentAt = performance.now();
  const session = new ViewerSession({
    url,
    orbit,
    socketFactory: (u) => new WebSocket(u),
    callbacks: {
      onFrame: (header, body) => {
        display.draw(header, body);
        const latency = performance.now() - lastPoseSentAt;
        statsPanel.textContent = formatStats(header.stats, latency).join("\n");
      },
      onServerError: (message) => {
        console.warn(`server: ${message}`);
      },
      onClientError: (message) => {
        console.error(message);
      },
      onConnectionChange: (connected, detail) => {
        banner.hidden = connected;
        if (!connected) {
          banner.textContent = `disconnected (${detail ?? "unknown"}), retrying…`;
        }
      },
    },
  });

  let dragging = false;
  canvas.addEventListener("pointerdown", (ev) => {
    dragging = true;
    canvas.setPointerCapture(ev.pointerId);
  });
  canvas.addEventListener("pointerup", () => {
    dragging = false;
  });
  canvas.addEventListener("pointermove", (ev) => {
    if (!dragging) return;
    lastPoseSentAt = performance.now();
    session.updateOrbit({
      azimuth: session.orbit.azimuth + ev.movementX * DRAG_SENSITIVITY,
      elevation: session.orbit.elevation - ev.movementY * DRAG_SENSITIVITY,
    });
  });
  canvas.addEventListener("wheel", (ev) => {
    ev.preventDefault();
    lastPoseSentAt = performance.now();
    const factor = ev.deltaY > 0 ? WHEEL_SCALE : 1 / WHEEL_SCALE;
    session.updateOrbit({ distance: session.orbit.distance * factor });
  });

  const bind = (id: string, key: string) => {
    const input = element<HTMLInputElement | HTMLSelectElement>(id);
    input.addEventListener("change", () => {
      session.setParam(key, String(input.value));
    });
  };
  bind("alpha", "alpha");
  bind("k", "k");
  bind("method", "method");
  bind("strategy", "strategy");
  bind("resolution", "res");
  element<HTMLSelectElement>("mode").addEventListener("change", (ev) => {
    session.setParam("mode", (ev.target as HTMLSelectElement).value);
  });

  session.connect();
}

main();
