/** Canvas frame display: received sRGB bytes drawn 1:1, no resampling. */

import type { FrameHeader } from "./protocol.js";

export class CanvasDisplay {
  private readonly canvas: HTMLCanvasElement;
  private readonly ctx: CanvasRenderingContext2D;

  constructor(canvas: HTMLCanvasElement) {
    this.canvas = canvas;
    const ctx = canvas.getContext("2d");
    if (ctx === null) throw new Error("2d canvas context unavailable");
    this.ctx = ctx;
  }

  /** Draw the frame at native size; the canvas is resized to match so
   * each transmitted pixel maps to exactly one canvas pixel. */
  draw(header: FrameHeader, body: Uint8Array): void {
    const { width, height } = header;
    if (this.canvas.width !== width) this.canvas.width = width;
    if (this.canvas.height !== height) this.canvas.height = height;
    const rgba = new Uint8ClampedArray(width * height * 4);
    for (let i = 0, j = 0; j < rgba.length; i += 3, j += 4) {
      rgba[j] = body[i];
      rgba[j + 1] = body[i + 1];
      rgba[j + 2] = body[i + 2];
      rgba[j + 3] = 255;
    }
    this.ctx.putImageData(new ImageData(rgba, width, height), 0, 0);
  }
}
