import { describe, expect, it } from "vitest";

import { formatPercent, formatStats } from "../src/stats.js";

describe("stats panel", () => {
  it("renders culled_fraction as a percentage", () => {
    expect(formatPercent(0.375)).toBe("37.5%");
    const lines = formatStats({ culled_fraction: 0.375 });
    expect(lines).toContain("culled 37.5%");
  });

  it("shows only server-reported values", () => {
    const lines = formatStats({ segments: 99, render_ms: 4.25 });
    expect(lines).toEqual(["segments 99", "render 4.3 ms"]);
  });

  it("prefixes the round-trip latency when given", () => {
    expect(formatStats({}, 41.7)[0]).toBe("latency 42 ms");
  });
});
