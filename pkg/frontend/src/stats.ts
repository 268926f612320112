/** Stats panel formatting. Every displayed value comes verbatim from
 * frame_header.stats; nothing is recomputed client-side. */

import type { SessionStats } from "./protocol.js";

const STAGE_TIMES: Array<[keyof SessionStats, string]> = [
  ["cull_ms", "cull"],
  ["abuffer_ms", "a-buffer"],
  ["shading_ms", "shading"],
  ["render_ms", "render"],
];

export function formatPercent(fraction: number): string {
  return `${(100 * fraction).toFixed(1)}%`;
}

export function formatStats(stats: SessionStats, latencyMs?: number): string[] {
  const lines: string[] = [];
  if (latencyMs !== undefined) lines.push(`latency ${latencyMs.toFixed(0)} ms`);
  if (stats.segments !== undefined) lines.push(`segments ${stats.segments}`);
  if (stats.resolution !== undefined) lines.push(`grid ${stats.resolution}³`);
  if (stats.fragments !== undefined) lines.push(`fragments ${stats.fragments}`);
  if (stats.culled_fraction !== undefined) {
    lines.push(`culled ${formatPercent(stats.culled_fraction)}`);
  }
  if (stats.ray_capsule_tests !== undefined) {
    lines.push(`ray tests ${stats.ray_capsule_tests}`);
  }
  for (const [key, label] of STAGE_TIMES) {
    const v = stats[key];
    if (v !== undefined) lines.push(`${label} ${v.toFixed(1)} ms`);
  }
  return lines;
}
