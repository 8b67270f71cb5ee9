/**
 * Region top list via a seeded random walk over the region's movie
 * graph (a simplified PageRank: visit counts over a finite walk with
 * teleport on dangling nodes and a damping restart).
 */

import { Catalog, RegionGraph } from "./catalog.js";
import { Rng } from "./rng.js";

const WALK_STEPS = 20000;
const DAMPING = 0.85;

export interface RegionHit {
  id: number;
  score: number;
}

function step(graph: RegionGraph, current: number, rng: Rng): number {
  const out = graph.edges.get(current) ?? [];
  if (out.length === 0 || rng.next() > DAMPING) {
    return graph.nodes[rng.int(graph.nodes.length)];
  }
  const total = out.reduce((acc, e) => acc + e.weight, 0);
  let roll = rng.next() * total;
  for (const edge of out) {
    roll -= edge.weight;
    if (roll <= 0) return edge.to;
  }
  return out[out.length - 1].to;
}

/**
 * The severity knob shuffles throwaway clones of the internal node list
 * during the walk; scores are computed before any knob work, so results
 * are identical across severities.
 */
export function topRegion(
  catalog: Catalog,
  region: string,
  count: number,
  severityPct = 0
): RegionHit[] | null {
  const graph = catalog.regions.get(region);
  if (!graph) return null;

  const rng = new Rng(catalog.seed ^ 0x9e3779b9);
  const visits = new Map<number, number>();
  let current = graph.nodes[rng.int(graph.nodes.length)];
  for (let s = 0; s < WALK_STEPS; s++) {
    visits.set(current, (visits.get(current) ?? 0) + 1);
    current = step(graph, current, rng);
  }

  if (severityPct > 0) {
    // extra effort proportional to severity: repeated shuffles of a
    // cloned node list, results discarded
    const shuffleRng = new Rng(catalog.seed ^ 0x51ed2701);
    const passes = Math.ceil((severityPct * WALK_STEPS) / 1000);
    for (let p = 0; p < passes; p++) {
      shuffleRng.shuffle([...graph.nodes]);
    }
  }

  return [...visits.entries()]
    .map(([id, n]) => ({ id, score: n / WALK_STEPS }))
    .sort((a, b) => b.score - a.score || a.id - b.id)
    .slice(0, count);
}
