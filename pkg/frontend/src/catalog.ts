/**
 * In-memory catalog prefilled deterministically at startup: movies with
 * d=32 pseudo-embeddings, users with preference vectors, and per-region
 * adjacency graphs for the random-walk ranking.
 */

import { Rng } from "./rng.js";

export const EMBEDDING_DIM = 32;

export interface Movie {
  id: number;
  title: string;
  description: string;
  vector: number[]; // unit-normalized pseudo-embedding
}

export interface User {
  id: number;
  /** Preference score per movie id (sparse entries are 0). */
  preferences: number[];
}

export interface RegionGraph {
  /** Movie ids present in the region. */
  nodes: number[];
  /** node -> weighted outgoing edges */
  edges: Map<number, { to: number; weight: number }[]>;
}

export interface Catalog {
  seed: number;
  movies: Movie[];
  users: User[];
  regions: Map<string, RegionGraph>;
}

const ADJECTIVES = [
  "silent", "crimson", "lost", "electric", "midnight", "golden",
  "broken", "distant", "hidden", "savage", "gentle", "frozen",
];
const NOUNS = [
  "river", "empire", "garden", "signal", "horizon", "echo",
  "harbor", "machine", "orchid", "voyage", "shadow", "comet",
];
const VERBS = [
  "returns", "falls", "awakens", "burns", "drifts", "remembers",
  "escapes", "dreams", "collides", "vanishes",
];

function fnv1a(text: string): number {
  let hash = 0x811c9dc5;
  for (let i = 0; i < text.length; i++) {
    hash ^= text.charCodeAt(i);
    hash = Math.imul(hash, 0x01000193) >>> 0;
  }
  return hash >>> 0;
}

export function tokenize(text: string): string[] {
  return text
    .toLowerCase()
    .split(/[^a-z0-9]+/)
    .filter((t) => t.length > 0);
}

/**
 * Deterministic hash-to-vector pseudo-embedding: each token adds mass to
 * two buckets derived from its hash; the result is unit-normalized.
 */
export function embed(text: string): number[] {
  const vector = new Array<number>(EMBEDDING_DIM).fill(0);
  for (const token of tokenize(text)) {
    const hash = fnv1a(token);
    vector[hash % EMBEDDING_DIM] += 1;
    vector[(hash >>> 8) % EMBEDDING_DIM] += 0.5;
  }
  let norm = Math.sqrt(vector.reduce((acc, x) => acc + x * x, 0));
  if (norm === 0) {
    vector[0] = 1;
    norm = 1;
  }
  return vector.map((x) => x / norm);
}

export function cosine(a: readonly number[], b: readonly number[]): number {
  let dot = 0;
  for (let i = 0; i < a.length; i++) dot += a[i] * b[i];
  return dot;
}

export interface CatalogOptions {
  movieCount?: number;
  userCount?: number;
  regionNames?: string[];
}

export function buildCatalog(seed: number, options: CatalogOptions = {}): Catalog {
  const { movieCount = 60, userCount = 24, regionNames = ["eu", "us", "asia"] } =
    options;
  const rng = new Rng(seed);

  const movies: Movie[] = [];
  const usedTitles = new Set<string>();
  for (let id = 0; id < movieCount; id++) {
    let title = "";
    do {
      title = `${rng.pick(ADJECTIVES)} ${rng.pick(NOUNS)} ${rng.pick(VERBS)}`;
    } while (usedTitles.has(title));
    usedTitles.add(title);
    const description = Array.from(
      { length: 6 + rng.int(8) },
      () => rng.pick([...ADJECTIVES, ...NOUNS, ...VERBS])
    ).join(" ");
    movies.push({
      id,
      title,
      description,
      vector: embed(`${title} ${description}`),
    });
  }

  const users: User[] = [];
  for (let id = 0; id < userCount; id++) {
    const preferences = new Array<number>(movieCount).fill(0);
    const rated = 5 + rng.int(10);
    for (let r = 0; r < rated; r++) {
      preferences[rng.int(movieCount)] = 1 + rng.int(5);
    }
    users.push({ id, preferences });
  }

  const regions = new Map<string, RegionGraph>();
  for (const name of regionNames) {
    const nodes = movies
      .filter(() => rng.next() < 0.6)
      .map((m) => m.id);
    if (nodes.length === 0) nodes.push(rng.int(movieCount));
    const edges = new Map<number, { to: number; weight: number }[]>();
    for (const from of nodes) {
      const out: { to: number; weight: number }[] = [];
      const degree = 1 + rng.int(4);
      for (let e = 0; e < degree; e++) {
        out.push({ to: rng.pick(nodes), weight: 1 + rng.int(3) });
      }
      edges.set(from, out);
    }
    regions.set(name, { nodes, edges });
  }

  return { seed, movies, users, regions };
}
