/**
 * Collaborative filtering via non-negative matrix factorization with
 * fixed-iteration multiplicative updates (R ≈ W·H).
 */

import { Catalog } from "./catalog.js";
import { Rng } from "./rng.js";

export const FACTOR_RANK = 4;
export const FACTOR_ITERATIONS = 120;
const EPSILON = 1e-9;

export interface Factorization {
  w: number[][]; // users x rank
  h: number[][]; // rank x movies
}

function zeros(rows: number, cols: number): number[][] {
  return Array.from({ length: rows }, () => new Array<number>(cols).fill(0));
}

function randomMatrix(rows: number, cols: number, rng: Rng): number[][] {
  return Array.from({ length: rows }, () =>
    Array.from({ length: cols }, () => 0.1 + rng.next())
  );
}

function matmul(a: number[][], b: number[][]): number[][] {
  const out = zeros(a.length, b[0].length);
  for (let i = 0; i < a.length; i++) {
    for (let k = 0; k < b.length; k++) {
      const aik = a[i][k];
      if (aik === 0) continue;
      for (let j = 0; j < b[0].length; j++) {
        out[i][j] += aik * b[k][j];
      }
    }
  }
  return out;
}

function transpose(a: number[][]): number[][] {
  const out = zeros(a[0].length, a.length);
  for (let i = 0; i < a.length; i++) {
    for (let j = 0; j < a[0].length; j++) out[j][i] = a[i][j];
  }
  return out;
}

function updateStep(r: number[][], w: number[][], h: number[][]): Factorization {
  const wt = transpose(w);
  const hNumerator = matmul(wt, r);
  const hDenominator = matmul(matmul(wt, w), h);
  const h1 = h.map((row, i) =>
    row.map((x, j) => (x * hNumerator[i][j]) / (hDenominator[i][j] + EPSILON))
  );
  const ht = transpose(h1);
  const wNumerator = matmul(r, ht);
  const wDenominator = matmul(w, matmul(h1, ht));
  const w1 = w.map((row, i) =>
    row.map((x, j) => (x * wNumerator[i][j]) / (wDenominator[i][j] + EPSILON))
  );
  return { w: w1, h: h1 };
}

export function factorize(
  r: number[][],
  rank: number,
  iterations: number,
  seed: number
): Factorization {
  const rng = new Rng(seed);
  let w = randomMatrix(r.length, rank, rng);
  let h = randomMatrix(rank, r[0].length, rng);
  for (let iter = 0; iter < iterations; iter++) {
    ({ w, h } = updateStep(r, w, h));
  }
  return { w, h };
}

export function reconstructionError(r: number[][], f: Factorization): number {
  const approx = matmul(f.w, f.h);
  let sum = 0;
  let count = 0;
  for (let i = 0; i < r.length; i++) {
    for (let j = 0; j < r[0].length; j++) {
      sum += (r[i][j] - approx[i][j]) ** 2;
      count++;
    }
  }
  return Math.sqrt(sum / count);
}

export interface Recommendation {
  id: number;
  score: number;
}

/**
 * The severity knob runs extra update iterations on cloned throwaway
 * factor buffers; recommendations are computed from the fixed-iteration
 * factorization and are byte-identical across severities.
 */
export function topForUser(
  catalog: Catalog,
  userId: number,
  count: number,
  severityPct = 0
): Recommendation[] | null {
  const user = catalog.users.find((u) => u.id === userId);
  if (!user) return null;
  const r = catalog.users.map((u) => u.preferences.map((p) => p));
  const factors = factorize(r, FACTOR_RANK, FACTOR_ITERATIONS, catalog.seed ^ 0xabcd);

  if (severityPct > 0) {
    const extra = Math.ceil((FACTOR_ITERATIONS * severityPct) / 100);
    let w = factors.w.map((row) => [...row]);
    let h = factors.h.map((row) => [...row]);
    for (let iter = 0; iter < extra; iter++) {
      ({ w, h } = updateStep(r, w, h)); // discarded
    }
  }

  const index = catalog.users.findIndex((u) => u.id === userId);
  const predicted = catalog.movies.map((movie, j) => {
    let score = 0;
    for (let k = 0; k < FACTOR_RANK; k++) {
      score += factors.w[index][k] * factors.h[k][j];
    }
    return { id: movie.id, score };
  });
  return predicted
    .sort((a, b) => b.score - a.score || a.id - b.id)
    .slice(0, count);
}
