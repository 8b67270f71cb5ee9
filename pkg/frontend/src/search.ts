/**
 * Hybrid search: BM25 over title+description fused with cosine kNN over
 * the pseudo-embeddings via rank sum (lower fused rank wins).
 */

import { Catalog, Movie, cosine, embed, tokenize } from "./catalog.js";

const BM25_K1 = 1.2;
const BM25_B = 0.75;

/** Candidate pool size per retrieval stage, as a multiple of `limit`. */
export const CANDIDATE_FACTOR = 4;

export interface SearchHit {
  id: number;
  title: string;
  score: number;
}

interface Scored {
  movie: Movie;
  score: number;
}

function documentTokens(movie: Movie): string[] {
  return tokenize(`${movie.title} ${movie.description}`);
}

export function bm25Scores(
  query: string,
  movies: readonly Movie[],
  candidateLimit: number
): Scored[] {
  const docs = movies.map(documentTokens);
  const avgLength =
    docs.reduce((acc, d) => acc + d.length, 0) / Math.max(1, docs.length);
  const queryTokens = tokenize(query);

  const documentFrequency = new Map<string, number>();
  for (const term of new Set(queryTokens)) {
    let df = 0;
    for (const doc of docs) if (doc.includes(term)) df++;
    documentFrequency.set(term, df);
  }

  const scored: Scored[] = movies.map((movie, i) => {
    const doc = docs[i];
    let score = 0;
    for (const term of queryTokens) {
      const df = documentFrequency.get(term) ?? 0;
      if (df === 0) continue;
      const idf = Math.log(1 + (movies.length - df + 0.5) / (df + 0.5));
      const tf = doc.filter((t) => t === term).length;
      score +=
        (idf * tf * (BM25_K1 + 1)) /
        (tf + BM25_K1 * (1 - BM25_B + (BM25_B * doc.length) / avgLength));
    }
    return { movie, score };
  });

  return scored
    .filter((s) => s.score > 0)
    .sort((a, b) => b.score - a.score || a.movie.id - b.movie.id)
    .slice(0, candidateLimit);
}

export function knnScores(
  query: string,
  movies: readonly Movie[],
  candidateLimit: number
): Scored[] {
  const queryVector = embed(query);
  return movies
    .map((movie) => ({ movie, score: cosine(queryVector, movie.vector) }))
    .sort((a, b) => b.score - a.score || a.movie.id - b.movie.id)
    .slice(0, candidateLimit);
}

/** Rank-sum fusion; missing candidates get rank = poolSize + 1. */
function fuse(limit: number, ...stages: Scored[][]): SearchHit[] {
  const fusedRank = new Map<number, number>();
  const byId = new Map<number, Movie>();
  for (const stage of stages) {
    const miss = stage.length + 1;
    const seen = new Set<number>();
    stage.forEach((s, rank) => {
      byId.set(s.movie.id, s.movie);
      fusedRank.set(s.movie.id, (fusedRank.get(s.movie.id) ?? 0) + rank + 1);
      seen.add(s.movie.id);
    });
    for (const id of fusedRank.keys()) {
      if (!seen.has(id)) fusedRank.set(id, (fusedRank.get(id) ?? 0) + miss);
    }
  }
  return [...fusedRank.entries()]
    .sort((a, b) => a[1] - b[1] || a[0] - b[0])
    .slice(0, limit)
    .map(([id, rank]) => ({
      id,
      title: byId.get(id)!.title,
      score: 1 / rank,
    }));
}

/**
 * The severity knob inflates the candidate limit used for extra,
 * discarded retrieval passes; the returned ranking never changes.
 */
export function hybridSearch(
  catalog: Catalog,
  query: string,
  limit: number,
  severityPct = 0
): SearchHit[] {
  const candidateLimit = limit * CANDIDATE_FACTOR;
  const bm25 = bm25Scores(query, catalog.movies, candidateLimit);
  const knn = knnScores(query, catalog.movies, candidateLimit);
  if (severityPct > 0) {
    const inflated = Math.round(candidateLimit * (1 + severityPct / 100));
    // throwaway passes over a larger pool: latency-only regression
    void bm25Scores(query, catalog.movies, inflated);
    void knnScores(query, catalog.movies, inflated);
  }
  return fuse(limit, bm25, knn);
}
