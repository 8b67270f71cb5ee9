import { describe, expect, it } from "vitest";
import { buildCatalog, Catalog, embed } from "../src/catalog.js";
import { hybridSearch } from "../src/search.js";

function emptyCatalog(): Catalog {
  return { seed: 1, movies: [], users: [], regions: new Map() };
}

describe("hybridSearch", () => {
  it("returns an empty list on an empty catalog", () => {
    expect(hybridSearch(emptyCatalog(), "anything", 10)).toEqual([]);
  });

  it("ranks an exact title match first", () => {
    // one movie owns the query tokens outright; the others share nothing
    // with it, so both BM25 and the embedding kNN must rank it first
    const catalog: Catalog = {
      seed: 1,
      users: [],
      regions: new Map(),
      movies: [
        {
          id: 0,
          title: "crimson orchid returns",
          description: "crimson orchid returns",
          vector: embed("crimson orchid returns crimson orchid returns"),
        },
        {
          id: 1,
          title: "distant harbor",
          description: "gentle voyage drifts",
          vector: embed("distant harbor gentle voyage drifts"),
        },
        {
          id: 2,
          title: "frozen signal",
          description: "electric machine burns",
          vector: embed("frozen signal electric machine burns"),
        },
      ],
    };
    const hits = hybridSearch(catalog, "crimson orchid returns", 3);
    expect(hits[0].id).toBe(0);
  });

  it("is deterministic for a fixed seed", () => {
    const catalog = buildCatalog(42);
    const a = hybridSearch(catalog, "golden river", 10);
    const b = hybridSearch(buildCatalog(42), "golden river", 10);
    expect(a).toEqual(b);
  });

  it("returns identical bodies at severity 0 and 100", () => {
    const catalog = buildCatalog(7);
    const calm = hybridSearch(catalog, "midnight echo", 10, 0);
    const stressed = hybridSearch(catalog, "midnight echo", 10, 100);
    expect(JSON.stringify(stressed)).toBe(JSON.stringify(calm));
  });
});
