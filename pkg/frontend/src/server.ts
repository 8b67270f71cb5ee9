/**
 * HTTP service: hybrid movie search, region top lists, and per-user
 * recommendations, with a severity knob (`SEVERITY_PCT`) that adds
 * latency-only extra effort and a span recorder writing NDJSON.
 *
 * Environment: TESTBED_SEED, SEVERITY_PCT, SPAN_OUT_PATH, VERSION_TAG, PORT.
 */

import express, { Express } from "express";
import { buildCatalog, Catalog } from "./catalog.js";
import { hybridSearch } from "./search.js";
import { topRegion } from "./region.js";
import { topForUser } from "./recommend.js";
import { SpanRecorder } from "./recorder.js";

export interface AppOptions {
  seed?: number;
  severityPct?: number;
  spanOutPath?: string;
  versionTag?: string;
}

export interface App {
  app: Express;
  catalog: Catalog;
  recorder: SpanRecorder | null;
}

export function createApp(options: AppOptions = {}): App {
  const seed = options.seed ?? 1;
  const severityPct = options.severityPct ?? 0;
  const catalog = buildCatalog(seed);

  let recorder: SpanRecorder | null = null;
  if (options.spanOutPath) {
    recorder = new SpanRecorder({
      outPath: options.spanOutPath,
      versionTag: options.versionTag ?? "A",
    });
    recorder.install();
  }

  const app = express();
  if (recorder) app.use(recorder.middleware());

  app.get("/healthz", (_req, res) => {
    res.status(200).json({ status: "ok" });
  });

  app.get("/search", (req, res) => {
    const query = typeof req.query.q === "string" ? req.query.q : "";
    if (!query) {
      res.status(400).json({ error: "q is required" });
      return;
    }
    const limit = Math.max(
      1,
      Number.parseInt(String(req.query.limit ?? "10"), 10) || 10
    );
    res.json({ results: hybridSearch(catalog, query, limit, severityPct) });
  });

  app.get("/top/region/:region/:count", (req, res) => {
    const count = Math.max(1, Number.parseInt(req.params.count, 10) || 10);
    const hits = topRegion(catalog, req.params.region, count, severityPct);
    if (hits === null) {
      res.status(404).json({ error: `unknown region ${req.params.region}` });
      return;
    }
    res.json({ results: hits });
  });

  app.get("/top/user/:userId/:count", (req, res) => {
    const userId = Number.parseInt(req.params.userId, 10);
    const count = Math.max(1, Number.parseInt(req.params.count, 10) || 10);
    const hits = topForUser(catalog, userId, count, severityPct);
    if (hits === null) {
      res.status(404).json({ error: `unknown user ${req.params.userId}` });
      return;
    }
    res.json({ results: hits });
  });

  return { app, catalog, recorder };
}

const isMain =
  process.argv[1] !== undefined &&
  import.meta.url === new URL(`file://${process.argv[1]}`).href;

if (isMain) {
  const { app, recorder } = createApp({
    seed: Number.parseInt(process.env.TESTBED_SEED ?? "1", 10),
    severityPct: Number.parseInt(process.env.SEVERITY_PCT ?? "0", 10),
    spanOutPath: process.env.SPAN_OUT_PATH,
    versionTag: process.env.VERSION_TAG ?? "A",
  });
  const port = Number.parseInt(process.env.PORT ?? "3000", 10);
  app.listen(port, () => {
    console.log(`listening on ${port}`);
  });
  process.on("SIGTERM", () => {
    recorder?.flush();
    process.exit(0);
  });
}
