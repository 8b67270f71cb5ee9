/**
 * In-process span recorder.
 *
 * Request context (the duet sequence number from the `X-Duet-Seq`
 * header) is propagated with AsyncLocalStorage; `globalThis.__duet_begin`
 * / `__duet_end` hooks record spans and batch them to an NDJSON file.
 * Recorder failures are swallowed and counted — they never fail a
 * request. Unclosed spans are force-closed when the request ends, so a
 * span is recorded even when an exception skips its end hook.
 *
 * Timestamps are epoch nanoseconds built from a wall-clock anchor plus
 * the monotonic clock, serialized as raw integer literals (they exceed
 * 2^53, so JSON.stringify on numbers would lose precision).
 */

import { AsyncLocalStorage } from "node:async_hooks";
import { randomBytes } from "node:crypto";
import { appendFileSync } from "node:fs";
import type { NextFunction, Request, Response } from "express";

const WALL_ANCHOR_NS = BigInt(Date.now()) * 1_000_000n;
const MONO_ANCHOR_NS = process.hrtime.bigint();

function nowUnixNs(): bigint {
  return WALL_ANCHOR_NS + (process.hrtime.bigint() - MONO_ANCHOR_NS);
}

interface OpenSpan {
  name: string;
  spanId: string;
  parentSpanId: string | null;
  startNs: bigint;
  attributes: Record<string, string>;
}

interface RequestContext {
  requestSeq: number;
  traceId: string;
  stack: OpenSpan[];
}

declare global {
  // eslint-disable-next-line no-var
  var __duet_begin:
    | ((name: string, attributes?: Record<string, string>) => void)
    | undefined;
  // eslint-disable-next-line no-var
  var __duet_end: ((name: string) => void) | undefined;
}

export interface RecorderOptions {
  outPath: string;
  versionTag: string;
  batchSize?: number;
}

export class SpanRecorder {
  readonly outPath: string;
  readonly versionTag: string;
  readonly batchSize: number;
  failures = 0;
  private buffer: string[] = [];
  private storage = new AsyncLocalStorage<RequestContext>();

  constructor(options: RecorderOptions) {
    this.outPath = options.outPath;
    this.versionTag = options.versionTag;
    this.batchSize = options.batchSize ?? 256;
  }

  /** Express middleware establishing the request-scoped span context. */
  middleware() {
    return (req: Request, res: Response, next: NextFunction): void => {
      const rawSeq = req.header("x-duet-seq");
      const requestSeq = rawSeq !== undefined ? Number.parseInt(rawSeq, 10) : 0;
      const context: RequestContext = {
        requestSeq: Number.isFinite(requestSeq) && requestSeq >= 0 ? requestSeq : 0,
        traceId: randomBytes(16).toString("hex"),
        stack: [],
      };
      res.on("finish", () => this.closeAll(context));
      this.storage.run(context, next);
    };
  }

  /** Expose the hooks the instrumenter's inserted lines call. */
  install(): void {
    globalThis.__duet_begin = (name, attributes) => this.begin(name, attributes);
    globalThis.__duet_end = (name) => this.end(name);
  }

  begin(name: string, attributes: Record<string, string> = {}): void {
    try {
      const context = this.storage.getStore();
      if (!context) return;
      const parent = context.stack[context.stack.length - 1];
      context.stack.push({
        name,
        spanId: randomBytes(8).toString("hex"),
        parentSpanId: parent ? parent.spanId : null,
        startNs: nowUnixNs(),
        attributes,
      });
    } catch {
      this.failures++;
    }
  }

  end(name: string): void {
    try {
      const context = this.storage.getStore();
      if (!context) return;
      for (let i = context.stack.length - 1; i >= 0; i--) {
        if (context.stack[i].name === name) {
          const [span] = context.stack.splice(i, 1);
          this.write(context, span, nowUnixNs());
          return;
        }
      }
    } catch {
      this.failures++;
    }
  }

  /** Force-close anything an exception left open (end ≥ start holds). */
  private closeAll(context: RequestContext): void {
    const endNs = nowUnixNs();
    while (context.stack.length > 0) {
      const span = context.stack.pop()!;
      this.write(context, span, endNs);
    }
    this.flush();
  }

  private write(context: RequestContext, span: OpenSpan, endNs: bigint): void {
    try {
      // ns timestamps exceed 2^53: emit them as raw integer literals
      const line =
        `{"trace_id":${JSON.stringify(context.traceId)}` +
        `,"span_id":${JSON.stringify(span.spanId)}` +
        `,"parent_span_id":${span.parentSpanId ? JSON.stringify(span.parentSpanId) : "null"}` +
        `,"name":${JSON.stringify(span.name)}` +
        `,"start_unix_ns":${span.startNs.toString()}` +
        `,"end_unix_ns":${endNs.toString()}` +
        `,"attributes":${JSON.stringify(span.attributes)}` +
        `,"request_seq":${context.requestSeq}` +
        `,"version_tag":${JSON.stringify(this.versionTag)}}`;
      this.buffer.push(line);
      if (this.buffer.length >= this.batchSize) this.flush();
    } catch {
      this.failures++;
    }
  }

  flush(): void {
    if (this.buffer.length === 0) return;
    const payload = this.buffer.join("\n") + "\n";
    this.buffer = [];
    try {
      appendFileSync(this.outPath, payload);
    } catch {
      this.failures++;
    }
  }
}
