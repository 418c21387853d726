import { afterAll, beforeAll, describe, expect, it } from "vitest";
import { ApiClient, ApiError } from "../src/api.js";
import { FeedStore } from "../src/feed.js";
import { buildGraph } from "../src/graph.js";
import { EventStream } from "../src/sse.js";
import { ThreadStore } from "../src/threads.js";
import { startEngine, SUITE_SCENARIOS, type EngineHandle } from "./helpers.js";

/** Replay the whole control stream of a served run into a feed store. */
async function replayFeed(base: string, feed = new FeedStore()): Promise<FeedStore> {
  let resolveEnd!: () => void;
  const ended = new Promise<void>((resolve) => (resolveEnd = resolve));
  const stream = new EventStream(
    base,
    {
      onEvent: (id, event) => {
        feed.apply(id, event);
        if (event.event === "end") resolveEnd();
      },
    },
    200,
  );
  const running = stream.start(0);
  await ended;
  stream.stop();
  await running;
  return feed;
}

describe("alert feed against the replayed suite", () => {
  it("orders alerts exactly like the /alerts endpoint, for every scenario", async () => {
    let totalAlerts = 0;
    for (const scenario of SUITE_SCENARIOS) {
      const engine = await startEngine(scenario);
      try {
        const client = new ApiClient(engine.base);
        const feed = await replayFeed(engine.base);
        const page = await client.alerts(0);

        expect(feed.alertOrder()).toEqual(page.alerts.map((a) => a.alert_id));

        feed.applyAlertDetails(page);
        for (const alert of feed.alerts) {
          expect(alert.detail).not.toBeNull();
          expect(alert.detail!.pattern).toBe(alert.pattern);
          expect(alert.detail!.matched.length).toBeGreaterThan(0);
        }
        totalAlerts += feed.alerts.length;
      } finally {
        await engine.stop();
      }
    }
    expect(totalAlerts).toBe(7); // the streaming mode's suite-wide detections
  });
});

describe("served run surface", () => {
  let engine: EngineHandle;
  let client: ApiClient;

  beforeAll(async () => {
    engine = await startEngine("hit_and_run_1");
    client = new ApiClient(engine.base);
  });

  afterAll(async () => {
    await engine.stop();
  });

  it("refine nests a thread whose supporting triples are a subset of the parent's", async () => {
    const threads = new ThreadStore(client);
    const parent = await threads.submit("what happened about=p1 window=60s");
    expect(parent.error).toBeNull();
    expect(parent.answer).toBeTruthy();
    expect(parent.supporting.length).toBeGreaterThan(0);
    expect(threads.canRefine(parent)).toBe(true);

    const child = await threads.refine(parent, "focus=lying_on");
    expect(child.error).toBeNull();
    expect(parent.children[0]).toBe(child);
    expect(child.supporting.length).toBeGreaterThan(0);
    const parentUids = threads.supportingUids(parent);
    for (const uid of threads.supportingUids(child)) {
      expect(parentUids.has(uid)).toBe(true);
    }

    // dive one level deeper: the grandchild narrows the child
    const grandchild = await threads.refine(child, "window=5s");
    expect(grandchild.error).toBeNull();
    expect(child.children[0]).toBe(grandchild);
    const childUids = threads.supportingUids(child);
    for (const uid of threads.supportingUids(grandchild)) {
      expect(childUids.has(uid)).toBe(true);
    }

    // the server agrees the thread is nested parent→child
    const served = await client.thread(parent.queryId!);
    expect(served.children.map((c) => c.query_id)).toContain(child.queryId);
  });

  it("kg viewer node/edge counts equal the endpoint's entity/triple counts", async () => {
    const whole = await client.kg();
    const wholeGraph = buildGraph(whole.triples);
    expect(wholeGraph.nodes.length).toBe(whole.entities.length);
    expect(wholeGraph.edges.length).toBe(whole.count);
    expect(wholeGraph.nodes.map((n) => n.id).sort()).toEqual([...whole.entities].sort());

    const filtered = await client.kg({ predicate: "collided_with" });
    const filteredGraph = buildGraph(filtered.triples);
    expect(filteredGraph.nodes.length).toBe(filtered.entities.length);
    expect(filteredGraph.edges.length).toBe(filtered.count);
  });

  it("resumes the event stream from the cursor after an interruption", async () => {
    const feed = new FeedStore();
    const seen: number[] = [];

    // phase 1: read part of the replay, then drop the connection
    let cutResolve!: () => void;
    const cut = new Promise<void>((resolve) => (cutResolve = resolve));
    const first = new EventStream(
      engine.base,
      {
        onEvent: (id, event) => {
          feed.apply(id, event);
          seen.push(id);
          if (id >= 40) cutResolve();
        },
      },
      200,
    );
    const firstRun = first.start(0);
    await cut;
    first.stop();
    await firstRun;
    expect(feed.cursor).toBeGreaterThanOrEqual(40);
    expect(feed.end).toBeNull();

    // phase 2: resume strictly after the cursor
    let endResolve!: () => void;
    const endSeen = new Promise<void>((resolve) => (endResolve = resolve));
    const second = new EventStream(
      engine.base,
      {
        onEvent: (id, event) => {
          feed.apply(id, event);
          seen.push(id);
          if (event.event === "end") endResolve();
        },
      },
      200,
    );
    const secondRun = second.start(feed.cursor);
    await endSeen;
    second.stop();
    await secondRun;

    expect(feed.end).not.toBeNull();
    const max = Math.max(...seen);
    expect(new Set(seen).size).toBe(seen.length); // no duplicates
    expect(seen).toEqual(Array.from({ length: max }, (_, i) => i + 1));
  });

  it("surfaces DSL errors from the 400 body inline", async () => {
    const threads = new ThreadStore(client);
    const node = await threads.submit("x focus=warp");
    expect(node.answer).toBeNull();
    expect(node.error).toBeTruthy();
    expect(node.error!).toMatch(/warp/);
    expect(threads.canRefine(node)).toBe(false);

    await expect(client.submitInteractive("x focus=warp")).rejects.toSatisfy(
      (err: unknown) => err instanceof ApiError && err.status === 400,
    );
  });
});
