import { ApiClient } from "./api.js";
import { FeedStore } from "./feed.js";
import { buildGraph } from "./graph.js";
import { EventStream, type ConnectionState } from "./sse.js";
import { ThreadStore } from "./threads.js";
import {
  renderAlertFeed,
  renderChart,
  renderGraphSvg,
  renderStatus,
  renderThreads,
} from "./render.js";
import type { KgFilter } from "./api.js";
import type { Metrics } from "./types.js";

const client = new ApiClient("");
const feed = new FeedStore();
const threads = new ThreadStore(client);

let connection: ConnectionState = "connecting";
let metrics: Metrics | null = null;
let alertsDirty = false;
let feedDirty = true;
let threadsDirty = true;

const el = (id: string): HTMLElement => {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node;
};

function repaintStatus(): void {
  el("status").innerHTML = renderStatus(connection, metrics, feed);
}

function repaintFeed(): void {
  el("alert-feed").innerHTML = renderAlertFeed(feed);
  el("chart").innerHTML = renderChart(feed);
  repaintStatus();
  feedDirty = false;
}

function repaintThreads(): void {
  el("threads").innerHTML = renderThreads(threads);
  threadsDirty = false;
}

async function hydrateAlerts(): Promise<void> {
  try {
    feed.applyAlertDetails(await client.alerts(0));
    feedDirty = true;
  } catch {
    alertsDirty = true; // retry on the next tick
  }
}

async function refreshMetrics(): Promise<void> {
  try {
    metrics = await client.metrics();
    repaintStatus();
  } catch {
    // status strip simply keeps the last numbers
  }
}

async function refreshKg(): Promise<void> {
  const predicate = (el("kg-predicate") as HTMLInputElement).value.trim();
  const entity = (el("kg-entity") as HTMLInputElement).value.trim();
  const filter: KgFilter = {};
  if (predicate) filter.predicate = predicate;
  if (entity) filter.entity = entity;
  try {
    const page = await client.kg(filter);
    el("kg-view").innerHTML = renderGraphSvg(buildGraph(page.triples));
  } catch (err) {
    el("kg-view").innerHTML = `<div class="error">${
      err instanceof Error ? err.message : String(err)
    }</div>`;
  }
}

const stream = new EventStream("", {
  onEvent: (id, event) => {
    feed.apply(id, event);
    feedDirty = true;
    if (event.event === "alert") alertsDirty = true;
    if (event.event === "end" || event.event === "reset") void refreshMetrics();
  },
  onState: (state) => {
    connection = state;
    repaintStatus();
  },
});

// Paint in animation frames so a burst of replayed events coalesces.
function tick(): void {
  if (alertsDirty) {
    alertsDirty = false;
    void hydrateAlerts();
  }
  if (feedDirty) repaintFeed();
  if (threadsDirty) repaintThreads();
  requestAnimationFrame(tick);
}

el("console-form").addEventListener("submit", (raw) => {
  raw.preventDefault();
  const input = el("console-input") as HTMLInputElement;
  const text = input.value.trim();
  if (!text) return;
  input.value = "";
  threadsDirty = true;
  void threads.submit(text).then(() => {
    threadsDirty = true;
  });
});

el("threads").addEventListener("submit", (raw) => {
  const form = raw.target as HTMLFormElement;
  if (!form.classList.contains("refine")) return;
  raw.preventDefault();
  const parentId = form.dataset.parent ?? "";
  const input = form.elements.namedItem("refinement") as HTMLInputElement;
  const refinement = input.value.trim();
  const parent = findNode(parentId);
  if (!refinement || !parent) return;
  threadsDirty = true;
  void threads.refine(parent, refinement).then(() => {
    threadsDirty = true;
  });
});

function findNode(queryId: string) {
  const stack = [...threads.roots];
  while (stack.length) {
    const node = stack.pop()!;
    if (node.queryId === queryId) return node;
    stack.push(...node.children);
  }
  return null;
}

el("kg-refresh").addEventListener("click", () => void refreshKg());

void refreshMetrics();
void refreshKg();
void stream.start(0);
requestAnimationFrame(tick);
