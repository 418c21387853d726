import type { ConnectionState } from "./sse.js";
import type { FeedStore } from "./feed.js";
import type { GraphView } from "./graph.js";
import type { ThreadNode, ThreadStore } from "./threads.js";
import type { Metrics } from "./types.js";
import { escapeHtml, secs, tripleClause } from "./format.js";

/** Status strip: connection dot, engine mode, throughput, memory. */
export function renderStatus(
  state: ConnectionState,
  metrics: Metrics | null,
  feed: FeedStore,
): string {
  const dot =
    state === "live" ? "live" : state === "reconnecting" ? "dead" : "idle";
  const label =
    state === "live"
      ? feed.end
        ? "replay complete"
        : "live"
      : state === "reconnecting"
        ? "reconnecting…"
        : state;
  const stats = metrics
    ? `<span class="stat">mode <b>${escapeHtml(metrics.mode)}</b></span>
       <span class="stat">scenario <b>${escapeHtml(metrics.scenario)}</b></span>
       <span class="stat">admitted <b>${metrics.admitted_fps.toFixed(2)} fps</b></span>
       <span class="stat">memory <b>${metrics.loaded_memory_mb} / ${metrics.memory_budget_mb} MB</b></span>
       <span class="stat">resets <b>${feed.resets}</b></span>`
    : "";
  return `<span class="dot ${dot}"></span><span class="state">${escapeHtml(label)}</span>${stats}`;
}

/** Live alert feed in stream-arrival order. */
export function renderAlertFeed(feed: FeedStore): string {
  if (feed.alerts.length === 0) {
    return `<div class="empty-msg">No alerts yet — standing queries are watching the stream.</div>`;
  }
  const rows = feed.alerts.map((alert) => {
    const steps = alert.detail
      ? alert.detail.matched
          .map(
            (m) =>
              `<li><span class="t">${secs(m.t)}</span> ${escapeHtml(
                tripleClause(m.subject, m.predicate, m.object),
              )} <span class="conf">${m.confidence.toFixed(2)}</span></li>`,
          )
          .join("")
      : `<li class="dim">loading step details…</li>`;
    const bindings = alert.detail
      ? Object.entries(alert.detail.bindings)
          .map(([k, v]) => `<span class="pill">${escapeHtml(k)}=${escapeHtml(v)}</span>`)
          .join("")
      : "";
    return `<article class="alert" data-alert="${escapeHtml(alert.alertId)}">
  <header><span class="pattern">${escapeHtml(alert.pattern)}</span>
    <span class="t">fired ${secs(alert.firedAt)}</span>${bindings}</header>
  <ol class="steps">${steps}</ol>
</article>`;
  });
  return rows.join("\n");
}

/**
 * Throughput chart as inline SVG: the admitted-fps line over time with
 * context intervals shaded behind it; escalated samples get a marker.
 */
export function renderChart(feed: FeedStore, width = 640, height = 160): string {
  const pad = { left: 30, right: 8, top: 8, bottom: 18 };
  const innerW = width - pad.left - pad.right;
  const innerH = height - pad.top - pad.bottom;
  const maxT = Math.max(feed.lastT, 1);
  const maxFps = Math.max(10, ...feed.fps.map((p) => p.fps));
  const x = (t: number) => pad.left + (t / maxT) * innerW;
  const y = (fps: number) => pad.top + innerH - (fps / maxFps) * innerH;

  const shades = feed.contexts
    .map((span) => {
      const x0 = x(span.openedAt);
      const x1 = x(span.closedAt ?? feed.lastT);
      return `<rect class="ctx" x="${x0.toFixed(1)}" y="${pad.top}" width="${Math.max(
        x1 - x0,
        1,
      ).toFixed(1)}" height="${innerH}"><title>${escapeHtml(span.label)} ${secs(
        span.openedAt,
      )}–${span.closedAt === null ? "…" : secs(span.closedAt)}</title></rect>`;
    })
    .join("");

  const line = feed.fps
    .map((p, i) => `${i === 0 ? "M" : "L"}${x(p.t).toFixed(1)},${y(p.fps).toFixed(1)}`)
    .join(" ");
  const marks = feed.fps
    .filter((p) => p.escalated)
    .map(
      (p) =>
        `<circle class="esc" cx="${x(p.t).toFixed(1)}" cy="${y(p.fps).toFixed(1)}" r="2.5"/>`,
    )
    .join("");

  return `<svg viewBox="0 0 ${width} ${height}" role="img" aria-label="admitted fps">
  <g class="grid">
    <line x1="${pad.left}" y1="${y(0)}" x2="${width - pad.right}" y2="${y(0)}"/>
    <line x1="${pad.left}" y1="${y(8)}" x2="${width - pad.right}" y2="${y(8)}" class="ref"/>
    <text x="2" y="${y(8) + 3}">8</text>
    <text x="2" y="${y(0) + 3}">0</text>
  </g>
  ${shades}
  <path class="fps" d="${line}"/>
  ${marks}
</svg>`;
}

/** Knowledge-graph slice as a radial node-edge SVG. */
export function renderGraphSvg(graph: GraphView, width = 420, height = 300): string {
  const cx = width / 2;
  const cy = height / 2;
  const radius = Math.min(width, height) / 2 - 40;
  const pos = new Map<string, { x: number; y: number }>();
  graph.nodes.forEach((node, i) => {
    const angle = (2 * Math.PI * i) / Math.max(graph.nodes.length, 1) - Math.PI / 2;
    pos.set(node.id, {
      x: cx + radius * Math.cos(angle),
      y: cy + radius * Math.sin(angle),
    });
  });

  const edges = graph.edges
    .map((edge) => {
      const a = pos.get(edge.source)!;
      const b = pos.get(edge.target)!;
      const label = edge.value === null ? edge.predicate : `${edge.predicate} = ${edge.value}`;
      if (edge.source === edge.target) {
        // Attribute values and self-references render as a loop above the node.
        return `<g class="edge loop" data-edge="${escapeHtml(edge.id)}">
  <circle cx="${a.x.toFixed(1)}" cy="${(a.y - 18).toFixed(1)}" r="8"/>
  <text x="${a.x.toFixed(1)}" y="${(a.y - 30).toFixed(1)}">${escapeHtml(label)}</text>
</g>`;
      }
      const mx = (a.x + b.x) / 2;
      const my = (a.y + b.y) / 2;
      return `<g class="edge" data-edge="${escapeHtml(edge.id)}">
  <line x1="${a.x.toFixed(1)}" y1="${a.y.toFixed(1)}" x2="${b.x.toFixed(1)}" y2="${b.y.toFixed(1)}"/>
  <text x="${mx.toFixed(1)}" y="${(my - 3).toFixed(1)}">${escapeHtml(label)}</text>
</g>`;
    })
    .join("\n");

  const nodes = graph.nodes
    .map((node) => {
      const p = pos.get(node.id)!;
      return `<g class="node" data-node="${escapeHtml(node.id)}">
  <circle cx="${p.x.toFixed(1)}" cy="${p.y.toFixed(1)}" r="${6 + Math.min(node.degree, 6)}"/>
  <text x="${p.x.toFixed(1)}" y="${(p.y - 12).toFixed(1)}">${escapeHtml(node.id)}</text>
</g>`;
    })
    .join("\n");

  return `<svg viewBox="0 0 ${width} ${height}" role="img" aria-label="knowledge graph">
${edges}
${nodes}
</svg>
<div class="kg-counts">${graph.nodes.length} entities · ${graph.edges.length} triples</div>`;
}

function renderNode(store: ThreadStore, node: ThreadNode, depth: number): string {
  const body = node.pending
    ? `<div class="answer dim">answering…</div>`
    : node.error
      ? `<div class="error">${escapeHtml(node.error)}</div>`
      : `<div class="answer">${escapeHtml(node.answer ?? "")}</div>
         <div class="support dim">${node.supporting.length} supporting triple${
           node.supporting.length === 1 ? "" : "s"
         }${node.window ? ` · window ${secs(node.window[0])}–${secs(node.window[1])}` : ""}</div>`;
  const refine = `<form class="refine" data-parent="${escapeHtml(node.queryId ?? "")}">
    <input name="refinement" placeholder="refine… e.g. focus=fleeing" ${
      store.canRefine(node) ? "" : "disabled"
    }/>
    <button type="submit" ${store.canRefine(node) ? "" : "disabled"}>refine</button>
  </form>`;
  const children = node.children
    .map((child) => renderNode(store, child, depth + 1))
    .join("\n");
  return `<section class="thread depth-${depth}" ${
    node.queryId ? `data-query="${escapeHtml(node.queryId)}"` : ""
  }>
  <div class="q">${escapeHtml(node.text)}</div>
  ${body}
  ${refine}
  ${children ? `<div class="children">${children}</div>` : ""}
</section>`;
}

/** The interactive console: root threads with nested refinements. */
export function renderThreads(store: ThreadStore): string {
  if (store.roots.length === 0) {
    return `<div class="empty-msg">Ask something — e.g. <code>what happened about=p1 window=60s</code></div>`;
  }
  return store.roots.map((root) => renderNode(store, root, 0)).join("\n");
}
