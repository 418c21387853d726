import type {
  AlertEvent,
  AlertsPage,
  AlertView,
  ContextCloseEvent,
  ContextOpenEvent,
  ControlEvent,
  EndEvent,
  EscalateEvent,
  FpsSampleEvent,
  PlanEvent,
  ResetEvent,
} from "./types.js";

/** An alert as it arrived on the stream, optionally hydrated from /alerts. */
export interface FeedAlert {
  alertId: string;
  queryId: string;
  pattern: string;
  firedAt: number;
  seenAt: number;
  detail: AlertView | null;
}

/** A context interval, shaded on the throughput chart. */
export interface ContextSpan {
  label: string;
  openedAt: number;
  closedAt: number | null;
  reason: string | null;
}

export interface FpsPoint {
  t: number;
  fps: number;
  escalated: boolean;
}

export interface PlanInfo {
  admitFps: number;
  model: string;
  models: string[];
  loadedMb: number;
}

/**
 * Pure reducer over the control-event stream. Everything the dashboard
 * shows is derived here from documented endpoint data — nothing is
 * inferred client-side.
 */
export class FeedStore {
  readonly alerts: FeedAlert[] = [];
  readonly contexts: ContextSpan[] = [];
  readonly fps: FpsPoint[] = [];
  plan: PlanInfo | null = null;
  escalated = false;
  resets = 0;
  cursor = 0;
  lastT = 0;
  end: EndEvent | null = null;

  apply(id: number, event: ControlEvent): void {
    if (id > this.cursor) this.cursor = id;
    if (typeof event.t === "number" && event.t > this.lastT) this.lastT = event.t;

    switch (event.event) {
      case "plan": {
        const e = event as PlanEvent;
        this.plan = {
          admitFps: e.admit_fps,
          model: e.model,
          models: e.models,
          loadedMb: e.loaded_mb,
        };
        break;
      }
      case "alert": {
        const e = event as AlertEvent;
        this.alerts.push({
          alertId: e.alert_id,
          queryId: e.query,
          pattern: e.pattern,
          firedAt: e.fired,
          seenAt: e.t,
          detail: null,
        });
        break;
      }
      case "context_open": {
        const e = event as ContextOpenEvent;
        this.contexts.push({
          label: e.label,
          openedAt: e.t,
          closedAt: null,
          reason: null,
        });
        break;
      }
      case "context_close": {
        const e = event as ContextCloseEvent;
        for (let i = this.contexts.length - 1; i >= 0; i--) {
          const span = this.contexts[i]!;
          if (span.label === e.label && span.closedAt === null) {
            span.closedAt = e.t;
            span.reason = e.reason;
            break;
          }
        }
        break;
      }
      case "fps_sample": {
        const e = event as FpsSampleEvent;
        this.fps.push({ t: e.t, fps: e.fps, escalated: e.escalated });
        break;
      }
      case "escalate": {
        const e = event as EscalateEvent;
        this.escalated = e.direction === "up";
        break;
      }
      case "reset": {
        void (event as ResetEvent);
        this.resets += 1;
        break;
      }
      case "end": {
        this.end = event as EndEvent;
        break;
      }
      default:
        break; // admit/infer/build/drop/vqg/query drive no feed widgets
    }
  }

  /** Merge full alert records from the /alerts endpoint, keyed by id. */
  applyAlertDetails(page: AlertsPage): void {
    const byId = new Map(page.alerts.map((a) => [a.alert_id, a]));
    for (const alert of this.alerts) {
      const detail = byId.get(alert.alertId);
      if (detail) alert.detail = detail;
    }
  }

  /** Alert ids in stream-arrival order — compared against /alerts order. */
  alertOrder(): string[] {
    return this.alerts.map((a) => a.alertId);
  }

  openContexts(): ContextSpan[] {
    return this.contexts.filter((c) => c.closedAt === null);
  }
}
