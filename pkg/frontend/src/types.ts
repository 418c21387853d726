/** Payload shapes of the engine's HTTP surface, as consumed by the console. */

export interface TripleView {
  uid: string;
  subject: string;
  predicate: string;
  object: string;
  confidence: number;
  t: number;
  frame_seq: number;
  model_id: string;
  epoch: number;
  subject_type: string | null;
  object_type: string | null;
}

export interface AlertView {
  alert_id: string;
  query_id: string;
  pattern: string;
  t: number;
  bindings: Record<string, string>;
  matched: TripleView[];
}

export interface AlertsPage {
  cursor: number;
  alerts: AlertView[];
}

export interface KgPage {
  count: number;
  triples: TripleView[];
  entities: string[];
}

export interface QueryInfo {
  query_id: string;
  kind: "standing" | "interactive";
  name?: string;
  text: string;
  window_s?: number;
}

export interface InteractiveAnswer {
  query_id: string;
  kind: "interactive";
  text: string;
  about: string | null;
  focus: string | null;
  refinement_of: string | null;
  window: [number, number];
  answer: string;
  supporting: TripleView[];
}

export interface ThreadView extends InteractiveAnswer {
  children: ThreadView[];
}

export interface Health {
  status: string;
  finished: boolean;
  t: number;
}

export interface Metrics {
  mode: string;
  scenario: string;
  duration_s: number;
  frames: { emitted: number; delivered: number; dropped: number };
  admitted: number;
  admitted_fps: number;
  loaded_memory_mb: number;
  memory_budget_mb: number;
  alerts: number;
  [extra: string]: unknown;
}

/** One line of the engine's control-event log, as streamed over SSE. */
export interface ControlEvent {
  event: string;
  t: number;
  [field: string]: unknown;
}

export interface PlanEvent extends ControlEvent {
  event: "plan";
  admit_fps: number;
  model: string;
  models: string[];
  loaded_mb: number;
}

export interface FpsSampleEvent extends ControlEvent {
  event: "fps_sample";
  fps: number;
  escalated: boolean;
}

export interface ContextOpenEvent extends ControlEvent {
  event: "context_open";
  label: string;
  query: string;
}

export interface ContextCloseEvent extends ControlEvent {
  event: "context_close";
  label: string;
  reason: string;
}

export interface AlertEvent extends ControlEvent {
  event: "alert";
  alert_id: string;
  pattern: string;
  query: string;
  fired: number;
}

export interface EscalateEvent extends ControlEvent {
  event: "escalate";
  direction: "up" | "down";
  admit_fps: number;
}

export interface ResetEvent extends ControlEvent {
  event: "reset";
  epoch: number;
  archived: number;
  snapshot: number;
}

export interface EndEvent extends ControlEvent {
  event: "end";
  emitted: number;
  delivered: number;
  dropped: number;
}
