import type { ControlEvent } from "./types.js";

/** One server-sent-events message after field assembly. */
export interface SseMessage {
  id: number | null;
  event: string | null;
  data: string;
}

/**
 * Incremental SSE field parser. Feed it raw chunks in any split; it
 * dispatches a message per blank line, ignoring `:` comment keepalives.
 */
export function createSseParser(
  onMessage: (msg: SseMessage) => void,
): (chunk: string) => void {
  let buffer = "";
  let id: number | null = null;
  let event: string | null = null;
  let data: string[] = [];

  const dispatch = () => {
    if (id === null && event === null && data.length === 0) return;
    onMessage({ id, event, data: data.join("\n") });
    id = null;
    event = null;
    data = [];
  };

  const handleLine = (line: string) => {
    if (line === "") {
      dispatch();
      return;
    }
    if (line.startsWith(":")) return; // comment / keepalive
    const colon = line.indexOf(":");
    const field = colon === -1 ? line : line.slice(0, colon);
    let value = colon === -1 ? "" : line.slice(colon + 1);
    if (value.startsWith(" ")) value = value.slice(1);
    if (field === "id") {
      const n = Number(value);
      if (Number.isFinite(n)) id = n;
    } else if (field === "event") {
      event = value;
    } else if (field === "data") {
      data.push(value);
    }
  };

  return (chunk: string) => {
    buffer += chunk;
    let newline: number;
    while ((newline = buffer.indexOf("\n")) !== -1) {
      let line = buffer.slice(0, newline);
      buffer = buffer.slice(newline + 1);
      if (line.endsWith("\r")) line = line.slice(0, -1);
      handleLine(line);
    }
  };
}

export type ConnectionState = "connecting" | "live" | "reconnecting" | "stopped";

export interface StreamHandlers {
  onEvent: (id: number, event: ControlEvent) => void;
  onState?: (state: ConnectionState) => void;
}

/**
 * Control-event subscription over the `/events` endpoint.
 *
 * Built on fetch streaming so it runs in the browser and in node alike.
 * On connection loss it reports a reconnecting state and resumes from the
 * last delivered cursor with `?since=`.
 */
export class EventStream {
  private lastId = 0;
  private stopped = false;
  private controller: AbortController | null = null;

  constructor(
    private readonly baseUrl: string,
    private readonly handlers: StreamHandlers,
    private readonly retryMs = 1000,
  ) {}

  get cursor(): number {
    return this.lastId;
  }

  async start(since = 0): Promise<void> {
    this.lastId = since;
    this.stopped = false;
    this.setState("connecting");
    while (!this.stopped) {
      try {
        await this.consumeOnce();
      } catch {
        // fall through to the retry path below
      }
      if (this.stopped) break;
      this.setState("reconnecting");
      await delay(this.retryMs);
    }
  }

  stop(): void {
    this.stopped = true;
    this.controller?.abort();
    this.setState("stopped");
  }

  private setState(state: ConnectionState): void {
    this.handlers.onState?.(state);
  }

  private async consumeOnce(): Promise<void> {
    this.controller = new AbortController();
    const res = await fetch(`${this.baseUrl}/events?since=${this.lastId}`, {
      signal: this.controller.signal,
      headers: { accept: "text/event-stream" },
    });
    if (!res.ok || !res.body) throw new Error(`stream unavailable: ${res.status}`);
    this.setState("live");

    const parse = createSseParser((msg) => {
      if (msg.id !== null) this.lastId = msg.id;
      if (!msg.data) return;
      let parsed: ControlEvent;
      try {
        parsed = JSON.parse(msg.data) as ControlEvent;
      } catch {
        return; // skip malformed payloads rather than killing the stream
      }
      this.handlers.onEvent(msg.id ?? this.lastId, parsed);
    });

    const reader = res.body.getReader();
    const decoder = new TextDecoder();
    for (;;) {
      const { done, value } = await reader.read();
      if (done) break;
      parse(decoder.decode(value, { stream: true }));
    }
  }
}

function delay(ms: number): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, ms));
}
