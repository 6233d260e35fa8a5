/** Service client: one event-fold loop per session.
 *
 * All server interaction is asynchronous; events apply strictly by sequence
 * number. Duplicates are dropped by the model, gaps are repaired through the
 * polling endpoint, and a lost stream resumes from the cursor so nothing is
 * missed or applied twice. The browser's fetch and EventSource are injected,
 * which keeps the client testable without a network.
 */

import { ConsoleViewModel, type ChatBubble } from "./viewModel.js";
import { EVENT_KINDS, type Robot, type Snapshot, type WireEvent } from "./types.js";

export interface EventSourceLike {
  addEventListener(type: string, listener: (event: { data: string }) => void): void;
  close(): void;
  onopen: (() => void) | null;
  onerror: (() => void) | null;
}

export type EventSourceFactory = (url: string) => EventSourceLike;

export interface ResponseLike {
  ok: boolean;
  status: number;
  json(): Promise<unknown>;
}

export type FetchLike = (
  url: string,
  init?: { method?: string; headers?: Record<string, string>; body?: string },
) => Promise<ResponseLike>;

export interface ClientOptions {
  baseUrl: string;
  sessionId: string;
  fetchFn: FetchLike;
  eventSource: EventSourceFactory;
  /** Timer used for reconnect backoff; defaults to setTimeout. */
  schedule?: (fn: () => void, ms: number) => void;
  onChange?: (model: ConsoleViewModel) => void;
  backoffMs?: number;
  maxBackoffMs?: number;
}

const DEFAULT_BACKOFF_MS = 500;
const DEFAULT_MAX_BACKOFF_MS = 8000;

export class ConsoleClient {
  readonly model = new ConsoleViewModel();
  private stream: EventSourceLike | null = null;
  private backoff: number;
  private closed = false;
  private buffered: WireEvent[] = [];
  private repairing = false;

  constructor(private readonly options: ClientOptions) {
    this.backoff = options.backoffMs ?? DEFAULT_BACKOFF_MS;
  }

  /** Initial GET of the snapshot, then a stream subscription from its
   * cursor. An unknown session is terminal; anything else retries. */
  async connect(): Promise<void> {
    if (this.closed) {
      return;
    }
    this.model.connection = "connecting";
    this.emit();
    let response: ResponseLike;
    try {
      response = await this.options.fetchFn(this.url("/state"));
    } catch {
      this.retryLater("service unreachable", () => void this.connect());
      return;
    }
    if (response.status === 404) {
      this.model.connection = "error";
      this.model.connectionDetail = `unknown session "${this.options.sessionId}"`;
      this.emit();
      return;
    }
    if (!response.ok) {
      this.retryLater(`state fetch failed (${response.status})`, () => void this.connect());
      return;
    }
    this.model.adoptSnapshot((await response.json()) as Snapshot);
    this.openStream();
    this.model.connection = "live";
    this.backoff = this.options.backoffMs ?? DEFAULT_BACKOFF_MS;
    this.emit();
  }

  /** Post a chat message with an optimistic echo; the echo turns
   * authoritative when the server's user_msg event arrives, or gains a
   * retry affordance when the POST fails. */
  async sendChat(text: string): Promise<void> {
    const trimmed = text.trim();
    if (!trimmed) {
      return;
    }
    const bubble = this.model.addPendingEcho(trimmed);
    this.emit();
    try {
      const response = await this.options.fetchFn(this.url("/chat"), {
        method: "POST",
        headers: { "content-type": "application/json" },
        body: JSON.stringify({ text: trimmed }),
      });
      if (!response.ok) {
        bubble.failed = true;
      }
    } catch {
      bubble.failed = true;
    }
    this.emit();
  }

  /** Re-post a failed message. */
  async retryChat(bubble: ChatBubble): Promise<void> {
    const at = this.model.chat.indexOf(bubble);
    if (at >= 0) {
      this.model.chat.splice(at, 1);
    }
    await this.sendChat(bubble.text);
  }

  /** Stop a robot. Interrupting is a chat turn like any other; the planner
   * routes it, the console only renders the resulting events. */
  async interrupt(agent: Robot): Promise<void> {
    await this.sendChat(`${agent}, stop!`);
  }

  /** Step a manual-run session's simulation. */
  async advance(ticks = 1): Promise<void> {
    try {
      await this.options.fetchFn(this.url("/advance"), {
        method: "POST",
        headers: { "content-type": "application/json" },
        body: JSON.stringify({ ticks }),
      });
    } catch {
      // a lost advance is harmless; the stream decides what actually happened
    }
  }

  close(): void {
    this.closed = true;
    this.stream?.close();
    this.stream = null;
  }

  private url(path: string): string {
    return `${this.options.baseUrl}/sessions/${this.options.sessionId}${path}`;
  }

  private emit(): void {
    this.options.onChange?.(this.model);
  }

  private openStream(): void {
    this.stream?.close();
    const source = this.options.eventSource(
      this.url(`/events?stream=true&since=${this.model.cursor}`),
    );
    this.stream = source;
    const onEvent = (event: { data: string }) => {
      let wire: WireEvent;
      try {
        wire = JSON.parse(event.data) as WireEvent;
      } catch {
        return;
      }
      this.deliver(wire);
    };
    for (const kind of EVENT_KINDS) {
      source.addEventListener(kind, onEvent);
    }
    source.onopen = () => {
      if (this.model.connection !== "live") {
        this.model.connection = "live";
        this.emit();
      }
      this.backoff = this.options.backoffMs ?? DEFAULT_BACKOFF_MS;
    };
    source.onerror = () => {
      if (this.stream === source) {
        this.retryLater("event stream lost", () => this.resume());
      }
    };
  }

  /** Reopen the stream from the cursor; everything missed while offline
   * replays, nothing already folded repeats. */
  private resume(): void {
    if (this.closed) {
      return;
    }
    this.openStream();
  }

  private deliver(event: WireEvent): void {
    if (this.repairing) {
      this.buffered.push(event);
      return;
    }
    if (event.seq > this.model.cursor) {
      this.buffered.push(event);
      void this.repairGap();
      return;
    }
    this.model.applyEvent(event);
    if (this.model.connection !== "live") {
      this.model.connection = "live";
    }
    this.emit();
  }

  /** An out-of-order event means this client missed some kinds the stream
   * carries but it never subscribed to; fetch the gap from the polling
   * endpoint, then drain whatever arrived meanwhile. */
  private async repairGap(): Promise<void> {
    this.repairing = true;
    try {
      const response = await this.options.fetchFn(
        this.url(`/events?since=${this.model.cursor}`),
      );
      if (response.ok) {
        const body = (await response.json()) as { events: WireEvent[] };
        for (const event of body.events) {
          this.model.applyEvent(event);
        }
      }
    } catch {
      // the stream is still up; the next delivery retriggers repair
    }
    this.repairing = false;
    const backlog = this.buffered;
    this.buffered = [];
    for (const event of backlog) {
      if (event.seq > this.model.cursor) {
        this.buffered.push(event);
      } else {
        this.model.applyEvent(event);
      }
    }
    if (this.buffered.length > 0) {
      void this.repairGap();
      return;
    }
    this.emit();
  }

  private retryLater(detail: string, action: () => void): void {
    if (this.closed) {
      return;
    }
    this.stream?.close();
    this.stream = null;
    this.model.connection = "reconnecting";
    this.model.connectionDetail = detail;
    this.emit();
    const wait = this.backoff;
    this.backoff = Math.min(this.backoff * 2, this.options.maxBackoffMs ?? DEFAULT_MAX_BACKOFF_MS);
    const schedule = this.options.schedule ?? ((fn, ms) => void setTimeout(fn, ms));
    schedule(() => {
      if (!this.closed) {
        action();
      }
    }, wait);
  }
}
