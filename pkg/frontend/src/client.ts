/** Websocket client: one socket, one session, rendering driven purely by
 * message arrival.  Every user action produces exactly one feedback message.
 */

import { DemoMessage, FeedbackPayload, parseMessage } from "./messages.js";
import {
  UiSessionView,
  applySentFeedback,
  applyServiceMessage,
  initialView,
  markDisconnected,
} from "./state.js";

/** The subset of the browser WebSocket API the client needs; lets tests
 * substitute the `ws` package under Node. */
export interface SocketLike {
  send(data: string): void;
  close(): void;
  onmessage: ((event: { data: unknown }) => void) | null;
  onclose: (() => void) | null;
  onerror: ((err: unknown) => void) | null;
  onopen: (() => void) | null;
}

export type SocketFactory = (url: string) => SocketLike;

export type Action =
  | { kind: "swipe" }
  | { kind: "like" }
  | { kind: "follow" }
  | { kind: "watch_dwell"; dwellS: number };

export interface ClientOptions {
  /** Clock used for dwell time; injectable for deterministic tests. */
  now?: () => number;
  onView?: (view: UiSessionView, msg: DemoMessage | null) => void;
}

export class SessionClient {
  view: UiSessionView = initialView();
  /** All feedback payloads this client has sent, in order. */
  readonly sentFeedback: FeedbackPayload[] = [];
  private socket: SocketLike | null = null;
  private readonly now: () => number;
  private readonly onView: (view: UiSessionView, msg: DemoMessage | null) => void;

  constructor(
    private readonly url: string,
    private readonly socketFactory: SocketFactory,
    opts: ClientOptions = {},
  ) {
    this.now = opts.now ?? (() => Date.now());
    this.onView = opts.onView ?? (() => undefined);
  }

  connect(): void {
    this.view = initialView();
    const socket = this.socketFactory(this.url);
    this.socket = socket;
    socket.onmessage = (event) => this.receive(String(event.data));
    socket.onclose = () => this.dropped();
    socket.onerror = () => this.dropped();
    this.onView(this.view, null);
  }

  close(): void {
    const socket = this.socket;
    this.socket = null; // deliberate close: no error state, no reconnect
    socket?.close();
  }

  private dropped(): void {
    if (this.socket === null) {
      return;
    }
    this.socket = null;
    this.view = markDisconnected(this.view);
    this.onView(this.view, null);
  }

  private receive(raw: string): void {
    let msg: DemoMessage;
    try {
      msg = parseMessage(raw);
    } catch {
      return; // unparseable frame: ignore, the service owns the truth
    }
    this.view = applyServiceMessage(this.view, msg, this.now());
    if (this.view.phase === "stale") {
      // Out-of-order seq: hard refresh — drop the socket and rebuild the
      // view from a fresh session.
      this.socket?.close();
      this.socket = null;
      this.connect();
      return;
    }
    this.onView(this.view, msg);
  }

  /** One action, one feedback message.  Dwell is wall clock since the card
   * appeared unless the action carries an explicit dwell. */
  sendAction(action: Action): FeedbackPayload | null {
    const card = this.view.current;
    if (card === null || this.socket === null) {
      return null;
    }
    const dwellS =
      action.kind === "watch_dwell"
        ? action.dwellS
        : (this.now() - (this.view.currentShownAtMs ?? this.now())) / 1000;
    const payload: FeedbackPayload = {
      video_id: card.video_id,
      watch_time_s: Math.max(0, dwellS),
      like: action.kind === "like",
      follow: action.kind === "follow",
    };
    this.socket.send(JSON.stringify({ kind: "feedback", payload }));
    this.sentFeedback.push(payload);
    this.view = applySentFeedback(this.view, payload);
    this.onView(this.view, null);
    return payload;
  }
}
