/** Pure view state, derived only from the message stream.
 *
 * The view is a fold over the messages seen so far (service messages plus
 * the feedback messages this client sent), so replaying a recorded stream
 * reproduces the identical view.  The queue panel always shows the order
 * from the last rerank_result verbatim; no re-sorting happens here.
 */

import {
  CandidateInfo,
  DemoMessage,
  ErrorPayload,
  FeedbackPayload,
  MetricsPayload,
  NextVideoPayload,
  PageFetchPayload,
  RerankResultPayload,
  SessionStartPayload,
} from "./messages.js";

export type Phase = "connecting" | "live" | "disconnected" | "stale";

export interface HistoryEntry {
  videoId: string;
  categoryId: number;
  watchTimeS: number;
  like: boolean;
  follow: boolean;
}

export interface UiSessionView {
  phase: Phase;
  lastSeq: number;
  schema: string | null;
  pageConsumeM: number;
  current: NextVideoPayload | null;
  /** Shown at the moment the card appeared; used for the dwell clock. */
  currentShownAtMs: number | null;
  queue: RerankResultPayload | null;
  /** Bumped every time a rerank_result arrives, so renderers re-render. */
  queueVersion: number;
  candidatesById: Record<string, CandidateInfo>;
  lastPage: PageFetchPayload | null;
  history: HistoryEntry[];
  metrics: MetricsPayload | null;
  lastError: string | null;
}

export function initialView(): UiSessionView {
  return {
    phase: "connecting",
    lastSeq: 0,
    schema: null,
    pageConsumeM: 0,
    current: null,
    currentShownAtMs: null,
    queue: null,
    queueVersion: 0,
    candidatesById: {},
    lastPage: null,
    history: [],
    metrics: null,
    lastError: null,
  };
}

const HISTORY_STRIP_LEN = 10;

/** Apply one service message.  Returns a new view; never mutates. */
export function applyServiceMessage(
  view: UiSessionView,
  msg: DemoMessage,
  nowMs: number,
): UiSessionView {
  if (msg.seq <= view.lastSeq) {
    // Out-of-order delivery: the view can no longer be trusted; the client
    // reacts by reconnecting, which rebuilds it from a fresh session.
    return { ...view, phase: "stale" };
  }
  const next: UiSessionView = { ...view, lastSeq: msg.seq };
  switch (msg.kind) {
    case "session_start": {
      const p = msg.payload as unknown as SessionStartPayload;
      next.phase = "live";
      next.schema = p.schema;
      next.pageConsumeM = p.protocol.page_consume_m;
      return next;
    }
    case "page_fetch": {
      const p = msg.payload as unknown as PageFetchPayload;
      next.lastPage = p;
      next.candidatesById = { ...view.candidatesById };
      for (const c of p.candidates) {
        next.candidatesById[c.video.video_id] = c;
      }
      return next;
    }
    case "rerank_result": {
      next.queue = msg.payload as unknown as RerankResultPayload;
      next.queueVersion = view.queueVersion + 1;
      return next;
    }
    case "next_video": {
      next.current = msg.payload as unknown as NextVideoPayload;
      next.currentShownAtMs = nowMs;
      return next;
    }
    case "metrics": {
      next.metrics = msg.payload as unknown as MetricsPayload;
      return next;
    }
    case "error": {
      next.lastError = (msg.payload as unknown as ErrorPayload).reason;
      return next;
    }
    default:
      // Unknown kinds from a newer service are ignored but don't wreck state.
      return next;
  }
}

/** Record a feedback message this client sent (the history strip source). */
export function applySentFeedback(
  view: UiSessionView,
  payload: FeedbackPayload,
): UiSessionView {
  const card = view.current;
  if (card === null || card.video_id !== payload.video_id) {
    return view;
  }
  const entry: HistoryEntry = {
    videoId: card.video_id,
    categoryId: card.category_id,
    watchTimeS: payload.watch_time_s,
    like: payload.like,
    follow: payload.follow,
  };
  const history = [...view.history, entry].slice(-HISTORY_STRIP_LEN);
  return { ...view, history, current: null, currentShownAtMs: null };
}

export function markDisconnected(view: UiSessionView): UiSessionView {
  return { ...view, phase: "disconnected" };
}
