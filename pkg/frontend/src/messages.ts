/** Wire schema of the demo service: JSON objects {kind, seq, payload}. */

export type MessageKind =
  | "session_start"
  | "next_video"
  | "feedback"
  | "rerank_result"
  | "page_fetch"
  | "metrics"
  | "error";

export interface DemoMessage {
  kind: MessageKind;
  seq: number;
  payload: Record<string, unknown>;
}

export interface ServerScores {
  p_effective_view: number;
  p_like: number;
  p_follow: number;
}

export interface PredictionTriple {
  p_has_next: number;
  p_effective_view: number;
  p_like: number;
}

export interface SessionStartPayload {
  user_id: string;
  seed: number;
  schema: string;
  protocol: { page_consume_m: number; page_return_total: number };
}

export interface NextVideoPayload {
  video_id: string;
  category_id: number;
  duration_s: number;
  server_scores: ServerScores;
  position: number;
}

export interface RerankResultPayload {
  order_before: string[];
  order_after: string[];
  predictions: Record<string, PredictionTriple>;
  steps_run: number;
  stability: number[];
}

export interface CandidateInfo {
  video: { video_id: string; category_id: number; duration_s: number };
  server_scores: ServerScores;
  server_rank: number;
  buffered_len_s: number;
}

export interface PageFetchPayload {
  page: number;
  discarded: string[];
  candidates: CandidateInfo[];
}

export interface MetricsPayload {
  depth: number;
  likes: number;
  effective_views: number;
  chosen_pred_like_sum: number;
  server_pred_like_sum: number;
}

export interface FeedbackPayload {
  video_id: string;
  watch_time_s: number;
  like: boolean;
  follow: boolean;
}

export interface ErrorPayload {
  reason: string;
}

export function parseMessage(raw: string): DemoMessage {
  const obj = JSON.parse(raw);
  if (typeof obj !== "object" || obj === null) {
    throw new Error("message is not an object");
  }
  const { kind, seq, payload } = obj as Partial<DemoMessage>;
  if (typeof kind !== "string" || typeof seq !== "number") {
    throw new Error("message missing kind/seq");
  }
  return { kind: kind as MessageKind, seq, payload: payload ?? {} };
}
