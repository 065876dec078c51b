import { describe, expect, it } from "vitest";

import { DemoMessage } from "../src/messages.js";
import { renderMetrics, renderQueue } from "../src/render.js";
import {
  UiSessionView,
  applySentFeedback,
  applyServiceMessage,
  initialView,
} from "../src/state.js";

let seq = 0;

function msg(kind: DemoMessage["kind"], payload: Record<string, unknown>): DemoMessage {
  seq += 1;
  return { kind, seq, payload };
}

function startMessages(): DemoMessage[] {
  seq = 0;
  return [
    msg("session_start", {
      user_id: "human",
      seed: 1,
      schema: "s1",
      protocol: { page_consume_m: 6, page_return_total: 9 },
    }),
    msg("page_fetch", {
      page: 0,
      discarded: [],
      candidates: ["a", "b", "c"].map((v, i) => ({
        video: { video_id: v, category_id: i, duration_s: 10 + i },
        server_scores: { p_effective_view: 0.5, p_like: 0.1, p_follow: 0.01 },
        server_rank: i,
        buffered_len_s: 2,
      })),
    }),
    msg("rerank_result", {
      order_before: ["a", "b", "c"],
      order_after: ["b", "a", "c"],
      predictions: {
        a: { p_has_next: 0.8, p_effective_view: 0.5, p_like: 0.1 },
        b: { p_has_next: 0.9, p_effective_view: 0.6, p_like: 0.2 },
        c: { p_has_next: 0.7, p_effective_view: 0.4, p_like: 0.05 },
      },
      steps_run: 2,
      stability: [0.8, 0.95],
    }),
    msg("next_video", {
      video_id: "b",
      category_id: 1,
      duration_s: 11,
      server_scores: { p_effective_view: 0.5, p_like: 0.1, p_follow: 0.01 },
      position: 1,
    }),
  ];
}

function fold(messages: DemoMessage[]): UiSessionView {
  return messages.reduce((v, m) => applyServiceMessage(v, m, 1000), initialView());
}

describe("view reducer", () => {
  it("builds the live view from the opening burst", () => {
    const view = fold(startMessages());
    expect(view.phase).toBe("live");
    expect(view.schema).toBe("s1");
    expect(view.pageConsumeM).toBe(6);
    expect(view.current?.video_id).toBe("b");
    expect(view.queue?.order_after).toEqual(["b", "a", "c"]);
    expect(Object.keys(view.candidatesById).sort()).toEqual(["a", "b", "c"]);
  });

  it("queue panel shows the last rerank_result order verbatim", () => {
    const view = fold(startMessages());
    const html = renderQueue(view);
    const order = html.match(/class="queue-after">(.*?)<\/ol>/s)![1];
    const ids = [...order.matchAll(/data-video="(\w+)"/g)].map((m) => m[1]);
    expect(ids).toEqual(["b", "a", "c"]);
  });

  it("bumps queueVersion on every rerank_result", () => {
    let view = fold(startMessages());
    const v0 = view.queueVersion;
    view = applyServiceMessage(
      view,
      msg("rerank_result", {
        order_before: ["a", "c"],
        order_after: ["c", "a"],
        predictions: {},
        steps_run: 1,
        stability: [1],
      }),
      1000,
    );
    expect(view.queueVersion).toBe(v0 + 1);
    expect(view.queue?.order_after).toEqual(["c", "a"]);
  });

  it("replaying the same stream reproduces the identical view", () => {
    const a = fold(startMessages());
    const b = fold(startMessages());
    expect(b).toEqual(a);
  });

  it("out-of-order seq marks the view stale", () => {
    const view = fold(startMessages());
    const stale = applyServiceMessage(view, { kind: "metrics", seq: 1, payload: {} }, 1000);
    expect(stale.phase).toBe("stale");
  });

  it("error payload surfaces without touching the rest of the view", () => {
    const view = fold(startMessages());
    const next = applyServiceMessage(view, msg("error", { reason: "nope" }), 1000);
    expect(next.lastError).toBe("nope");
    expect(next.current).toEqual(view.current);
    expect(next.queue).toEqual(view.queue);
  });

  it("metrics panel shows the service payload values verbatim", () => {
    let view = fold(startMessages());
    view = applyServiceMessage(
      view,
      msg("metrics", {
        depth: 3,
        likes: 1,
        effective_views: 2,
        chosen_pred_like_sum: 0.4567,
        server_pred_like_sum: 0.1234,
      }),
      1000,
    );
    const html = renderMetrics(view);
    expect(html).toContain("0.4567");
    expect(html).toContain("0.1234");
    expect(html).toContain("<dd>3</dd>");
  });
});

describe("sent feedback", () => {
  it("moves the current card into the history strip with icons", () => {
    const view = fold(startMessages());
    const next = applySentFeedback(view, {
      video_id: "b",
      watch_time_s: 6.5,
      like: true,
      follow: false,
    });
    expect(next.current).toBeNull();
    expect(next.history).toHaveLength(1);
    expect(next.history[0]).toMatchObject({ videoId: "b", like: true, watchTimeS: 6.5 });
  });

  it("ignores feedback that does not match the current card", () => {
    const view = fold(startMessages());
    const next = applySentFeedback(view, {
      video_id: "zzz",
      watch_time_s: 1,
      like: false,
      follow: false,
    });
    expect(next).toBe(view);
  });
});
