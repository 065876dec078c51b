/** HTML renderers: pure functions from view state to markup strings.
 * The queue panel renders order_after exactly as received — never re-sorted.
 */

import { PredictionTriple } from "./messages.js";
import { UiSessionView } from "./state.js";

const CARD_HUES = [14, 45, 90, 140, 175, 205, 235, 265, 300, 330];

export function categoryColor(categoryId: number): string {
  const hue = CARD_HUES[categoryId % CARD_HUES.length];
  return `hsl(${hue}, 65%, 55%)`;
}

function esc(s: string): string {
  return s.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;");
}

function pct(x: number): string {
  return `${(100 * x).toFixed(1)}%`;
}

export function renderCurrentCard(view: UiSessionView): string {
  const c = view.current;
  if (c === null) {
    return `<div class="card card-empty">waiting for next video…</div>`;
  }
  const color = categoryColor(c.category_id);
  const s = c.server_scores;
  return [
    `<div class="card" data-video="${esc(c.video_id)}" style="--cat-color:${color}">`,
    `<div class="card-category">category ${c.category_id}</div>`,
    `<div class="card-id">${esc(c.video_id)} · pos ${c.position}</div>`,
    `<div class="duration-bar"><div class="duration-fill" style="width:${Math.min(100, (100 * c.duration_s) / 120).toFixed(1)}%"></div></div>`,
    `<div class="card-duration">${c.duration_s.toFixed(1)} s</div>`,
    `<div class="card-server">server: ev ${pct(s.p_effective_view)} · like ${pct(s.p_like)} · follow ${pct(s.p_follow)}</div>`,
    `</div>`,
  ].join("");
}

function queueRow(videoId: string, pred: PredictionTriple | undefined, serverRank: string): string {
  const scores =
    pred === undefined
      ? ""
      : ` <span class="pred">next ${pct(pred.p_has_next)} · ev ${pct(pred.p_effective_view)} · like ${pct(pred.p_like)}</span>`;
  return `<li class="queue-row" data-video="${esc(videoId)}">${esc(videoId)}${serverRank}${scores}</li>`;
}

export function renderQueue(view: UiSessionView): string {
  const q = view.queue;
  if (q === null) {
    return `<div class="queue queue-empty">no re-rank yet</div>`;
  }
  const before = q.order_before
    .map((v) => queueRow(v, q.predictions[v], ""))
    .join("");
  const after = q.order_after
    .map((v) => queueRow(v, q.predictions[v], ""))
    .join("");
  const stab = q.stability.map((s) => s.toFixed(3)).join(" → ");
  return [
    `<div class="queue" data-version="${view.queueVersion}">`,
    `<div class="queue-col"><h3>server order</h3><ol class="queue-before">${before}</ol></div>`,
    `<div class="queue-col"><h3>edge order</h3><ol class="queue-after">${after}</ol></div>`,
    `<div class="queue-diag">beam steps ${q.steps_run} · stability ${stab}</div>`,
    `</div>`,
  ].join("");
}

export function renderHistory(view: UiSessionView): string {
  const items = view.history
    .map((h) => {
      const icons = `${h.like ? "♥" : ""}${h.follow ? "＋" : ""}` || "·";
      return `<li class="hist-item" style="--cat-color:${categoryColor(h.categoryId)}">${esc(h.videoId)} <span class="icons">${icons}</span> ${h.watchTimeS.toFixed(1)}s</li>`;
    })
    .join("");
  return `<ol class="history">${items}</ol>`;
}

export function renderMetrics(view: UiSessionView): string {
  const m = view.metrics;
  if (m === null) {
    return `<div class="metrics metrics-empty">no actions yet</div>`;
  }
  // values straight from the service metrics payload; no UI-side math
  return [
    `<dl class="metrics">`,
    `<dt>depth</dt><dd>${m.depth}</dd>`,
    `<dt>likes</dt><dd>${m.likes}</dd>`,
    `<dt>effective views</dt><dd>${m.effective_views}</dd>`,
    `<dt>edge pred-like sum</dt><dd>${m.chosen_pred_like_sum.toFixed(4)}</dd>`,
    `<dt>server-order shadow sum</dt><dd>${m.server_pred_like_sum.toFixed(4)}</dd>`,
    `</dl>`,
  ].join("");
}

export function renderStatus(view: UiSessionView): string {
  switch (view.phase) {
    case "connecting":
      return `<div class="status">connecting…</div>`;
    case "live":
      return view.lastError === null
        ? `<div class="status status-live">live · schema ${esc(view.schema ?? "?")}</div>`
        : `<div class="status status-warn">live · last error: ${esc(view.lastError)}</div>`;
    case "stale":
      return `<div class="status status-err">out-of-order message — refreshing…</div>`;
    case "disconnected":
      return `<div class="status status-err">disconnected — <button id="reconnect">reconnect</button></div>`;
  }
}
