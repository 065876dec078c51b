"""Interactive demo: one live session over a websocket, human as the user.

Message framing: JSON objects {kind, seq, payload}.  Outgoing kinds are
session_start, next_video, rerank_result, page_fetch, metrics, error; the
client sends feedback messages.  seq is strictly increasing per connection.
State transitions mirror the simulator's session loop exactly, and the
service can record a simulator-shaped event log that the standard session
validator accepts.
"""

from __future__ import annotations

import dataclasses
import json
from pathlib import Path

import numpy as np
from fastapi import FastAPI, WebSocket, WebSocketDisconnect

from .domain import (
    Candidate,
    ClientContext,
    Feedback,
    NetCondition,
    ProtocolConfig,
    RerankConfig,
    WatchHistory,
    WatchedRecord,
    candidate_to_dict,
    push_watched,
    record_to_dict,
)
from .rerank import ModelScorer, adaptive_beam_search
from .serialize import load_model
from .sim import ServerStub, SimConfig, SyntheticUser, VideoPool, _vid_index, update_drift

MESSAGE_KINDS = (
    "session_start", "next_video", "feedback", "rerank_result", "page_fetch", "metrics", "error",
)


class DemoSession:
    """Single-connection session state machine; the socket peer is the user."""

    def __init__(self, model, seed: int, protocol: ProtocolConfig | None = None,
                 rerank_cfg: RerankConfig | None = None):
        self.model = model
        self.scorer = ModelScorer(model)
        self.seed = seed
        self.protocol = protocol or ProtocolConfig()
        self.rerank_cfg = rerank_cfg or RerankConfig()
        self.sim_cfg = SimConfig()
        self.pool = VideoPool.generate(self.sim_cfg, seed)
        self.stub = ServerStub(self.sim_cfg, self.pool, seed)
        # the stub still needs a long-term profile to score against; the human's
        # live feedback drives its drift view exactly as in the simulator
        self.profile = SyntheticUser.generate(self.sim_cfg, seed, 0).fresh_session()
        self.drift_view = np.zeros_like(self.profile.drift)
        self.history = WatchHistory()
        self.queue: list[Candidate] = []
        self.shown: set[str] = set()
        self.seq = 0
        self.pos = 1
        self.consumed = 0
        self.page_idx = 0
        self.now_ms = 1_000_000
        self.net = NetCondition.WIFI
        self.current: Candidate | None = None
        self.likes = 0
        self.effective_views = 0
        self.chosen_pred_like = 0.0
        self.server_pred_like = 0.0
        self.events: list[dict] = []  # simulator-shaped log for the validator
        self.events.append({
            "kind": "session_start",
            "user_id": "human",
            "arm": "context_aware",
            "session_key": f"demo-{seed}",
            "protocol": dataclasses.asdict(self.protocol),
            "rerank": dataclasses.asdict(self.rerank_cfg),
        })

    # -- message plumbing ---------------------------------------------------

    def _msg(self, kind: str, payload: dict) -> dict:
        self.seq += 1
        return {"kind": kind, "seq": self.seq, "payload": payload}

    def _ctx(self) -> ClientContext:
        return ClientContext(self.net, self.pos, self.now_ms)

    # -- session steps ------------------------------------------------------

    def start(self) -> list[dict]:
        out = [self._msg("session_start", {
            "user_id": "human",
            "seed": self.seed,
            "schema": self.model.schema,
            "protocol": dataclasses.asdict(self.protocol),
        })]
        out.extend(self._maybe_fetch_page())
        out.extend(self._rerank_and_advance())
        return out

    def _maybe_fetch_page(self) -> list[dict]:
        if self.consumed % self.protocol.page_consume_m != 0:
            return []
        discarded = [c.video.video_id for c in self.queue]
        exclude = {_vid_index(v) for v in self.shown} | {
            _vid_index(c.video.video_id) for c in self.queue
        }
        self.queue = self.stub.respond(
            self.profile, self.drift_view, f"demo-{self.seed}", self.page_idx, exclude,
            self.protocol,
        )
        self.drift_view = self.profile.drift.copy()
        self.events.append({
            "kind": "page_fetch",
            "page": self.page_idx,
            "consumed": self.consumed,
            "discarded": discarded,
            "candidates": [candidate_to_dict(c) for c in self.queue],
        })
        self.page_idx += 1
        return [self._msg("page_fetch", {
            "page": self.page_idx - 1,
            "discarded": discarded,
            "candidates": [candidate_to_dict(c) for c in self.queue],
        })]

    def _rerank_and_advance(self) -> list[dict]:
        ctx = self._ctx()
        before = [c.video.video_id for c in self.queue]
        result = adaptive_beam_search(self.queue, self.scorer, self.history, ctx, self.rerank_cfg)
        preds = self.scorer.score(self.history, ctx, [], self.queue)
        per_candidate = {
            c.video.video_id: {
                "p_has_next": p.p_has_next,
                "p_effective_view": p.p_effective_view,
                "p_like": p.p_like,
            }
            for c, p in zip(self.queue, preds)
        }
        pick = result.order[0]
        after = [self.queue[i].video.video_id for i in result.best.indices]
        after += [v for v in before if v not in after]
        msgs = [self._msg("rerank_result", {
            "order_before": before,
            "order_after": after,
            "predictions": per_candidate,
            "steps_run": result.steps_run,
            "stability": [d.stability for d in result.diagnostics],
        })]
        self.current = self.queue.pop(pick)
        self.chosen_pred_like += per_candidate[self.current.video.video_id]["p_like"]
        server_pick = min([self.current] + self.queue, key=lambda c: c.server_rank)
        self.server_pred_like += per_candidate[server_pick.video.video_id]["p_like"]
        msgs.append(self._msg("next_video", {
            "video_id": self.current.video.video_id,
            "category_id": self.current.video.category_id,
            "duration_s": self.current.video.duration_s,
            "server_scores": dataclasses.asdict(self.current.server_scores),
            "position": self.pos,
        }))
        return msgs

    def handle(self, message: dict) -> list[dict]:
        kind = message.get("kind")
        if kind != "feedback":
            return [self._msg("error", {"reason": f"unsupported message kind {kind!r}"})]
        payload = message.get("payload", {})
        if self.current is None:
            return [self._msg("error", {"reason": "no video on screen"})]
        if payload.get("video_id") != self.current.video.video_id:
            return [self._msg("error", {
                "reason": "feedback does not reference the current video",
                "current": self.current.video.video_id,
            })]
        try:
            watch = float(payload.get("watch_time_s", 0.0))
            fb = Feedback.from_watch(
                watch, self.current.video.duration_s,
                like=bool(payload.get("like", False)),
                follow=bool(payload.get("follow", False)),
                share=bool(payload.get("share", False)),
            )
        except (TypeError, ValueError) as e:
            return [self._msg("error", {"reason": f"bad feedback payload: {e}"})]

        record = WatchedRecord(
            video=self.current.video, server_scores=self.current.server_scores,
            feedback=fb, impression_ts_ms=self.now_ms, impression_pos=self.pos,
        )
        self.events.append({
            "kind": "impression",
            "pos": self.pos,
            "page": self.page_idx - 1,
            "page_slot": self.consumed % self.protocol.page_consume_m + 1,
            "record": record_to_dict(record),
            "buffered_len_s": self.current.buffered_len_s,
            "server_rank": self.current.server_rank,
            "net": self.net.value,
            "labels": {
                "has_next": 1,  # rewritten to 0 for the final impression on close
                "effective_view": int(fb.effective_view),
                "like": int(fb.like),
                "follow": int(fb.follow),
                "share": int(fb.share),
                "watch_time_s": fb.watch_time_s,
            },
        })
        self.history = push_watched(self.history, record)
        update_drift(self.sim_cfg, self.profile, self.current.video.category_id, fb)
        self.shown.add(self.current.video.video_id)
        self.likes += int(fb.like)
        self.effective_views += int(fb.effective_view)
        self.consumed += 1
        self.pos += 1
        self.now_ms += int(watch * 1000) + self.sim_cfg.swipe_gap_ms
        self.current = None

        out = self._maybe_fetch_page()
        out.extend(self._rerank_and_advance())
        out.append(self._msg("metrics", {
            "depth": self.pos - 1,
            "likes": self.likes,
            "effective_views": self.effective_views,
            "chosen_pred_like_sum": self.chosen_pred_like,
            "server_pred_like_sum": self.server_pred_like,
        }))
        return out

    def close(self) -> list[dict]:
        for e in reversed(self.events):
            if e["kind"] == "impression":
                e["labels"]["has_next"] = 0
                break
        self.events.append({"kind": "session_end", "depth": self.pos - 1, "reason": "exit"})
        return self.events


def create_app(model_path: str, seed: int = 0, record_path: str | None = None) -> FastAPI:
    model = load_model(model_path)  # shared read-only across connections
    app = FastAPI(title="edgerank demo")

    @app.get("/healthz")
    def healthz():
        return {"ok": True, "schema": model.schema}

    @app.websocket("/ws")
    async def ws(socket: WebSocket):
        await socket.accept()
        session = DemoSession(model, seed)
        try:
            for msg in session.start():
                await socket.send_text(json.dumps(msg))
            while True:
                raw = await socket.receive_text()
                try:
                    message = json.loads(raw)
                except json.JSONDecodeError:
                    message = {"kind": "malformed"}
                for msg in session.handle(message):
                    await socket.send_text(json.dumps(msg))
        except WebSocketDisconnect:
            pass
        finally:
            events = session.close()
            if record_path:
                with open(record_path, "w") as f:
                    for e in events:
                        f.write(json.dumps(e, sort_keys=True) + "\n")

    return app
