"""Client-server loop at desk scale.

A synthetic server stub emulates the cloud recommender (noisy long-term
scores, pagination, extra candidates), a synthetic user produces feedback with
a session-level drifting interest that only the client can see in time, and
`run_experiment` measures per-arm engagement with paired seeds so the three
arms (server order, greedy, context-aware) are directly comparable.

Determinism: every random draw comes from a generator keyed by (seed, purpose,
session, ...) so the same (seed, configs, arm) always yields the same log, and
feedback draws for a given video reuse the same uniforms across arms (common
random numbers).
"""

from __future__ import annotations

import hashlib
import json
import math
from collections.abc import Sequence
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .domain import (
    Candidate,
    ClientContext,
    Feedback,
    NetCondition,
    ProtocolConfig,
    RerankConfig,
    ServerScores,
    VideoMeta,
    WatchHistory,
    WatchedRecord,
    candidate_to_dict,
    candidate_from_dict,
    effective_view_label,
    effective_view_threshold_s,
    push_watched,
    record_to_dict,
)
from .rerank import Scorer, adaptive_beam_search, greedy_rank

ARMS = ("server_order", "greedy", "context_aware")


def _sigmoid(x: float) -> float:
    return 1.0 / (1.0 + math.exp(-x))


def keyed_rng(*keys) -> np.random.Generator:
    h = hashlib.blake2b("|".join(map(str, keys)).encode(), digest_size=8).digest()
    return np.random.default_rng(int.from_bytes(h, "little"))


@dataclass(frozen=True)
class SimConfig:
    n_categories: int = 40
    n_videos: int = 5000
    duration_min_s: float = 5.0
    duration_max_s: float = 1800.0
    video_quality_sd: float = 0.6
    # engagement base logits
    base_effective_view: float = 0.4
    base_like: float = -2.2
    base_follow: float = -4.0
    base_share: float = -5.0
    base_exit: float = -2.8
    # session drift dynamics (logit units)
    delta_like: float = 0.8
    delta_effective_view: float = 0.3
    delta_skip: float = 0.2
    gamma: float = 0.9
    drift_ev_weight: float = 0.7
    drift_follow_weight: float = 0.7
    # server stub
    sigma: float = 0.35  # logit-space score noise
    server_pool_size: int = 60
    server_freshness: bool = True  # server sees drift with one-page delay
    # exit model: engaging videos keep the user in the session, which is the
    # whole reason ordering the list matters
    fatigue_coef: float = 0.05
    exit_engagement_coef: float = 0.5
    # short-term category satiation (logit units per repeat in the window)
    satiation_coef: float = 1.2
    satiation_window: int = 1
    net_penalty: tuple[float, float, float, float] = (0.0, 0.2, 0.8, 1.5)
    net_stay_prob: float = 0.85
    # session mechanics
    max_depth: int = 60
    swipe_gap_ms: int = 800


@dataclass
class VideoPool:
    category: np.ndarray  # (n,) int
    duration_s: np.ndarray  # (n,) float
    quality: np.ndarray  # (n,) float, per-video engagement offset

    def __len__(self) -> int:
        return len(self.category)

    @staticmethod
    def generate(cfg: SimConfig, seed: int) -> "VideoPool":
        rng = keyed_rng(seed, "pool")
        n = cfg.n_videos
        return VideoPool(
            category=rng.integers(0, cfg.n_categories, size=n),
            duration_s=np.exp(
                rng.uniform(math.log(cfg.duration_min_s), math.log(cfg.duration_max_s), size=n)
            ),
            quality=rng.normal(0.0, cfg.video_quality_sd, size=n),
        )

    def meta(self, idx: int) -> VideoMeta:
        return VideoMeta(f"v{idx:05d}", int(self.category[idx]), float(self.duration_s[idx]))


@dataclass
class SyntheticUser:
    user_id: str
    long_term: np.ndarray  # (C,) category interest logits
    drift: np.ndarray  # (C,) session-level shift, feedback-driven

    @staticmethod
    def generate(cfg: SimConfig, seed: int, user_idx: int) -> "SyntheticUser":
        rng = keyed_rng(seed, "user", user_idx)
        return SyntheticUser(
            user_id=f"u{user_idx:04d}",
            long_term=rng.normal(0.0, 1.0, size=cfg.n_categories),
            drift=np.zeros(cfg.n_categories),
        )

    def fresh_session(self) -> "SyntheticUser":
        return SyntheticUser(self.user_id, self.long_term.copy(), np.zeros_like(self.drift))


def engagement_logits(
    cfg: SimConfig, user: SyntheticUser, pool: VideoPool, vid: int,
    drift: np.ndarray | None = None,
    recent_categories: Sequence[int] = (),
) -> dict[str, float]:
    drift = user.drift if drift is None else drift
    c = int(pool.category[vid])
    base = float(user.long_term[c] + pool.quality[vid])
    d = float(drift[c])
    # short-term satiation: each repeat of the category within the last
    # satiation_window impressions dulls engagement, so the order in which a
    # page is shown changes what the user does
    window = list(recent_categories)[-cfg.satiation_window:] if cfg.satiation_window else []
    sat = cfg.satiation_coef * sum(1 for rc in window if rc == c)
    return {
        "effective_view": cfg.base_effective_view + 0.7 * base + cfg.drift_ev_weight * (d - sat),
        "like": cfg.base_like + base + d - sat,
        "follow": cfg.base_follow + base + cfg.drift_follow_weight * (d - sat),
        "share": cfg.base_share + base + d - sat,
    }


def exit_probability(
    cfg: SimConfig, position: int, net: NetCondition, engagement: float = 0.0
) -> float:
    """Chance the user leaves after the current video.

    `engagement` is the centered engagement logit of the video on screen;
    a boring video pushes the user out, an engaging one keeps them swiping.
    """
    return _sigmoid(
        cfg.base_exit
        + cfg.fatigue_coef * (position - 1)
        + cfg.net_penalty[net.index]
        - cfg.exit_engagement_coef * engagement
    )


def _centered_engagement(cfg: SimConfig, logits: dict[str, float]) -> float:
    # zero-mean across videos and users when the session drift is zero
    return 0.5 * (
        logits["effective_view"] - cfg.base_effective_view
        + logits["like"] - cfg.base_like
    )


def sample_feedback(
    cfg: SimConfig,
    user: SyntheticUser,
    pool: VideoPool,
    vid: int,
    position: int,
    net: NetCondition,
    crn_key: tuple,
    recent_categories: Sequence[int] = (),
) -> tuple[Feedback, bool, dict[str, float]]:
    """Draw feedback and the continue/exit decision for one impression.

    Draws are keyed by (session, video) so the same video receives the same
    uniforms in every arm of a paired experiment.
    """
    logits = engagement_logits(cfg, user, pool, vid, recent_categories=recent_categories)
    probs = {k: _sigmoid(v) for k, v in logits.items()}
    p_exit = exit_probability(cfg, position, net, _centered_engagement(cfg, logits))
    probs["has_next"] = 1.0 - p_exit
    u = keyed_rng(*crn_key, "fb", f"v{vid:05d}").random(6)
    ev = bool(u[0] < probs["effective_view"])
    like = bool(u[1] < probs["like"])
    follow = bool(u[2] < probs["follow"])
    share = bool(u[3] < probs["share"])
    duration = float(pool.duration_s[vid])
    thr = effective_view_threshold_s(duration)
    if ev:
        watch = float(thr + u[4] * max(duration - thr, 0.0))
    else:
        watch = float(u[4] * min(thr, duration) * 0.999)
    fb = Feedback(effective_view=effective_view_label(watch, duration), like=like,
                  follow=follow, share=share, watch_time_s=watch)
    has_next = bool(u[5] < probs["has_next"])
    return fb, has_next, probs


def update_drift(cfg: SimConfig, user: SyntheticUser, category: int, fb: Feedback) -> SyntheticUser:
    """Decay drift toward zero, then shift the watched category by feedback."""
    user.drift *= cfg.gamma
    if fb.like or fb.follow:
        user.drift[category] += cfg.delta_like
    elif fb.effective_view:
        user.drift[category] += cfg.delta_effective_view
    else:
        user.drift[category] -= cfg.delta_skip
    return user


class ServerStub:
    """Stands in for the cloud recommender: noisy long-term scores, no live
    session signal.  With `server_freshness` on, each page is scored with the
    drift the user had at the previous page fetch (feedback uploaded with the
    pagination request), which reproduces the page-boundary freshness effect."""

    def __init__(self, cfg: SimConfig, pool: VideoPool, seed: int):
        self.cfg = cfg
        self.pool = pool
        self.seed = seed

    def scores_for(self, user: SyntheticUser, vid: int, session_key, drift_view: np.ndarray) -> ServerScores:
        logits = engagement_logits(self.cfg, user, self.pool, vid, drift=drift_view)
        noise = keyed_rng(self.seed, "srvnoise", session_key, vid).normal(0.0, self.cfg.sigma, 3)
        return ServerScores(
            p_effective_view=_sigmoid(logits["effective_view"] + noise[0]),
            p_like=_sigmoid(logits["like"] + noise[1]),
            p_follow=_sigmoid(logits["follow"] + noise[2]),
        )

    def respond(
        self,
        user: SyntheticUser,
        drift_view: np.ndarray,
        session_key,
        page_idx: int,
        exclude: set[int],
        protocol: ProtocolConfig,
    ) -> list[Candidate]:
        rng = keyed_rng(self.seed, "page", session_key, page_idx)
        available = np.setdiff1d(np.arange(len(self.pool)), np.fromiter(exclude, dtype=int, count=len(exclude)) if exclude else np.empty(0, dtype=int))
        take = min(self.cfg.server_pool_size, len(available))
        retrieved = rng.choice(available, size=take, replace=False)
        scored = []
        for vid in retrieved:
            s = self.scores_for(user, int(vid), session_key, drift_view)
            combined = s.p_effective_view + s.p_like + s.p_follow
            scored.append((combined, int(vid), s))
        scored.sort(key=lambda t: (-t[0], t[1]))
        page = []
        for rank, (_, vid, s) in enumerate(scored[: protocol.page_return_total]):
            duration = float(self.pool.duration_s[vid])
            page.append(
                Candidate(
                    video=self.pool.meta(vid),
                    server_scores=s,
                    buffered_len_s=float(rng.uniform(0.0, min(6.0, duration))),
                    server_rank=rank,
                )
            )
        return page


def _vid_index(video_id: str) -> int:
    return int(video_id[1:])


def run_session(
    arm: str,
    user: SyntheticUser,
    stub: ServerStub,
    protocol: ProtocolConfig,
    rerank_cfg: RerankConfig,
    sim_cfg: SimConfig,
    scorer: Scorer | None,
    session_key,
    history_max_len: int = 20,
) -> list[dict]:
    """One full client session; returns the ordered event log."""
    if arm not in ARMS:
        raise ValueError(f"unknown arm {arm!r}")
    if arm != "server_order" and scorer is None:
        raise ValueError(f"arm {arm!r} needs a scorer")
    user = user.fresh_session()
    pool = stub.pool
    events: list[dict] = [{
        "kind": "session_start",
        "user_id": user.user_id,
        "arm": arm,
        "session_key": str(session_key),
        "protocol": asdict(protocol),
        "rerank": asdict(rerank_cfg),
    }]
    history = WatchHistory(max_len=history_max_len)
    queue: list[Candidate] = []
    shown: set[str] = set()
    drift_view = np.zeros_like(user.drift)
    consumed = 0
    page_idx = 0
    pos = 1
    now_ms = 1_000_000
    net = NetCondition.WIFI
    reason = "depth_cap"

    while pos <= sim_cfg.max_depth:
        if consumed % protocol.page_consume_m == 0:
            discarded = [c.video.video_id for c in queue]
            exclude = {_vid_index(v) for v in shown} | {_vid_index(c.video.video_id) for c in queue}
            queue = stub.respond(user, drift_view, session_key, page_idx, exclude, protocol)
            if sim_cfg.server_freshness:
                drift_view = user.drift.copy()
            events.append({
                "kind": "page_fetch",
                "page": page_idx,
                "consumed": consumed,
                "discarded": discarded,
                "candidates": [candidate_to_dict(c) for c in queue],
            })
            page_idx += 1

        # per-impression network state, shared across arms
        u_net = keyed_rng(session_key, "net", pos).random()
        if u_net > sim_cfg.net_stay_prob:
            choices = [n for n in NetCondition if n is not net]
            net = choices[int(u_net * 1e6) % len(choices)]
        ctx = ClientContext(net, pos, now_ms)

        # the arm decides which queued candidate is shown next
        if arm == "greedy":
            order = greedy_rank(queue, scorer, history, ctx, rerank_cfg.alpha, rerank_cfg.beta)
            pick = order[0]
            events.append({
                "kind": "rerank", "pos": pos, "method": "greedy",
                "order_before": [c.video.video_id for c in queue],
                "order_after": [queue[i].video.video_id for i in order],
            })
        elif arm == "context_aware":
            result = adaptive_beam_search(queue, scorer, history, ctx, rerank_cfg)
            pick = result.order[0]
            events.append({
                "kind": "rerank", "pos": pos, "method": "beam",
                "order_before": [c.video.video_id for c in queue],
                "order_after": [queue[i].video.video_id for i in result.best.indices],
                "steps_run": result.steps_run,
                "stability": [d.stability for d in result.diagnostics],
                "stopped_early": result.stopped_early,
            })
        elif arm == "server_order":
            pick = min(range(len(queue)), key=lambda i: queue[i].server_rank)

        cand = queue.pop(pick)
        vid = _vid_index(cand.video.video_id)
        fb, has_next, probs = sample_feedback(
            sim_cfg, user, pool, vid, pos, net, (session_key,),
            recent_categories=[int(r.video.category_id) for r in history.records],
        )
        record = WatchedRecord(
            video=cand.video, server_scores=cand.server_scores, feedback=fb,
            impression_ts_ms=now_ms, impression_pos=pos,
        )
        page_slot = consumed % protocol.page_consume_m + 1
        events.append({
            "kind": "impression",
            "pos": pos,
            "page": page_idx - 1,
            "page_slot": page_slot,
            "record": record_to_dict(record),
            "buffered_len_s": cand.buffered_len_s,
            "server_rank": cand.server_rank,
            "net": net.value,
            "labels": {
                "has_next": int(has_next),
                "effective_view": int(fb.effective_view),
                "like": int(fb.like),
                "follow": int(fb.follow),
                "share": int(fb.share),
                "watch_time_s": fb.watch_time_s,
            },
            "true_p": probs,
        })
        shown.add(cand.video.video_id)
        history = push_watched(history, record)
        update_drift(sim_cfg, user, int(cand.video.category_id), fb)
        consumed += 1
        pos += 1
        now_ms += int(fb.watch_time_s * 1000) + sim_cfg.swipe_gap_ms
        if not has_next:
            reason = "exit"
            break

    events.append({"kind": "session_end", "depth": pos - 1, "reason": reason})
    return events


# ---------------------------------------------------------------------------
# log I/O, validation, metrics


def write_events(path: str | Path, events: list[dict]) -> None:
    with open(path, "w") as f:
        for e in events:
            f.write(json.dumps(e, sort_keys=True) + "\n")


def read_events(path: str | Path) -> list[dict]:
    with open(path) as f:
        return [json.loads(line) for line in f if line.strip()]


def validate_session(events: list[dict], protocol: ProtocolConfig) -> list[str]:
    """Protocol conformance check over one session log; returns violations."""
    errors: list[str] = []
    shown: list[str] = []
    queue_ids: set[str] = set()
    consumed = 0
    expected_pos = 1
    last_ts = -1
    for e in events:
        kind = e.get("kind")
        if kind == "page_fetch":
            if e["consumed"] != consumed:
                errors.append(f"page fetch at consumed={e['consumed']}, expected {consumed}")
            if consumed % protocol.page_consume_m != 0:
                errors.append(f"page fetch off-cadence at consumed={consumed}")
            if set(e["discarded"]) != queue_ids:
                errors.append("discarded set does not match leftover queue")
            queue_ids = {c["video"]["video_id"] for c in e["candidates"]}
            if len(e["candidates"]) != protocol.page_return_total:
                errors.append(f"page size {len(e['candidates'])}")
        elif kind == "impression":
            rec = e["record"]
            vid = rec["video"]["video_id"]
            if vid in shown:
                errors.append(f"duplicate impression {vid}")
            if vid not in queue_ids:
                errors.append(f"impression {vid} not in current page queue")
            queue_ids.discard(vid)
            if e["pos"] != expected_pos or rec["impression_pos"] != expected_pos:
                errors.append(f"impression pos {e['pos']} != expected {expected_pos}")
            if rec["impression_ts_ms"] <= last_ts:
                errors.append("impression timestamps not increasing")
            fb = rec["feedback"]
            want_ev = effective_view_label(fb["watch_time_s"], rec["video"]["duration_s"])
            if bool(fb["effective_view"]) != want_ev:
                errors.append(f"effective_view label inconsistent at pos {expected_pos}")
            last_ts = rec["impression_ts_ms"]
            shown.append(vid)
            consumed += 1
            expected_pos += 1
    return errors


def metrics_from_events(events: list[dict]) -> dict:
    """Independent integer-arithmetic recompute of session engagement counts."""
    imps = [e for e in events if e["kind"] == "impression"]
    n = len(imps)
    return {
        "impressions": n,
        "likes": sum(e["labels"]["like"] for e in imps),
        "effective_views": sum(e["labels"]["effective_view"] for e in imps),
        "follows": sum(e["labels"]["follow"] for e in imps),
        "depth": n,
    }


# ---------------------------------------------------------------------------
# experiments


@dataclass
class ExperimentReport:
    arms: list[str]
    base_arm: str
    n_sessions: int
    rates: dict  # arm -> {like_rate, effective_view_rate, follow_rate, mean_depth}
    uplift: dict  # arm -> {metric: {value, ci_low, ci_high}}
    per_position: dict  # arm -> list of like-rate by absolute position
    per_page_slot_uplift: dict  # arm -> list of like-rate uplift by within-page slot
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def _rates(per_session: list[dict]) -> dict:
    imps = sum(s["impressions"] for s in per_session)
    return {
        "like_rate": sum(s["likes"] for s in per_session) / max(imps, 1),
        "effective_view_rate": sum(s["effective_views"] for s in per_session) / max(imps, 1),
        "follow_rate": sum(s["follows"] for s in per_session) / max(imps, 1),
        "mean_depth": sum(s["depth"] for s in per_session) / max(len(per_session), 1),
    }


def bootstrap_uplift(
    base: list[dict], arm: list[dict], key: str, n_boot: int = 1000, seed: int = 0
) -> dict:
    """Percentile bootstrap over paired sessions of the relative rate uplift."""
    rng = np.random.default_rng(seed)
    b_num = np.array([s[key] for s in base], dtype=float)
    b_den = np.array([s["impressions"] for s in base], dtype=float)
    a_num = np.array([s[key] for s in arm], dtype=float)
    a_den = np.array([s["impressions"] for s in arm], dtype=float)

    def uplift(idx):
        rb = b_num[idx].sum() / max(b_den[idx].sum(), 1.0)
        ra = a_num[idx].sum() / max(a_den[idx].sum(), 1.0)
        return (ra - rb) / rb if rb > 0 else 0.0

    n = len(base)
    point = uplift(np.arange(n))
    if n_boot < 1:  # point estimate only
        return {"value": float(point), "ci_low": float(point), "ci_high": float(point)}
    samples = np.array([uplift(rng.integers(0, n, size=n)) for _ in range(n_boot)])
    lo, hi = np.percentile(samples, [2.5, 97.5])
    return {"value": float(point), "ci_low": float(lo), "ci_high": float(hi)}


def run_experiment(
    arms: list[str],
    n_users: int,
    n_sessions: int,
    seed: int,
    *,
    sim_cfg: SimConfig | None = None,
    protocol: ProtocolConfig | None = None,
    rerank_cfg: RerankConfig | None = None,
    scorer: Scorer | None = None,
    collect_events: bool = False,
    n_boot: int = 1000,
) -> tuple[ExperimentReport, dict[str, list[list[dict]]]]:
    """Paired multi-arm experiment: same users, sessions, and feedback draws."""
    if n_sessions < 1:
        raise ValueError("n_sessions must be >= 1")
    sim_cfg = sim_cfg or SimConfig()
    protocol = protocol or ProtocolConfig()
    rerank_cfg = rerank_cfg or RerankConfig()
    pool = VideoPool.generate(sim_cfg, seed)
    stub = ServerStub(sim_cfg, pool, seed)
    users = [SyntheticUser.generate(sim_cfg, seed, i) for i in range(n_users)]

    per_arm_sessions: dict[str, list[dict]] = {a: [] for a in arms}
    per_arm_events: dict[str, list[list[dict]]] = {a: [] for a in arms}
    max_depth = sim_cfg.max_depth
    pos_like = {a: np.zeros(max_depth) for a in arms}
    pos_imps = {a: np.zeros(max_depth) for a in arms}
    slot_like = {a: np.zeros(protocol.page_consume_m) for a in arms}
    slot_imps = {a: np.zeros(protocol.page_consume_m) for a in arms}

    for s in range(n_sessions):
        user = users[s % n_users]
        for arm in arms:
            events = run_session(
                arm, user, stub, protocol, rerank_cfg, sim_cfg, scorer, session_key=(seed, s)
            )
            per_arm_sessions[arm].append(metrics_from_events(events))
            if collect_events:
                per_arm_events[arm].append(events)
            for e in events:
                if e["kind"] != "impression":
                    continue
                p = e["pos"] - 1
                pos_like[arm][p] += e["labels"]["like"]
                pos_imps[arm][p] += 1
                sl = e["page_slot"] - 1
                slot_like[arm][sl] += e["labels"]["like"]
                slot_imps[arm][sl] += 1

    base = arms[0]
    rates = {a: _rates(per_arm_sessions[a]) for a in arms}
    uplift = {}
    for a in arms[1:]:
        uplift[a] = {
            "like": bootstrap_uplift(per_arm_sessions[base], per_arm_sessions[a], "likes",
                                     n_boot=n_boot, seed=seed),
            "effective_view": bootstrap_uplift(per_arm_sessions[base], per_arm_sessions[a],
                                               "effective_views", n_boot=n_boot, seed=seed),
        }
    per_position = {
        a: list(np.divide(pos_like[a], pos_imps[a], out=np.zeros(max_depth),
                          where=pos_imps[a] > 0))
        for a in arms
    }
    slot_rate = {
        a: np.divide(slot_like[a], slot_imps[a], out=np.zeros(protocol.page_consume_m),
                     where=slot_imps[a] > 0)
        for a in arms
    }
    per_slot_uplift = {}
    for a in arms[1:]:
        with np.errstate(divide="ignore", invalid="ignore"):
            u = (slot_rate[a] - slot_rate[base]) / slot_rate[base]
        per_slot_uplift[a] = [float(x) if np.isfinite(x) else 0.0 for x in u]

    report = ExperimentReport(
        arms=list(arms),
        base_arm=base,
        n_sessions=n_sessions,
        rates=rates,
        uplift=uplift,
        per_position=per_position,
        per_page_slot_uplift=per_slot_uplift,
        config={
            "seed": seed,
            "n_users": n_users,
            "sim": asdict(sim_cfg),
            "protocol": asdict(protocol),
            "rerank": asdict(rerank_cfg),
        },
    )
    return report, per_arm_events


def split_sessions(events: list[dict]) -> list[list[dict]]:
    """Split a concatenated multi-session event stream on session_start."""
    sessions: list[list[dict]] = []
    for e in events:
        if e["kind"] == "session_start":
            sessions.append([])
        if not sessions:
            raise ValueError("event stream does not begin with session_start")
        sessions[-1].append(e)
    return sessions


@dataclass
class RerankTrigger:
    """Snapshot of the client state at the moment a re-rank would fire."""

    queue: list[Candidate]
    history: WatchHistory
    ctx: ClientContext


def collect_rerank_triggers(
    n_triggers: int,
    seed: int,
    *,
    sim_cfg: SimConfig | None = None,
    protocol: ProtocolConfig | None = None,
    min_queue: int = 5,
    history_max_len: int = 20,
) -> list[RerankTrigger]:
    """Harvest realistic (queue, history, context) states from server-order
    sessions, for benchmarking the re-ranker outside the session loop."""
    sim_cfg = sim_cfg or SimConfig()
    protocol = protocol or ProtocolConfig()
    pool = VideoPool.generate(sim_cfg, seed)
    stub = ServerStub(sim_cfg, pool, seed)
    triggers: list[RerankTrigger] = []
    session = 0
    while len(triggers) < n_triggers:
        user = SyntheticUser.generate(sim_cfg, seed, session).fresh_session()
        history = WatchHistory(max_len=history_max_len)
        queue: list[Candidate] = []
        shown: set[str] = set()
        drift_view = np.zeros_like(user.drift)
        consumed, page_idx, pos, now_ms = 0, 0, 1, 1_000_000
        net = NetCondition.WIFI
        while pos <= sim_cfg.max_depth and len(triggers) < n_triggers:
            if consumed % protocol.page_consume_m == 0:
                exclude = {_vid_index(v) for v in shown} | {
                    _vid_index(c.video.video_id) for c in queue
                }
                queue = stub.respond(user, drift_view, (seed, session), page_idx, exclude, protocol)
                if sim_cfg.server_freshness:
                    drift_view = user.drift.copy()
                page_idx += 1
            ctx = ClientContext(net, pos, now_ms)
            if len(queue) >= min_queue and len(history):
                triggers.append(RerankTrigger(list(queue), history, ctx))
            cand = queue.pop(0)
            vid = _vid_index(cand.video.video_id)
            fb, has_next, _ = sample_feedback(
                sim_cfg, user, pool, vid, pos, net, ((seed, session),),
                recent_categories=[int(r.video.category_id) for r in history.records],
            )
            record = WatchedRecord(cand.video, cand.server_scores, fb, now_ms, pos)
            shown.add(cand.video.video_id)
            history = push_watched(history, record)
            update_drift(sim_cfg, user, int(cand.video.category_id), fb)
            consumed += 1
            pos += 1
            now_ms += int(fb.watch_time_s * 1000) + sim_cfg.swipe_gap_ms
            if not has_next:
                break
        session += 1
    return triggers
