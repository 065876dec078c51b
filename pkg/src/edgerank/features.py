"""Feature engineering: raw session state -> numeric model inputs.

The bundle keeps scalars raw (the model soft-discretizes them itself, so the
discretization stays learnable) and carries integer ids for the categorical
embeddings plus masks for the two variable-length sequences.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .domain import (
    Candidate,
    ClientContext,
    Feedback,
    NetCondition,
    ServerScores,
    VideoMeta,
    WatchHistory,
    WatchedRecord,
)

# per-record scalar layout, history sequence
HIST_SCALARS = (
    "watch_time_log",
    "pxtr_effective_view",
    "pxtr_like",
    "pxtr_follow",
    "pxtr_diff_effective_view",
    "pxtr_diff_like",
    "pxtr_diff_follow",
    "time_since_log_ms",
    "position_gap_log",
)
# per-record scalar layout, candidate encodings (ordered prefix + target)
CAND_SCALARS = (
    "pxtr_effective_view",
    "pxtr_like",
    "pxtr_follow",
    "buffered_len_log_s",
    "display_pos_log",
)
CTX_SCALARS = ("next_pos_log", "prev_category_match")

# category-match x strongest-feedback crossing codes
FB_STRENGTH_NONE = 0
FB_STRENGTH_EFFECTIVE_VIEW = 1
FB_STRENGTH_SHARE = 2
FB_STRENGTH_LIKE = 3
FB_STRENGTH_FOLLOW = 4
_N_STRENGTH = 5
FB_CROSS_OOV = 2 * _N_STRENGTH  # reserved code for out-of-vocabulary categories
FB_CROSS_VOCAB = 2 * _N_STRENGTH + 1


@dataclass(frozen=True)
class FeatureConfig:
    n_categories: int = 40
    duration_buckets: int = 64
    history_len: int = 20
    max_ordered: int = 5  # == max beam search steps
    category_dim: int = 16
    duration_dim: int = 16
    feedback_dim: int = 8
    net_dim: int = 8
    autodis_buckets: int = 16
    autodis_dim: int = 8
    autodis_tau: float = 1.0

    @property
    def category_vocab(self) -> int:
        # slot 0 reserved for out-of-vocabulary categories
        return self.n_categories + 1

    @property
    def schema_version(self) -> str:
        return (
            f"fb1:cat{self.category_vocab}:dur{self.duration_buckets}"
            f":h{self.history_len}:o{self.max_ordered}"
            f":hs{len(HIST_SCALARS)}:cs{len(CAND_SCALARS)}:xs{len(CTX_SCALARS)}"
            f":e{self.category_dim}.{self.duration_dim}.{self.feedback_dim}.{self.net_dim}"
            f":ad{self.autodis_buckets}.{self.autodis_dim}"
        )

    def category_index(self, category_id: int) -> int:
        if 0 <= category_id < self.n_categories:
            return category_id + 1
        return 0

    def duration_bucket(self, duration_s: float) -> int:
        d = min(max(duration_s, 1.0), 1800.0)
        frac = math.log(d) / math.log(1800.0)
        return min(self.duration_buckets - 1, int(frac * self.duration_buckets))


def pxtr_diff(candidate: ServerScores, hist: ServerScores) -> np.ndarray:
    """Per-rate difference between a candidate's and a watched video's scores."""
    return np.array(candidate.as_tuple()) - np.array(hist.as_tuple())


def recency_and_gap(target_ctx: ClientContext, hist: WatchedRecord) -> tuple[int, int]:
    time_since_ms = target_ctx.now_ts_ms - hist.impression_ts_ms
    position_gap = target_ctx.next_impression_pos - hist.impression_pos
    if time_since_ms < 0 or position_gap < 1:
        raise ValueError(
            "history record newer than the current context; session bookkeeping is corrupt"
        )
    return time_since_ms, position_gap


def feedback_strength(fb: Feedback) -> int:
    if fb.follow:
        return FB_STRENGTH_FOLLOW
    if fb.like:
        return FB_STRENGTH_LIKE
    if fb.share:
        return FB_STRENGTH_SHARE
    if fb.effective_view:
        return FB_STRENGTH_EFFECTIVE_VIEW
    return FB_STRENGTH_NONE


def cross_with_category_feedback(
    target_category: int, hist_category: int, hist_feedback: Feedback, cfg: FeatureConfig
) -> int:
    """Crossing code combining category match with the strongest feedback signal.

    Unknown categories collapse to a single reserved code rather than erroring:
    feature construction must never abort on vocabulary drift.
    """
    if cfg.category_index(target_category) == 0 or cfg.category_index(hist_category) == 0:
        return FB_CROSS_OOV
    match = 1 if target_category == hist_category else 0
    return match * _N_STRENGTH + feedback_strength(hist_feedback)


def autodis_weights(x: float, proj_w: np.ndarray, proj_b: np.ndarray, tau: float) -> np.ndarray:
    """Soft-discretization bucket weights: temperature softmax over learned logits."""
    if tau <= 0:
        raise ValueError("temperature must be positive")
    logits = (proj_w * x + proj_b) / tau
    z = logits - logits.max()
    e = np.exp(z)
    return e / e.sum()


def autodis_embed(
    x: float, meta_embeddings: np.ndarray, proj_w: np.ndarray, proj_b: np.ndarray, tau: float
) -> np.ndarray:
    """Embed a scalar as a convex combination of meta-embeddings."""
    w = autodis_weights(x, proj_w, proj_b, tau)
    return w @ meta_embeddings


@dataclass(frozen=True)
class FeatureBundle:
    """Fixed-shape numeric inputs for one (context, target) model evaluation."""

    schema: str
    hist_cat: np.ndarray  # (H,) int
    hist_dur: np.ndarray  # (H,) int
    hist_fb: np.ndarray  # (H,) int crossing codes
    hist_scalars: np.ndarray  # (H, len(HIST_SCALARS))
    hist_mask: np.ndarray  # (H,) float, 1 = real record
    ord_cat: np.ndarray  # (S,) int
    ord_dur: np.ndarray  # (S,) int
    ord_scalars: np.ndarray  # (S, len(CAND_SCALARS))
    ord_mask: np.ndarray  # (S,) float
    tgt_cat: int
    tgt_dur: int
    tgt_scalars: np.ndarray  # (len(CAND_SCALARS),)
    net: int
    ctx_scalars: np.ndarray  # (len(CTX_SCALARS),)

    def tobytes(self) -> bytes:
        parts = [
            self.schema.encode(),
            self.hist_cat.tobytes(), self.hist_dur.tobytes(), self.hist_fb.tobytes(),
            self.hist_scalars.tobytes(), self.hist_mask.tobytes(),
            self.ord_cat.tobytes(), self.ord_dur.tobytes(),
            self.ord_scalars.tobytes(), self.ord_mask.tobytes(),
            bytes([self.tgt_cat % 256, self.tgt_dur % 256, self.net % 256]),
            self.tgt_scalars.tobytes(), self.ctx_scalars.tobytes(),
        ]
        return b"|".join(parts)


@dataclass
class BundleBatch:
    """Column-stacked feature bundles for vectorized forward passes."""

    schema: str
    hist_cat: np.ndarray  # (B, H)
    hist_dur: np.ndarray
    hist_fb: np.ndarray
    hist_scalars: np.ndarray  # (B, H, ns)
    hist_mask: np.ndarray
    ord_cat: np.ndarray  # (B, S)
    ord_dur: np.ndarray
    ord_scalars: np.ndarray
    ord_mask: np.ndarray
    tgt_cat: np.ndarray  # (B,)
    tgt_dur: np.ndarray
    tgt_scalars: np.ndarray  # (B, nc)
    net: np.ndarray
    ctx_scalars: np.ndarray  # (B, nx)

    def __len__(self) -> int:
        return self.hist_cat.shape[0]


def stack_bundles(bundles: list[FeatureBundle]) -> BundleBatch:
    if not bundles:
        raise ValueError("empty batch")
    schema = bundles[0].schema
    if any(b.schema != schema for b in bundles):
        raise ValueError("mixed feature schemas in one batch")
    return BundleBatch(
        schema=schema,
        hist_cat=np.stack([b.hist_cat for b in bundles]),
        hist_dur=np.stack([b.hist_dur for b in bundles]),
        hist_fb=np.stack([b.hist_fb for b in bundles]),
        hist_scalars=np.stack([b.hist_scalars for b in bundles]),
        hist_mask=np.stack([b.hist_mask for b in bundles]),
        ord_cat=np.stack([b.ord_cat for b in bundles]),
        ord_dur=np.stack([b.ord_dur for b in bundles]),
        ord_scalars=np.stack([b.ord_scalars for b in bundles]),
        ord_mask=np.stack([b.ord_mask for b in bundles]),
        tgt_cat=np.array([b.tgt_cat for b in bundles]),
        tgt_dur=np.array([b.tgt_dur for b in bundles]),
        tgt_scalars=np.stack([b.tgt_scalars for b in bundles]),
        net=np.array([b.net for b in bundles]),
        ctx_scalars=np.stack([b.ctx_scalars for b in bundles]),
    )


def encode_history_sequence(
    history: WatchHistory, target: Candidate, ctx: ClientContext, cfg: FeatureConfig
):
    H = cfg.history_len
    cat = np.zeros(H, dtype=np.int64)
    dur = np.zeros(H, dtype=np.int64)
    fb = np.zeros(H, dtype=np.int64)
    scalars = np.zeros((H, len(HIST_SCALARS)), dtype=np.float64)
    mask = np.zeros(H, dtype=np.float64)
    records = history.records[-H:]
    for i, rec in enumerate(records):
        time_since_ms, gap = recency_and_gap(ctx, rec)
        diff = pxtr_diff(target.server_scores, rec.server_scores)
        cat[i] = cfg.category_index(rec.video.category_id)
        dur[i] = cfg.duration_bucket(rec.video.clamped_duration_s)
        fb[i] = cross_with_category_feedback(
            target.video.category_id, rec.video.category_id, rec.feedback, cfg
        )
        scalars[i] = [
            math.log1p(rec.feedback.watch_time_s),
            *rec.server_scores.as_tuple(),
            *diff,
            math.log1p(time_since_ms),
            math.log1p(gap),
        ]
        mask[i] = 1.0
    return cat, dur, fb, scalars, mask


def encode_candidate_slot(
    video: VideoMeta,
    scores: ServerScores,
    buffered_len_s: float,
    display_pos: int,
    cfg: FeatureConfig,
) -> tuple[int, int, np.ndarray]:
    scalars = np.array(
        [
            *scores.as_tuple(),
            math.log1p(buffered_len_s),
            math.log1p(display_pos),
        ],
        dtype=np.float64,
    )
    return (
        cfg.category_index(video.category_id),
        cfg.duration_bucket(video.clamped_duration_s),
        scalars,
    )


def context_scalar_vector(
    ctx: ClientContext, prev_category_id: int | None, target_category_id: int
) -> np.ndarray:
    """Context scalars: session position, plus whether the target repeats the
    category of the item shown immediately before it.  Back-to-back category
    repeats dull short-term engagement, and the model can only act on that if
    the adjacency is an explicit input."""
    match = 1.0 if prev_category_id is not None and int(prev_category_id) == int(
        target_category_id) else 0.0
    return np.array([math.log1p(ctx.next_impression_pos), match], dtype=np.float64)


def build_model_input(
    history: WatchHistory,
    ordered_candidates: list[Candidate],
    target: Candidate,
    ctx: ClientContext,
    cfg: FeatureConfig,
    include_history: bool = True,
) -> FeatureBundle:
    """Assemble the model input for scoring `target` after `ordered_candidates`.

    Candidates have not been shown yet, so their prospective display positions
    extend the session: slot i of the ordered prefix lands at
    next_impression_pos + i and the target right after the prefix.
    `include_history=False` blanks the real-time sequence (ablation arm).
    """
    seen = set()
    for c in ordered_candidates:
        if c.video.video_id in seen or c.video.video_id == target.video.video_id:
            raise ValueError("duplicate video in ordered prefix/target")
        seen.add(c.video.video_id)
    if include_history and len(history):
        h_cat, h_dur, h_fb, h_scal, h_mask = encode_history_sequence(history, target, ctx, cfg)
    else:
        H = cfg.history_len
        h_cat = np.zeros(H, dtype=np.int64)
        h_dur = np.zeros(H, dtype=np.int64)
        h_fb = np.zeros(H, dtype=np.int64)
        h_scal = np.zeros((H, len(HIST_SCALARS)), dtype=np.float64)
        h_mask = np.zeros(H, dtype=np.float64)

    S = cfg.max_ordered
    o_cat = np.zeros(S, dtype=np.int64)
    o_dur = np.zeros(S, dtype=np.int64)
    o_scal = np.zeros((S, len(CAND_SCALARS)), dtype=np.float64)
    o_mask = np.zeros(S, dtype=np.float64)
    prefix = ordered_candidates[-S:]
    for i, c in enumerate(prefix):
        pos = ctx.next_impression_pos + i
        o_cat[i], o_dur[i], o_scal[i] = encode_candidate_slot(
            c.video, c.server_scores, c.buffered_len_s, pos, cfg
        )
        o_mask[i] = 1.0

    tgt_pos = ctx.next_impression_pos + len(prefix)
    t_cat, t_dur, t_scal = encode_candidate_slot(
        target.video, target.server_scores, target.buffered_len_s, tgt_pos, cfg
    )
    # the item shown right before the target: last of the planned prefix, or the
    # last watched video when the target would be shown next
    if ordered_candidates:
        prev_cat: int | None = int(ordered_candidates[-1].video.category_id)
    elif include_history and len(history):
        prev_cat = int(history.records[-1].video.category_id)
    else:
        prev_cat = None
    return FeatureBundle(
        schema=cfg.schema_version,
        hist_cat=h_cat, hist_dur=h_dur, hist_fb=h_fb,
        hist_scalars=h_scal, hist_mask=h_mask,
        ord_cat=o_cat, ord_dur=o_dur, ord_scalars=o_scal, ord_mask=o_mask,
        tgt_cat=t_cat, tgt_dur=t_dur, tgt_scalars=t_scal,
        net=ctx.net_condition.index,
        ctx_scalars=context_scalar_vector(ctx, prev_cat, target.video.category_id),
    )


def feature_schema_document(cfg: FeatureConfig) -> dict:
    """Machine-readable description of every feature the model consumes."""
    return {
        "schema_version": cfg.schema_version,
        "sequences": {
            "history": {
                "max_len": cfg.history_len,
                "ids": {
                    "category": {"vocab": cfg.category_vocab, "dim": cfg.category_dim, "oov_index": 0},
                    "duration_bucket": {"vocab": cfg.duration_buckets, "dim": cfg.duration_dim},
                    "feedback_cross": {"vocab": FB_CROSS_VOCAB, "dim": cfg.feedback_dim,
                                       "oov_code": FB_CROSS_OOV},
                },
                "scalars": list(HIST_SCALARS),
            },
            "ordered_candidates": {
                "max_len": cfg.max_ordered,
                "ids": {
                    "category": {"vocab": cfg.category_vocab, "dim": cfg.category_dim},
                    "duration_bucket": {"vocab": cfg.duration_buckets, "dim": cfg.duration_dim},
                },
                "scalars": list(CAND_SCALARS),
            },
        },
        "target": {"scalars": list(CAND_SCALARS)},
        "context": {
            "net_condition": {"vocab": len(NetCondition), "dim": cfg.net_dim},
            "scalars": list(CTX_SCALARS),
        },
        "scalar_encoding": {
            "method": "learned soft discretization",
            "buckets": cfg.autodis_buckets,
            "dim": cfg.autodis_dim,
            "temperature": cfg.autodis_tau,
        },
    }
