"""Turn session logs into training data, train the ranker, score it offline.

Impression events are replayed in order so every example sees exactly the
watch history that existed when the video was shown.  The ordered-candidates
input at training time is the chronological tail of previously watched videos,
matching how the prefix slots are used during beam search.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .domain import (
    Candidate,
    ClientContext,
    NetCondition,
    WatchHistory,
    push_watched,
    record_from_dict,
)
from .features import (
    CAND_SCALARS,
    CTX_SCALARS,
    FeatureBundle,
    FeatureConfig,
    HIST_SCALARS,
    context_scalar_vector,
    encode_candidate_slot,
    encode_history_sequence,
    stack_bundles,
)
from .model import Adam, RankingModel


@dataclass
class LabeledExample:
    bundle: FeatureBundle
    labels: np.ndarray  # (3,) has_next, effective_view, like
    server_scores: tuple[float, float, float]  # baseline ranker for comparison


def examples_from_session(
    events: list[dict], cfg: FeatureConfig, include_history: bool = True
) -> list[LabeledExample]:
    """Replay one session log into per-impression training examples."""
    history = WatchHistory(max_len=cfg.history_len)
    watched: list[tuple] = []  # (record, buffered_len_s)
    out: list[LabeledExample] = []
    for e in events:
        if e["kind"] != "impression":
            continue
        rec = record_from_dict(e["record"])
        target = Candidate(
            video=rec.video,
            server_scores=rec.server_scores,
            buffered_len_s=min(e["buffered_len_s"], rec.video.duration_s),
            server_rank=e["server_rank"],
        )
        ctx = ClientContext(
            net_condition=NetCondition(e["net"]),
            next_impression_pos=rec.impression_pos,
            now_ts_ms=rec.impression_ts_ms,
        )
        if include_history and len(history):
            h_cat, h_dur, h_fb, h_scal, h_mask = encode_history_sequence(
                history, target, ctx, cfg
            )
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
        for i, (wrec, wbuf) in enumerate(watched[-S:]):
            o_cat[i], o_dur[i], o_scal[i] = encode_candidate_slot(
                wrec.video, wrec.server_scores, min(wbuf, wrec.video.duration_s),
                wrec.impression_pos, cfg,
            )
            o_mask[i] = 1.0

        t_cat, t_dur, t_scal = encode_candidate_slot(
            target.video, target.server_scores, target.buffered_len_s,
            rec.impression_pos, cfg,
        )
        bundle = FeatureBundle(
            schema=cfg.schema_version,
            hist_cat=h_cat, hist_dur=h_dur, hist_fb=h_fb,
            hist_scalars=h_scal, hist_mask=h_mask,
            ord_cat=o_cat, ord_dur=o_dur, ord_scalars=o_scal, ord_mask=o_mask,
            tgt_cat=t_cat, tgt_dur=t_dur, tgt_scalars=t_scal,
            net=ctx.net_condition.index,
            ctx_scalars=context_scalar_vector(
                ctx,
                int(watched[-1][0].video.category_id) if watched else None,
                rec.video.category_id,
            ),
        )
        labels = np.array([
            e["labels"]["has_next"],
            e["labels"]["effective_view"],
            e["labels"]["like"],
        ], dtype=np.float64)
        out.append(LabeledExample(bundle, labels, rec.server_scores.as_tuple()))
        history = push_watched(history, rec)
        watched.append((rec, e["buffered_len_s"]))
    return out


def examples_from_sessions(
    sessions: list[list[dict]], cfg: FeatureConfig, include_history: bool = True
) -> list[LabeledExample]:
    out: list[LabeledExample] = []
    for ev in sessions:
        out.extend(examples_from_session(ev, cfg, include_history))
    return out


def auc(labels: np.ndarray, scores: np.ndarray) -> float:
    """Rank-based AUC with midrank tie handling."""
    labels = np.asarray(labels, dtype=float)
    scores = np.asarray(scores, dtype=float)
    n_pos = labels.sum()
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        return 0.5
    order = np.argsort(scores, kind="mergesort")
    ranks = np.empty(len(scores))
    sorted_scores = scores[order]
    i = 0
    while i < len(scores):
        j = i
        while j + 1 < len(scores) and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    pos_rank_sum = ranks[labels > 0.5].sum()
    return float((pos_rank_sum - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))


def evaluate_auc(model: RankingModel, examples: list[LabeledExample],
                 batch_size: int = 1024) -> dict[str, float]:
    """Per-task AUC of the model, plus the server-score baseline per task."""
    preds = []
    for start in range(0, len(examples), batch_size):
        chunk = examples[start:start + batch_size]
        preds.append(model.predict_proba(stack_bundles([ex.bundle for ex in chunk])))
    probs = np.concatenate(preds)
    labels = np.stack([ex.labels for ex in examples])
    server = np.array([ex.server_scores for ex in examples])
    return {
        "has_next_auc": auc(labels[:, 0], probs[:, 0]),
        "effective_view_auc": auc(labels[:, 1], probs[:, 1]),
        "like_auc": auc(labels[:, 2], probs[:, 2]),
        "server_effective_view_auc": auc(labels[:, 1], server[:, 0]),
        "server_like_auc": auc(labels[:, 2], server[:, 1]),
    }


def train_model(
    examples: list[LabeledExample],
    model: RankingModel,
    *,
    epochs: int = 2,
    batch_size: int = 256,
    lr: float = 1e-3,
    seed: int = 0,
    checkpoint_cb=None,
    checkpoint_every: int = 0,
) -> list[float]:
    """Train in place; optionally export periodic checkpoints via callback."""
    bundles = [ex.bundle for ex in examples]
    labels = np.stack([ex.labels for ex in examples])

    def cb(step, loss):
        if checkpoint_cb is not None and checkpoint_every and step % checkpoint_every == 0:
            checkpoint_cb(step, loss)

    return model.fit(bundles, labels, epochs=epochs, batch_size=batch_size, lr=lr,
                     seed=seed, callback=cb)
