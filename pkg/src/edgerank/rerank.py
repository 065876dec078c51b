"""Context-aware list construction.

The re-ranker maximizes ListReward: each placed video contributes its
engagement reward discounted by the accumulated continuation probability of
everything shown before it.  Search is beam search over partial permutations
with an adaptive early stop once the beam scores agree within a stability
threshold.  A factorial brute-force oracle is kept for testing.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Protocol, Sequence

import numpy as np

from .domain import Candidate, ClientContext, RerankConfig, WatchHistory
from .features import FeatureConfig, build_model_input, stack_bundles
from .model import LOSS_EPS, PredictionTriple, RankingModel

BRUTE_FORCE_GUARD = 7


class Scorer(Protocol):
    """Batched model interface used by the search: score each target candidate
    conditioned on the same (history, context, ordered prefix)."""

    def score(
        self,
        history: WatchHistory,
        ctx: ClientContext,
        prefix: Sequence[Candidate],
        targets: Sequence[Candidate],
    ) -> list[PredictionTriple]:
        ...


class ModelScorer:
    """Adapts a RankingModel to the Scorer protocol via feature building."""

    def __init__(self, model: RankingModel, include_history: bool = True):
        self.model = model
        self.include_history = include_history

    def score(self, history, ctx, prefix, targets):
        cfg = self.model.feature_config
        bundles = [
            build_model_input(history, list(prefix), t, ctx, cfg,
                              include_history=self.include_history)
            for t in targets
        ]
        probs = self.model.predict_proba(stack_bundles(bundles))
        probs = np.clip(probs, LOSS_EPS, 1 - LOSS_EPS)
        return [PredictionTriple(*map(float, row)) for row in probs]


def list_reward(step_predictions: Sequence[PredictionTriple], alpha: float, beta: float) -> float:
    """Discounted engagement reward of an ordered list.

    Position i earns alpha*p_effective_view + beta*p_like, weighted by the
    product of has_next probabilities of all earlier positions (1 for i=1).
    """
    if not step_predictions:
        raise ValueError("empty prediction sequence")
    if alpha < 0 or beta < 0:
        raise ValueError("alpha and beta must be non-negative")
    total = 0.0
    discount = 1.0
    for p in step_predictions:
        total += discount * (alpha * p.p_effective_view + beta * p.p_like)
        discount *= p.p_has_next
    return total


def stability(beam_scores: Sequence[float]) -> float:
    """min/max ratio of the current beam scores; 1.0 means the beam has settled."""
    if len(beam_scores) == 0:
        raise ValueError("empty beam")
    if not all(np.isfinite(beam_scores)):
        raise ValueError("beam scores must be finite")
    mx = max(beam_scores)
    if mx <= 0:
        return 0.0  # degenerate beam: keep searching
    return min(beam_scores) / mx


@dataclass(frozen=True)
class ScoredPrefix:
    indices: tuple[int, ...]
    list_reward: float
    discount: float  # accumulated has_next product after the last placed item
    step_predictions: tuple[PredictionTriple, ...]


@dataclass
class BeamStepDiagnostics:
    step: int
    beam_scores: list[float]
    stability: float


@dataclass
class BeamSearchResult:
    order: list[int]  # first n_show indices of the best beam
    best: ScoredPrefix
    steps_run: int
    diagnostics: list[BeamStepDiagnostics]
    stopped_early: bool


class _MemoScorer:
    """Per-search cache: each distinct prefix is scored against its free set
    once, shared across the widening passes."""

    def __init__(self, scorer: Scorer, candidates: Sequence[Candidate],
                 history: WatchHistory, ctx: ClientContext):
        self.scorer = scorer
        self.candidates = candidates
        self.history = history
        self.ctx = ctx
        self.cache: dict[tuple[int, ...], dict[int, PredictionTriple]] = {}

    def free_predictions(self, prefix_indices: tuple[int, ...]) -> dict[int, PredictionTriple]:
        if prefix_indices not in self.cache:
            prefix = [self.candidates[i] for i in prefix_indices]
            free = [i for i in range(len(self.candidates)) if i not in prefix_indices]
            preds = self.scorer.score(self.history, self.ctx, prefix,
                                      [self.candidates[i] for i in free])
            self.cache[prefix_indices] = dict(zip(free, preds))
        return self.cache[prefix_indices]


def _expand(beams: list[ScoredPrefix], memo: _MemoScorer,
            alpha: float, beta: float) -> list[ScoredPrefix]:
    expanded: list[ScoredPrefix] = []
    for beam in beams:
        preds = memo.free_predictions(beam.indices)
        if not preds:
            expanded.append(beam)
            continue
        for i, pred in preds.items():
            reward = beam.list_reward + beam.discount * (
                alpha * pred.p_effective_view + beta * pred.p_like
            )
            expanded.append(
                ScoredPrefix(
                    indices=beam.indices + (i,),
                    list_reward=reward,
                    discount=beam.discount * pred.p_has_next,
                    step_predictions=beam.step_predictions + (pred,),
                )
            )
    return expanded


def _top_k(prefixes: list[ScoredPrefix], k: int) -> list[ScoredPrefix]:
    # deterministic: reward descending, ties by lexicographic index order
    return sorted(prefixes, key=lambda p: (-p.list_reward, p.indices))[:k]


def _beam_pass(memo: _MemoScorer, width: int, n_steps: int,
               alpha: float, beta: float) -> ScoredPrefix:
    """One plain beam pass of a fixed width for a fixed number of steps."""
    beams = [ScoredPrefix((), 0.0, 1.0, ())]
    for _ in range(n_steps):
        beams = _top_k(_expand(beams, memo, alpha, beta), width)
    return beams[0]


def adaptive_beam_search(
    candidates: Sequence[Candidate],
    scorer: Scorer,
    history: WatchHistory,
    ctx: ClientContext,
    config: RerankConfig,
) -> BeamSearchResult:
    if not candidates:
        raise ValueError("empty candidate set")
    if config.n_show > len(candidates):
        raise ValueError("n_show exceeds candidate count")
    max_steps = max(config.n_show, min(len(candidates), config.max_steps))
    memo = _MemoScorer(scorer, candidates, history, ctx)
    beams = [ScoredPrefix((), 0.0, 1.0, ())]
    diagnostics: list[BeamStepDiagnostics] = []
    stopped_early = False
    steps_run = 0
    for step in range(1, max_steps + 1):
        beams = _top_k(
            _expand(beams, memo, config.alpha, config.beta),
            config.beam_size_k,
        )
        steps_run = step
        stab = stability([b.list_reward for b in beams])
        diagnostics.append(BeamStepDiagnostics(step, [b.list_reward for b in beams], stab))
        if step >= config.n_show and config.early_stop_enabled and stab >= config.stability_threshold_t:
            stopped_early = step < max_steps
            break
    # widening: also run every narrower width for the same horizon (cheap —
    # scored prefixes are shared through the memo) and keep the best sequence
    # found anywhere.  This makes the attained ListReward non-decreasing in
    # beam_size_k: the set of passes for width k is nested in that of k+1.
    best = beams[0]
    for width in range(1, config.beam_size_k):
        other = _beam_pass(memo, width, steps_run, config.alpha, config.beta)
        if other.list_reward > best.list_reward:
            best = other
    return BeamSearchResult(
        order=list(best.indices[:config.n_show]),
        best=best,
        steps_run=steps_run,
        diagnostics=diagnostics,
        stopped_early=stopped_early,
    )


def greedy_rank(
    candidates: Sequence[Candidate],
    scorer: Scorer,
    history: WatchHistory,
    ctx: ClientContext,
    alpha: float = 1.0,
    beta: float = 1.0,
) -> list[int]:
    """Point-wise baseline: order by individual reward with empty prefix context.

    The sort is stable, so equal scores keep the incoming (server) order.
    """
    if not candidates:
        raise ValueError("empty candidate set")
    preds = scorer.score(history, ctx, [], list(candidates))
    scores = [alpha * p.p_effective_view + beta * p.p_like for p in preds]
    return sorted(range(len(candidates)), key=lambda i: (-scores[i], i))


def brute_force_optimal(
    candidates: Sequence[Candidate],
    scorer: Scorer,
    history: WatchHistory,
    ctx: ClientContext,
    alpha: float = 1.0,
    beta: float = 1.0,
) -> tuple[tuple[int, ...], float]:
    """Exact maximum ListReward over every permutation; test oracle only."""
    m = len(candidates)
    if m == 0:
        raise ValueError("empty candidate set")
    if m > BRUTE_FORCE_GUARD:
        raise ValueError(f"brute force guarded at {BRUTE_FORCE_GUARD} candidates")
    # memoize per (prefix, target): permutations share prefix evaluations
    cache: dict[tuple[tuple[int, ...], int], PredictionTriple] = {}

    def pred_for(prefix: tuple[int, ...], target: int) -> PredictionTriple:
        key = (prefix, target)
        if key not in cache:
            free = [i for i in range(m) if i not in prefix]
            preds = scorer.score(
                history, ctx, [candidates[i] for i in prefix], [candidates[i] for i in free]
            )
            for i, p in zip(free, preds):
                cache[(prefix, i)] = p
        return cache[key]

    best_perm: tuple[int, ...] = ()
    best_lr = -float("inf")
    for perm in itertools.permutations(range(m)):
        total, discount = 0.0, 1.0
        prefix: tuple[int, ...] = ()
        for i in perm:
            p = pred_for(prefix, i)
            total += discount * (alpha * p.p_effective_view + beta * p.p_like)
            discount *= p.p_has_next
            prefix = prefix + (i,)
        if total > best_lr or (total == best_lr and perm < best_perm):
            best_perm, best_lr = perm, total
    return best_perm, best_lr
