"""Edge-side re-ranking engine for sequential short-video feeds."""

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
    effective_view_label,
    push_watched,
)
from .features import FeatureBundle, FeatureConfig, build_model_input, stack_bundles
from .model import ModelConfig, PredictionTriple, RankingModel
from .rerank import (
    ModelScorer,
    adaptive_beam_search,
    brute_force_optimal,
    greedy_rank,
    list_reward,
    stability,
)
from .serialize import load_model, save_model

__all__ = [
    "Candidate", "ClientContext", "Feedback", "NetCondition", "ProtocolConfig",
    "RerankConfig", "ServerScores", "VideoMeta", "WatchHistory", "WatchedRecord",
    "effective_view_label", "push_watched",
    "FeatureBundle", "FeatureConfig", "build_model_input", "stack_bundles",
    "ModelConfig", "PredictionTriple", "RankingModel",
    "ModelScorer", "adaptive_beam_search", "brute_force_optimal", "greedy_rank",
    "list_reward", "stability",
    "load_model", "save_model",
]
