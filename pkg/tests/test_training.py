import numpy as np
import pytest

from edgerank.domain import ProtocolConfig, RerankConfig
from edgerank.features import FeatureConfig
from edgerank.model import ModelConfig, RankingModel
from edgerank.sim import ServerStub, SimConfig, SyntheticUser, run_session
from edgerank.training import (
    auc,
    evaluate_auc,
    examples_from_session,
    examples_from_sessions,
    train_model,
)

SIM = SimConfig()
PROTO = ProtocolConfig()
FC = FeatureConfig()

SMALL_FC = FeatureConfig(n_categories=40, duration_buckets=8, history_len=4,
                         max_ordered=2, category_dim=3, duration_dim=3,
                         feedback_dim=2, net_dim=2, autodis_buckets=4, autodis_dim=2)
SMALL_MC = ModelConfig(heads=2, head_dim=2, experts=2, expert_hidden=4,
                       expert_out=4, tower_dims=(4, 1))


@pytest.fixture(scope="module")
def session_events():
    from edgerank.sim import VideoPool

    pool = VideoPool.generate(SIM, 6)
    stub = ServerStub(SIM, pool, 6)
    out = []
    for s in range(25):
        user = SyntheticUser.generate(SIM, 6, s % 5)
        out.append(run_session("server_order", user, stub, PROTO, RerankConfig(), SIM,
                               None, session_key=(6, s)))
    return out


class TestAuc:
    def test_perfect_and_reversed(self):
        labels = np.array([0, 0, 1, 1])
        assert auc(labels, np.array([0.1, 0.2, 0.8, 0.9])) == 1.0
        assert auc(labels, np.array([0.9, 0.8, 0.2, 0.1])) == 0.0

    def test_random_is_half(self):
        rng = np.random.default_rng(0)
        labels = rng.integers(0, 2, size=5000)
        scores = rng.random(5000)
        assert auc(labels, scores) == pytest.approx(0.5, abs=0.03)

    def test_ties_get_midrank(self):
        labels = np.array([0, 1, 0, 1])
        scores = np.array([0.5, 0.5, 0.5, 0.5])
        assert auc(labels, scores) == 0.5

    def test_degenerate_single_class(self):
        assert auc(np.ones(5), np.random.random(5)) == 0.5
        assert auc(np.zeros(5), np.random.random(5)) == 0.5

    def test_matches_pairwise_definition(self):
        rng = np.random.default_rng(1)
        labels = rng.integers(0, 2, size=60)
        scores = rng.random(60)
        pos = scores[labels == 1]
        neg = scores[labels == 0]
        wins = sum((p > n) + 0.5 * (p == n) for p in pos for n in neg)
        assert auc(labels, scores) == pytest.approx(wins / (len(pos) * len(neg)))


class TestExampleExtraction:
    def test_one_example_per_impression(self, session_events):
        for events in session_events:
            n_imp = sum(e["kind"] == "impression" for e in events)
            assert len(examples_from_session(events, FC)) == n_imp

    def test_history_grows_through_session(self, session_events):
        events = max(session_events, key=lambda ev: len(ev))
        examples = examples_from_session(events, FC)
        assert examples[0].bundle.hist_mask.sum() == 0
        if len(examples) > 3:
            assert examples[3].bundle.hist_mask.sum() == 3

    def test_labels_match_log(self, session_events):
        events = session_events[0]
        imps = [e for e in events if e["kind"] == "impression"]
        examples = examples_from_session(events, FC)
        for e, ex in zip(imps, examples):
            np.testing.assert_array_equal(
                ex.labels,
                [e["labels"]["has_next"], e["labels"]["effective_view"], e["labels"]["like"]],
            )
            assert ex.server_scores == (
                e["record"]["server_scores"]["p_effective_view"],
                e["record"]["server_scores"]["p_like"],
                e["record"]["server_scores"]["p_follow"],
            )

    def test_no_history_ablation_blanks_sequence(self, session_events):
        examples = examples_from_session(session_events[0], FC, include_history=False)
        for ex in examples:
            assert ex.bundle.hist_mask.sum() == 0

    def test_ordered_prefix_filled_from_watched_tail(self, session_events):
        events = max(session_events, key=lambda ev: len(ev))
        examples = examples_from_session(events, FC)
        if len(examples) >= FC.max_ordered + 1:
            assert examples[FC.max_ordered].bundle.ord_mask.sum() == FC.max_ordered

    def test_multi_session_concat(self, session_events):
        total = sum(len(examples_from_session(ev, FC)) for ev in session_events)
        assert len(examples_from_sessions(session_events, FC)) == total


class TestTraining:
    def test_loss_decreases(self, session_events):
        examples = examples_from_sessions(session_events, SMALL_FC)
        model = RankingModel(SMALL_MC, SMALL_FC, seed=0)
        losses = train_model(examples, model, epochs=3, batch_size=64, lr=3e-3, seed=0)
        first = np.mean(losses[:3])
        last = np.mean(losses[-3:])
        assert last < first

    def test_checkpoint_callback_cadence(self, session_events):
        examples = examples_from_sessions(session_events[:5], SMALL_FC)
        model = RankingModel(SMALL_MC, SMALL_FC, seed=0)
        seen = []
        train_model(examples, model, epochs=2, batch_size=32, lr=1e-3, seed=0,
                    checkpoint_cb=lambda step, loss: seen.append(step), checkpoint_every=2)
        assert seen and all(s % 2 == 0 for s in seen)

    def test_evaluate_auc_keys(self, session_events):
        examples = examples_from_sessions(session_events[:5], SMALL_FC)
        model = RankingModel(SMALL_MC, SMALL_FC, seed=0)
        result = evaluate_auc(model, examples)
        assert set(result) == {
            "has_next_auc", "effective_view_auc", "like_auc",
            "server_effective_view_auc", "server_like_auc",
        }
        for v in result.values():
            assert 0.0 <= v <= 1.0

    def test_server_baseline_independent_of_model(self, session_events):
        examples = examples_from_sessions(session_events[:5], SMALL_FC)
        a = evaluate_auc(RankingModel(SMALL_MC, SMALL_FC, seed=0), examples)
        b = evaluate_auc(RankingModel(SMALL_MC, SMALL_FC, seed=1), examples)
        assert a["server_like_auc"] == b["server_like_auc"]
        assert a["like_auc"] != b["like_auc"]
