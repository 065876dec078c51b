import json

import pytest
from fastapi.testclient import TestClient

from edgerank.demo import DemoSession, create_app
from edgerank.domain import ProtocolConfig
from edgerank.features import FeatureConfig
from edgerank.model import ModelConfig, RankingModel
from edgerank.serialize import save_model
from edgerank.sim import validate_session


@pytest.fixture(scope="module")
def model_path(tmp_path_factory):
    path = tmp_path_factory.mktemp("demo") / "model.bin"
    save_model(RankingModel(ModelConfig(), FeatureConfig(), seed=0), path)
    return str(path)


def feedback_msg(video_id, watch=3.0, like=False):
    return json.dumps({"kind": "feedback", "payload": {
        "video_id": video_id, "watch_time_s": watch, "like": like,
    }})


def drain_until(ws, kind, collected=None):
    """Receive messages until one of `kind` arrives; returns (message, all)."""
    got = []
    while True:
        m = ws.receive_json()
        got.append(m)
        if collected is not None:
            collected.extend([m])
        if m["kind"] == kind:
            return m, got


class TestConnection:
    def test_initial_burst(self, model_path):
        client = TestClient(create_app(model_path, seed=1))
        with client.websocket_connect("/ws") as ws:
            kinds = [ws.receive_json()["kind"] for _ in range(4)]
        assert kinds == ["session_start", "page_fetch", "rerank_result", "next_video"]

    def test_healthz_reports_schema(self, model_path):
        client = TestClient(create_app(model_path, seed=1))
        r = client.get("/healthz")
        assert r.status_code == 200
        assert r.json()["schema"] == FeatureConfig().schema_version

    def test_sessions_deterministic_per_seed(self, model_path):
        def first_video(seed):
            client = TestClient(create_app(model_path, seed=seed))
            with client.websocket_connect("/ws") as ws:
                for _ in range(3):
                    ws.receive_json()
                return ws.receive_json()["payload"]["video_id"]

        assert first_video(5) == first_video(5)


class TestInteraction:
    def test_feedback_advances_session(self, model_path):
        client = TestClient(create_app(model_path, seed=2))
        with client.websocket_connect("/ws") as ws:
            for _ in range(3):
                ws.receive_json()
            cur = ws.receive_json()["payload"]
            ws.send_text(feedback_msg(cur["video_id"], watch=8.0, like=True))
            m, got = drain_until(ws, "metrics")
            kinds = [g["kind"] for g in got]
            assert "rerank_result" in kinds and "next_video" in kinds
            assert m["payload"]["depth"] == 1 and m["payload"]["likes"] == 1

    def test_seq_strictly_increasing(self, model_path):
        client = TestClient(create_app(model_path, seed=2))
        seqs = []
        with client.websocket_connect("/ws") as ws:
            for _ in range(3):
                seqs.append(ws.receive_json()["seq"])
            cur = ws.receive_json()
            seqs.append(cur["seq"])
            for _ in range(3):
                ws.send_text(feedback_msg(cur["payload"]["video_id"]))
                m, got = drain_until(ws, "metrics")
                seqs.extend(g["seq"] for g in got)
                cur = next(g for g in got if g["kind"] == "next_video")
        assert seqs == sorted(seqs) and len(set(seqs)) == len(seqs)

    def test_wrong_video_feedback_is_error_and_state_unchanged(self, model_path):
        client = TestClient(create_app(model_path, seed=3))
        with client.websocket_connect("/ws") as ws:
            for _ in range(3):
                ws.receive_json()
            cur = ws.receive_json()["payload"]
            ws.send_text(feedback_msg("v99999"))
            err = ws.receive_json()
            assert err["kind"] == "error"
            # the current video still accepts feedback afterwards
            ws.send_text(feedback_msg(cur["video_id"]))
            m, _ = drain_until(ws, "metrics")
            assert m["payload"]["depth"] == 1

    def test_unknown_kind_is_error(self, model_path):
        client = TestClient(create_app(model_path, seed=3))
        with client.websocket_connect("/ws") as ws:
            for _ in range(4):
                ws.receive_json()
            ws.send_text(json.dumps({"kind": "mystery"}))
            assert ws.receive_json()["kind"] == "error"
            ws.send_text("not json at all")
            assert ws.receive_json()["kind"] == "error"

    def test_malformed_watch_time_is_error(self, model_path):
        client = TestClient(create_app(model_path, seed=3))
        with client.websocket_connect("/ws") as ws:
            for _ in range(3):
                ws.receive_json()
            cur = ws.receive_json()["payload"]
            ws.send_text(json.dumps({"kind": "feedback", "payload": {
                "video_id": cur["video_id"], "watch_time_s": "soon"}}))
            assert ws.receive_json()["kind"] == "error"


class TestProtocolAndRecording:
    def test_page_fetch_cadence_and_recorded_log(self, model_path, tmp_path):
        record = tmp_path / "session.ndjson"
        client = TestClient(create_app(model_path, seed=4, record_path=str(record)))
        fetch_after = []
        with client.websocket_connect("/ws") as ws:
            for _ in range(3):
                ws.receive_json()
            cur = ws.receive_json()["payload"]
            for action in range(13):
                ws.send_text(feedback_msg(cur["video_id"], watch=6.0))
                _, got = drain_until(ws, "metrics")
                if any(g["kind"] == "page_fetch" for g in got):
                    fetch_after.append(action + 1)
                cur = next(g for g in got if g["kind"] == "next_video")["payload"]
        assert fetch_after == [6, 12]
        events = [json.loads(line) for line in record.read_text().splitlines()]
        assert validate_session(events, ProtocolConfig()) == []
        imps = [e for e in events if e["kind"] == "impression"]
        assert len(imps) == 13
        assert imps[-1]["labels"]["has_next"] == 0
        assert all(e["labels"]["has_next"] == 1 for e in imps[:-1])

    def test_rerank_result_consistent_with_queue(self, model_path):
        client = TestClient(create_app(model_path, seed=5))
        with client.websocket_connect("/ws") as ws:
            ws.receive_json()
            page = ws.receive_json()["payload"]
            rr = ws.receive_json()["payload"]
            nv = ws.receive_json()["payload"]
            queue_ids = {c["video"]["video_id"] for c in page["candidates"]}
            assert set(rr["order_before"]) == queue_ids
            assert set(rr["order_after"]) == queue_ids
            assert nv["video_id"] == rr["order_after"][0]
            assert set(rr["predictions"]) == queue_ids
            for p in rr["predictions"].values():
                assert 0 < p["p_like"] < 1


class TestDemoSessionUnit:
    def test_close_without_impressions(self, model_path):
        from edgerank.serialize import load_model

        session = DemoSession(load_model(model_path), seed=6)
        session.start()
        events = session.close()
        assert events[-1]["kind"] == "session_end"
        assert validate_session(events, ProtocolConfig()) == []
