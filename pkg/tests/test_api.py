"""HTTP layer: endpoint behavior, error mapping, and server-push replay.

These tests run the engine to completion first (virtual clock, no waiting)
and then poke the API; the server-push stream terminates once the engine is
finished, so its full replay can be collected synchronously.
"""

import json

import pytest
from fastapi.testclient import TestClient

from streamkg.api import EngineRunner, create_app
from streamkg.engine import MODE_STREAMING, StreamEngine, builtin_config
from streamkg.ingest import load_scenario


@pytest.fixture(scope="module")
def served(suite_dir, tmp_path_factory):
    scenario = load_scenario(suite_dir / "hit_and_run_1.scn")
    engine = StreamEngine(builtin_config(MODE_STREAMING), scenario,
                          store_dir=str(tmp_path_factory.mktemp("store")))
    runner = EngineRunner(engine)
    runner.run_to_completion()
    return TestClient(create_app(runner)), engine


@pytest.fixture(scope="module")
def client(served):
    return served[0]


class TestReadEndpoints:
    def test_healthz(self, client):
        body = client.get("/healthz").json()
        assert body["status"] == "ok"
        assert body["finished"] is True
        assert body["t"] > 7.0  # the whole stream was consumed

    def test_metrics(self, client):
        body = client.get("/metrics").json()
        assert body["mode"] == "streamingrag"
        assert body["scenario"] == "hit_and_run_1"
        assert body["loaded_memory_mb"] == 10000.0

    def test_alerts_and_cursor_resume(self, client):
        body = client.get("/alerts").json()
        assert body["cursor"] == 1
        assert [a["pattern"] for a in body["alerts"]] == ["hit_and_run"]
        again = client.get("/alerts", params={"since": body["cursor"]}).json()
        assert again == {"cursor": body["cursor"], "alerts": []}

    def test_kg_filters(self, client):
        body = client.get("/kg", params={"predicate": "collided_with"}).json()
        assert body["count"] == len(body["triples"]) > 0
        assert all(t["predicate"] == "collided_with" for t in body["triples"])
        assert "car1" in body["entities"] and "p1" in body["entities"]

        windowed = client.get("/kg", params={"start": 0, "end": 3}).json()
        assert windowed["triples"]
        assert all(t["t"] <= 3.0 for t in windowed["triples"])

        pinned = client.get("/kg", params={"entity": "car1"}).json()
        assert all("car1" in (t["subject"], t["object"])
                   for t in pinned["triples"])

    def test_standing_queries_listed(self, client):
        listed = client.get("/queries").json()["queries"]
        names = {q["name"] for q in listed if q["kind"] == "standing"}
        assert {"hit_and_run", "v2v_collision", "v2p_collision",
                "commotion"} <= names


class TestQuerySubmission:
    def test_interactive_roundtrip_and_refine(self, client):
        res = client.post("/interactive",
                          json={"query": "what happened about=p1 window=60s"})
        assert res.status_code == 200
        parent = res.json()
        assert parent["kind"] == "interactive"
        assert parent["supporting"]

        refined = client.post(f"/interactive/{parent['query_id']}/refine",
                              json={"refinement": "focus=lying_on"})
        assert refined.status_code == 200
        child = refined.json()
        child_uids = {t["uid"] for t in child["supporting"]}
        assert child_uids <= {t["uid"] for t in parent["supporting"]}

        thread = client.get(f"/interactive/{parent['query_id']}").json()
        assert [c["query_id"] for c in thread["children"]] == [child["query_id"]]

    def test_plain_text_gets_interactive_prefix(self, client):
        res = client.post("/interactive", json={"query": "recap window=10s"})
        assert res.status_code == 200
        assert res.json()["kind"] == "interactive"

    def test_standing_via_generic_endpoint(self, client):
        res = client.post("/queries",
                          json={"query": "standing burn: (vehicle on_fire *)"})
        assert res.status_code == 200
        assert res.json()["kind"] == "standing"

    def test_standing_rejected_on_interactive_endpoint(self, client):
        res = client.post("/interactive",
                          json={"query": "standing z: (vehicle on_fire *)"})
        assert res.status_code == 400
        assert "interactive" in res.json()["detail"]

    def test_error_mapping(self, client):
        assert client.post("/queries", json={}).status_code == 400
        assert client.post("/interactive",
                           json={"query": "x focus=warp"}).status_code == 400
        assert client.post("/interactive/nope/refine",
                           json={"refinement": "window=5s"}).status_code == 404
        assert client.get("/interactive/nope").status_code == 404
        assert client.post("/interactive/nope/refine",
                           json={}).status_code == 400


class TestEventStream:
    def parse_sse(self, text):
        events = []
        for block in text.strip().split("\n\n"):
            lines = dict(line.split(": ", 1) for line in block.splitlines())
            events.append((int(lines["id"]), json.loads(lines["data"])))
        return events

    def test_replay_matches_control_log(self, served):
        client, engine = served
        with client.stream("GET", "/events") as res:
            assert res.headers["content-type"].startswith("text/event-stream")
            body = "".join(res.iter_text())
        events = self.parse_sse(body)
        ids = [i for i, _ in events]
        assert ids == list(range(1, len(events) + 1))
        replayed = [json.dumps(e, sort_keys=True, separators=(",", ":"))
                    for _, e in events]
        assert replayed == engine.control_log_lines()
        kinds = [e["event"] for _, e in events]
        assert kinds[0] == "plan"
        assert "end" in kinds  # later queries may append events after it
        assert "alert" in kinds

    def test_since_cursor_skips_prefix(self, client):
        with client.stream("GET", "/events") as res:
            full = self.parse_sse("".join(res.iter_text()))
        cut = len(full) // 2
        with client.stream("GET", "/events", params={"since": cut}) as res:
            tail = self.parse_sse("".join(res.iter_text()))
        assert tail == full[cut:]
        assert tail[0][0] == cut + 1
