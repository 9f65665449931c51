import json

import pytest
from fastapi.testclient import TestClient

from facelab.cleaning import clean
from facelab.service import (
    DecisionLog,
    Lockfile,
    LogLocked,
    apply_log,
    build_app,
    queue_from_records,
)
from facelab.synthgen import GenSpec, generate


@pytest.fixture()
def tie_corpus():
    """Corpus guaranteed to contain race/gender ties needing adjudication."""
    spec = GenSpec(subject_count=120, mean_arrests=2.0, max_arrests=2,
                   rate_race_flip=0.25, rate_gender_flip=0.1, master_seed=12)
    records, _, truth = generate(spec)
    queue = queue_from_records(records)
    assert queue, "fixture must produce pending items"
    return records, queue, truth


@pytest.fixture()
def client(tie_corpus, tmp_path):
    records, queue, truth = tie_corpus
    log = DecisionLog(tmp_path / "decisions.jsonl")
    app = build_app(queue, log)
    return TestClient(app), records, queue, truth, log


class TestDecisionLog:
    def test_append_and_last_write_wins(self, tmp_path):
        log = DecisionLog(tmp_path / "log.jsonl")
        log.append("x", "B", "ann")
        log.append("y", "W", "ann")
        log.append("x", "O", "ann2")
        assert log.decisions() == {"x": "O", "y": "W"}
        assert len(log.entries()) == 3

    def test_partial_trailing_line_skipped(self, tmp_path):
        path = tmp_path / "log.jsonl"
        log = DecisionLog(path)
        log.append("x", "B", "ann")
        with open(path, "a") as fh:
            fh.write('{"item_id": "y", "decis')  # simulated crash mid-write
        assert log.decisions() == {"x": "B"}

    def test_hash_tracks_content(self, tmp_path):
        log = DecisionLog(tmp_path / "log.jsonl")
        empty = log.content_hash()
        log.append("x", "B", "ann")
        assert log.content_hash() != empty

    def test_lockfile_blocks_second_owner(self, tmp_path):
        lock = Lockfile(tmp_path / "log.jsonl")
        lock.acquire("serve")
        with pytest.raises(LogLocked):
            Lockfile(tmp_path / "log.jsonl").acquire("clean")
        lock.release()
        Lockfile(tmp_path / "log.jsonl").acquire("clean")


class TestEndpoints:
    def test_empty_queue(self, tmp_path):
        app = build_app([], DecisionLog(tmp_path / "log.jsonl"))
        c = TestClient(app)
        body = c.get("/items").json()
        assert body == {"items": [], "total": 0, "page": 1, "page_size": 50}
        assert c.get("/summary").json()["total"] == 0

    def test_list_and_get(self, client):
        c, _, queue, _, _ = client
        body = c.get("/items", params={"status": "pending"}).json()
        assert body["total"] == len(queue)
        first = body["items"][0]
        single = c.get(f"/items/{first['item_id']}").json()
        assert single["status"] == "pending"
        assert single["evidence"]["records"]
        assert single["allowed_values"]

    def test_unknown_item_404(self, client):
        c = client[0]
        assert c.get("/items/nope").status_code == 404
        assert c.post("/items/nope/decision",
                      json={"decision": "B"}).status_code == 404

    def test_decision_flow_and_read_consistency(self, client):
        c, _, queue, _, _ = client
        race_items = [i for i in queue if i.kind == "race_no_majority"]
        item = race_items[0]
        r = c.post(f"/items/{item.item_id}/decision",
                   json={"decision": "B", "annotator": "t"})
        assert r.status_code == 200
        assert r.json()["item"]["status"] == "decided"
        got = c.get(f"/items/{item.item_id}").json()
        assert got["decision"] == "B" and got["decided_by"] == "t"
        summary = c.get("/summary").json()
        assert summary["by_kind"]["race_no_majority"]["decided"] == 1

    def test_double_decide_409_and_override(self, client):
        c, _, queue, _, _ = client
        item = next(i for i in queue if i.kind == "race_no_majority")
        assert c.post(f"/items/{item.item_id}/decision",
                      json={"decision": "B"}).status_code == 200
        second = c.post(f"/items/{item.item_id}/decision",
                        json={"decision": "W"})
        assert second.status_code == 409
        assert second.json()["detail"]["decision"] == "B"
        forced = c.post(f"/items/{item.item_id}/decision",
                        json={"decision": "W", "override": True})
        assert forced.status_code == 200
        assert c.get(f"/items/{item.item_id}").json()["decision"] == "W"

    def test_invalid_value_422_with_allowed_list(self, client):
        c, _, queue, _, _ = client
        item = next(i for i in queue if i.kind == "race_no_majority")
        r = c.post(f"/items/{item.item_id}/decision", json={"decision": "G"})
        assert r.status_code == 422
        assert set(r.json()["detail"]["allowed_values"]) == {"B", "W", "A",
                                                             "H", "O"}

    def test_pagination(self, client):
        c, _, queue, _, _ = client
        page = c.get("/items", params={"page_size": 1, "page": 2}).json()
        assert len(page["items"]) == min(1, max(0, len(queue) - 1))
        assert page["total"] == len(queue)


class TestAdjudicationRoundTrip:
    def test_decisions_flow_into_clean(self, client):
        c, records, queue, truth, log = client
        for item in queue:
            if item.kind == "race_no_majority":
                value = "O" if item.item_id.endswith("0") else "B"
            else:
                value = "F"
            assert c.post(f"/items/{item.item_id}/decision",
                          json={"decision": value}).status_code == 200
        result, log_hash = apply_log(records, log)
        assert not result.pending
        assert log_hash == log.content_hash()
        by_image = {r.image_id: r for r in result.records}
        for item in queue:
            if item.kind != "race_no_majority":
                continue
            decided = log.decisions()[item.item_id]
            subject_recs = [r for r in result.records
                            if r.subject_id == item.subject_id]
            if decided == "O":
                assert any(r.corrected in (6, 7) for r in subject_recs)
                assert all(r.race == "O" for r in subject_recs)
            else:
                assert any(r.corrected in (5, 7) for r in subject_recs)
                assert all(r.race == decided for r in subject_recs)

    def test_undecided_subjects_stay_pending(self, client):
        c, records, queue, _, log = client
        result, _ = apply_log(records, log)
        assert {i.subject_id for i in queue} == set(result.pending_subjects)
