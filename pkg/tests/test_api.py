import base64
import time

import numpy as np
import pytest
from fastapi.testclient import TestClient

from cxrcl.service.api import build_app
from cxrcl.synth import noise_image, xray_like

from conftest import WIRE_LABELS, make_service, noise_bytes, xray_bytes


@pytest.fixture
def client(model_dir, tmp_path):
    service = make_service(model_dir, tmp_path / "data")
    service.start_worker()
    with TestClient(build_app(service)) as c:
        c.service = service
        yield c
    service.close(save=False)


def login(client, user_id, password):
    r = client.post("/auth/login", json={"user_id": user_id, "password": password})
    assert r.status_code == 200
    return {"Authorization": f"Bearer {r.json()['token']}"}


def b64(data: bytes) -> str:
    return base64.b64encode(data).decode("ascii")


def wait_status(client, headers, sid, statuses, timeout=10.0):
    deadline = time.time() + timeout
    while time.time() < deadline:
        doc = client.get(f"/submissions/{sid}", headers=headers).json()
        if doc["status"] in statuses:
            return doc
        time.sleep(0.01)
    raise AssertionError(f"submission {sid} never reached {statuses}: {doc}")


class TestHealthAndAuth:
    def test_healthz_open(self, client):
        r = client.get("/healthz")
        assert r.status_code == 200
        assert r.json() == {"status": "ok"}

    def test_login_returns_role(self, client):
        r = client.post("/auth/login", json={"user_id": "drbob", "password": "pw-bob"})
        assert r.status_code == 200
        body = r.json()
        assert body["role"] == "doctor"
        assert body["patients"] == ["alice"]

    def test_bad_login_gives_error_body(self, client):
        r = client.post("/auth/login", json={"user_id": "alice", "password": "wrong"})
        assert r.status_code == 401
        body = r.json()
        assert set(body) == {"code", "message"}
        assert body["code"] == "auth_error"

    def test_missing_token_rejected(self, client):
        r = client.get("/submissions")
        assert r.status_code == 401
        assert r.json()["code"] == "auth_error"


class TestSubmissionEndpoints:
    def test_classify_round_trip(self, client):
        headers = login(client, "alice", "pw-alice")
        r = client.post(
            "/submissions",
            json={"type": "classify", "image_base64": b64(xray_bytes(1))},
            headers=headers,
        )
        assert r.status_code == 200
        sid = r.json()["id"]
        doc = wait_status(client, headers, sid, {"classified"})
        assert doc["prediction"]["label"] in WIRE_LABELS
        assert set(doc["prediction"]["probabilities"]) == WIRE_LABELS

    def test_noise_rejected(self, client):
        headers = login(client, "alice", "pw-alice")
        r = client.post(
            "/submissions",
            json={"type": "classify", "image_base64": b64(noise_bytes(2))},
            headers=headers,
        )
        sid = r.json()["id"]
        doc = wait_status(client, headers, sid, {"rejected"})
        assert doc["status"] == "rejected"

    def test_learn_without_label_400(self, client):
        headers = login(client, "drbob", "pw-bob")
        r = client.post(
            "/submissions",
            json={"type": "learn", "image_base64": b64(xray_bytes(3))},
            headers=headers,
        )
        assert r.status_code == 400
        assert r.json()["code"] == "validation_error"

    def test_invalid_base64_400(self, client):
        headers = login(client, "alice", "pw-alice")
        r = client.post(
            "/submissions",
            json={"type": "classify", "image_base64": "!!!"},
            headers=headers,
        )
        assert r.status_code == 400

    def test_researcher_submit_403(self, client):
        headers = login(client, "rita", "pw-rita")
        r = client.post(
            "/submissions",
            json={"type": "classify", "image_base64": b64(xray_bytes(4))},
            headers=headers,
        )
        assert r.status_code == 403
        assert r.json()["code"] == "authorization_error"

    def test_unknown_submission_404(self, client):
        headers = login(client, "alice", "pw-alice")
        r = client.get("/submissions/12345", headers=headers)
        assert r.status_code == 404
        assert r.json()["code"] == "not_found"

    def test_list_filters_and_anonymization(self, client):
        alice = login(client, "alice", "pw-alice")
        r = client.post(
            "/submissions",
            json={"type": "classify", "image_base64": b64(xray_bytes(5))},
            headers=alice,
        )
        wait_status(client, alice, r.json()["id"], {"classified"})
        rita = login(client, "rita", "pw-rita")
        docs = client.get("/submissions?status=classified", headers=rita).json()
        assert len(docs) == 1
        assert "submitter" not in docs[0]
        mine = client.get("/submissions", headers=alice).json()
        assert mine[0]["submitter"] == "alice"


class TestConfirmEndpoint:
    def test_confirm_flow_carries_exact_label(self, client):
        alice = login(client, "alice", "pw-alice")
        r = client.post(
            "/submissions",
            json={"type": "classify", "image_base64": b64(xray_bytes(6))},
            headers=alice,
        )
        sid = r.json()["id"]
        wait_status(client, alice, sid, {"classified"})

        drbob = login(client, "drbob", "pw-bob")
        r = client.post(
            f"/submissions/{sid}/confirm", json={"label": "Pneumonia"}, headers=drbob
        )
        assert r.status_code == 200
        learn_id = r.json()["learn_id"]
        doc = wait_status(client, drbob, learn_id, {"learned"})
        assert doc["label"] == "Pneumonia"
        assert doc["type"] == "learn"
        assert doc["learned_at"] >= doc["processed_at"]
        original = client.get(f"/submissions/{sid}", headers=drbob).json()
        assert original["confirmation"]["label"] == "Pneumonia"

    def test_confirm_by_patient_403(self, client):
        alice = login(client, "alice", "pw-alice")
        r = client.post(
            "/submissions",
            json={"type": "classify", "image_base64": b64(xray_bytes(7))},
            headers=alice,
        )
        sid = r.json()["id"]
        wait_status(client, alice, sid, {"classified"})
        r = client.post(
            f"/submissions/{sid}/confirm", json={"label": "Normal"}, headers=alice
        )
        assert r.status_code == 403

    def test_confirm_unclassified_409(self, client):
        client.service.stop_worker()  # keep the submission queued
        alice = login(client, "alice", "pw-alice")
        r = client.post(
            "/submissions",
            json={"type": "classify", "image_base64": b64(xray_bytes(8))},
            headers=alice,
        )
        sid = r.json()["id"]
        drbob = login(client, "drbob", "pw-bob")
        r = client.post(
            f"/submissions/{sid}/confirm", json={"label": "Normal"}, headers=drbob
        )
        assert r.status_code == 409
        assert r.json()["code"] == "state_error"


class TestMetricsEndpoint:
    def test_metrics_shape(self, client):
        r = client.get("/metrics")
        assert r.status_code == 200
        body = r.json()
        assert {"queue_depth", "model_version", "latency_ms", "status_counts"} <= set(body)

    def test_metrics_counts_processed(self, client):
        alice = login(client, "alice", "pw-alice")
        sids = []
        for i in range(3):
            r = client.post(
                "/submissions",
                json={"type": "classify", "image_base64": b64(xray_bytes(20 + i))},
                headers=alice,
            )
            sids.append(r.json()["id"])
        for sid in sids:
            wait_status(client, alice, sid, {"classified", "rejected"})
        body = client.get("/metrics").json()
        assert body["latency_ms"]["classify"]["count"] == 3
        assert body["latency_ms"]["total_samples"] == 3
