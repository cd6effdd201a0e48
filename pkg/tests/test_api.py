import io

import pytest
from fastapi.testclient import TestClient

from conftest import corpus_specs
from ecgauth.api import create_app
from ecgauth.records import write_record
from ecgauth.synth import synth_ecg


def record_csv(record) -> str:
    out = io.StringIO()
    write_record(record, out)
    return out.getvalue()


@pytest.fixture(scope="module")
def client():
    app = create_app()
    with TestClient(app) as test_client:
        train_spec, _ = corpus_specs(1)
        for si in range(4):
            record = synth_ecg(train_spec, si, variant=0)
            response = test_client.post("/enroll", json={"record_csv": record_csv(record)})
            assert response.status_code == 200
        yield test_client


def test_health(client):
    body = client.get("/health").json()
    assert body["status"] == "ok"
    assert body["n_entities"] == 4


def test_entities_listing(client):
    entities = client.get("/entities").json()
    assert [e["entity_id"] for e in entities] == ["s01", "s02", "s03", "s04"]
    assert all(e["ucl_mse"] > 0 for e in entities)


def test_enroll_response_fields(client):
    train_spec, _ = corpus_specs(1)
    record = synth_ecg(train_spec, 4, variant=0)
    response = client.post(
        "/enroll", json={"record_csv": record_csv(record), "entity_id": "extra"}
    )
    assert response.status_code == 200
    body = response.json()
    assert body["entity_id"] == "extra"
    assert body["n_slices"] >= 2
    assert body["n_entities"] == 5


def test_enroll_duplicate_conflict(client):
    train_spec, _ = corpus_specs(1)
    record = synth_ecg(train_spec, 0, variant=0)
    response = client.post("/enroll", json={"record_csv": record_csv(record)})
    assert response.status_code == 409
    # replace flag allows re-enrollment
    response = client.post(
        "/enroll", json={"record_csv": record_csv(record), "replace": True}
    )
    assert response.status_code == 200


def test_enroll_short_record_unprocessable(client):
    _, test_spec = corpus_specs(1)
    record = synth_ecg(test_spec, 0, variant=1)  # 16 s, below training period
    response = client.post(
        "/enroll", json={"record_csv": record_csv(record), "entity_id": "fresh"}
    )
    assert response.status_code == 422


def test_enroll_garbage_csv(client):
    response = client.post("/enroll", json={"record_csv": "not a record"})
    assert response.status_code == 422


def test_authenticate_known(client):
    _, test_spec = corpus_specs(1)
    record = synth_ecg(test_spec, 2, variant=1)
    response = client.post("/authenticate", json={"record_csv": record_csv(record)})
    assert response.status_code == 200
    body = response.json()
    assert body["outcome"] == "known"
    assert body["best_id"] == "s03"
    assert body["best_mse"] <= max(e["ucl_mse"] for e in client.get("/entities").json())
    assert set(body["scores"]) == {"s01", "s02", "s03", "s04", "extra"}


def test_authenticate_with_custom_period(client):
    _, test_spec = corpus_specs(1)
    record = synth_ecg(test_spec, 1, variant=2)
    response = client.post(
        "/authenticate", json={"record_csv": record_csv(record), "test_period_s": 10.0}
    )
    assert response.status_code == 200


def test_db_save_and_load_cycle(client, tmp_path):
    path = str(tmp_path / "snapshot.txt")
    body = client.post("/db/save", json={"path": path}).json()
    assert body["n_entities"] == 5
    body = client.post("/db/load", json={"path": path}).json()
    assert body["n_entities"] == 5
    assert client.get("/health").json()["n_entities"] == 5


def test_db_load_missing_file(client):
    response = client.post("/db/load", json={"path": "/no/such/file.txt"})
    assert response.status_code == 404
