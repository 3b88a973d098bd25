import numpy as np
import pytest
from fastapi.testclient import TestClient

from xidiar.corpus import routing_classifiers
from xidiar.service import app

client = TestClient(app)


def turns(*items):
    return [{"onset": a, "duration": d, "label": l} for a, d, l in items]


def test_health():
    r = client.get("/health")
    assert r.status_code == 200 and r.json()["status"] == "ok"


def test_profiles():
    names = [p["name"] for p in client.get("/profiles").json()]
    assert "SCOTUS" in names and "MIXER6" in names
    p = client.get("/profiles/SCOTUS").json()
    assert (p["clustering"], p["k_min"], p["k_max"], p["ahc_threshold"], p["pca_dim"]) == ("AHC", 5, 10, 0.46, 12)
    assert client.get("/profiles/NOPE").status_code == 404


def test_score():
    body = {"reference": turns((0, 10, "A"), (10, 10, "B")), "hypothesis": turns((0, 12, "x"), (12, 8, "y"))}
    r = client.post("/score", json=body).json()
    assert r["der"] == pytest.approx(10.0, abs=1e-6)
    assert r["mapping"] == {"A": "x", "B": "y"}


def test_score_validation():
    bad = {"reference": turns((0, -1, "A")), "hypothesis": []}
    assert client.post("/score", json=bad).status_code == 422


def test_segment_uniform():
    r = client.post("/segment", json={"sad": [[0, 5]], "kaldi": True}).json()
    spans = [(s["onset"], s["onset"] + s["duration"]) for s in r["segments"]]
    assert spans[0] == (0, 1.5) and spans[-1][1] == pytest.approx(5.0)


def test_segment_with_change_track():
    scores = np.zeros(100)
    scores[50] = 0.9
    body = {"sad": [[0, 10]], "change_scores": {"scores": scores.tolist(), "step": 0.1}, "threshold": 0.5}
    r = client.post("/segment", json=body).json()
    spans = [(s["onset"], s["onset"] + s["duration"]) for s in r["segments"]]
    assert (3.0, 5.0) in spans and (5.0, 7.0) in spans
    assert not any(a < 5.0 < b for a, b in spans)


def test_cluster():
    x = [[1, 0], [0.9, 0.1], [0, 1], [0.1, 0.9]]
    r = client.post("/cluster", json={"embeddings": x, "threshold": 0.3}).json()
    assert r["labels"] == [0, 0, 1, 1] and len(r["merges"]) == 2
    r = client.post("/cluster", json={"embeddings": x, "method": "kmedoids", "k": 2}).json()
    assert r["labels"] == [0, 0, 1, 1] and len(r["medoids"]) == 2


def test_cluster_needs_parameters():
    assert client.post("/cluster", json={"embeddings": [[1, 0]]}).status_code == 422
    assert client.post("/cluster", json={"embeddings": [[1, 0]], "method": "kmedoids"}).status_code == 422


def test_library_errors_map_to_422():
    r = client.post("/cluster", json={"embeddings": [[1, 0], [0, 1]], "method": "kmedoids", "k": 3})
    assert r.status_code == 422
    assert r.json()["stage"] is not None or "exceeds" in r.json()["detail"]


def test_classify_domain():
    s1, s2 = routing_classifiers(4, "VAST")
    body = {"stage1": s1.to_dict(), "stage2": s2.to_dict(), "vector": [0.1, 0.2, 0.3, 0.4]}
    r = client.post("/classify-domain", json=body).json()
    assert r["label"] == "VAST" and r["profile"]["name"] == "VAST"
    assert sum(r["stage2_posteriors"].values()) == pytest.approx(1.0, abs=1e-6)


def test_coverage_purity():
    body = {"reference": turns((0, 10, "A"), (10, 10, "B")), "segments": [[0, 10], [10, 20]]}
    r = client.post("/coverage-purity", json=body).json()
    assert r["coverage"] == pytest.approx(1.0) and r["purity"] == pytest.approx(1.0)
