from fastapi.testclient import TestClient

from app.main import app

from tests.test_harness import SMALL

client = TestClient(app)


def test_health():
    r = client.get("/health")
    assert r.status_code == 200
    data = r.json()
    assert data["status"] == "ok"
    assert data["threads"] == 1


def test_validate_ok_and_violations():
    r = client.post("/validate", json={"config": SMALL})
    assert r.status_code == 200
    assert r.json() == {"ok": True, "violations": []}

    r = client.post("/validate", json={"config": "[material]\nalpha = 0.6\nbeta = 0.7\n"})
    data = r.json()
    assert r.status_code == 200 and not data["ok"]
    assert any("α < 1/2" in v for v in data["violations"])
    assert any("β < 1/2" in v for v in data["violations"])


def test_simulate_returns_summary(tmp_path):
    r = client.post("/simulate", json={"config": SMALL, "output_dir": str(tmp_path)})
    assert r.status_code == 200
    data = r.json()
    assert data["converged"] is True
    assert data["files"]["summary"].endswith("summary.json")
    assert (tmp_path / "diagnostics.csv").is_file()


def test_simulate_rejects_bad_config(tmp_path):
    r = client.post("/simulate", json={"config": "[mesh]\nresolutoin = 2, 2\n", "output_dir": str(tmp_path)})
    assert r.status_code == 422
    data = r.json()
    assert data["status"] == "config-invalid"
    assert any("resolution" in v for v in data["violations"])
