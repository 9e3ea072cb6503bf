"""HTTP surface: route table, error envelopes, throttling, admin auth."""

import base64

import pytest
from fastapi.testclient import TestClient

from securexam.config import ServiceConfig
from securexam.service import create_app

from conftest import exam_draft, roster_csv, sealed_blob, stage_sitting

ROUTE_TABLE = [
    ("POST", "/v1/packages"),
    ("POST", "/v1/sittings/{sitting_id}/open"),
    ("POST", "/v1/auth"),
    ("POST", "/v1/sessions/{token}/begin"),
    ("GET", "/v1/sessions/{token}/paper"),
    ("PUT", "/v1/sessions/{token}/answers/{question_id}"),
    ("POST", "/v1/sessions/{token}/submit"),
    ("POST", "/v1/invigilator/{sitting_id}/confirm"),
    ("POST", "/v1/results/check"),
    ("POST", "/v1/cards"),
]


@pytest.fixture
def client(center):
    app = create_app(center, ServiceConfig(test_clock=True))
    return TestClient(app)


def stage(center, author_keys, client, **kw):
    exam, sitting_id, ready = stage_sitting(center, author_keys, **kw)
    client.post("/v1/test-clock/advance", json={"seconds": 3600})  # to 09:00
    return exam, sitting_id, ready


def auth_token(client, sitting_id, i=0):
    resp = client.post("/v1/auth", json={
        "reg_no": f"2016/1/{i:05d}PA", "identity_no": f"ID{i:05d}",
        "sitting_id": sitting_id})
    assert resp.status_code == 200, resp.text
    return resp.json()["token"]


def begin(client, token, ready, **overrides):
    body = {"communications_disabled": True,
            "external_storage_blocked": True,
            "environment_digest": ready["environment_digest"]}
    body.update(overrides)
    return client.post(f"/v1/sessions/{token}/begin", json=body)


def assert_envelope(resp, code, status=None):
    assert set(resp.json()) == {"code", "message", "retriable"}, resp.text
    assert resp.json()["code"] == code
    if status is not None:
        assert resp.status_code == status


# ---------------------------------------------------------------------------
# Route table
# ---------------------------------------------------------------------------

def test_route_table_is_complete(client):
    served = {(method, route.path)
              for route in client.app.routes if hasattr(route, "methods")
              for method in route.methods}
    for method, path in ROUTE_TABLE:
        assert (method, path) in served, f"{method} {path} missing"


def test_unknown_route_is_a_plain_404(client):
    assert client.get("/v1/nonsense").status_code == 404


# ---------------------------------------------------------------------------
# Packages and sittings over HTTP
# ---------------------------------------------------------------------------

def test_upload_and_duplicate_envelope(client, center, author_keys):
    blob = sealed_blob(exam_draft(), author_keys,
                       center._center_keys.public_only())
    body = {"package_b64": base64.b64encode(blob).decode()}
    resp = client.post("/v1/packages", json=body)
    assert resp.status_code == 200
    assert resp.json()["exam_id"] == "ENG101-2016"
    dup = client.post("/v1/packages", json=body)
    assert_envelope(dup, "DuplicatePackage", 409)
    assert dup.json()["retriable"] is False


def test_upload_rejects_bad_base64(client):
    resp = client.post("/v1/packages", json={"package_b64": "@@not-b64@@"})
    assert_envelope(resp, "MalformedRequest", 400)


def test_upload_rejects_unknown_author(client, center, center_keys):
    from securexam import sealing
    stranger = sealing.generate_keypair("lecturer")
    blob = sealed_blob(exam_draft(), stranger, center_keys.public_only())
    resp = client.post("/v1/packages",
                       json={"package_b64": base64.b64encode(blob).decode()})
    assert_envelope(resp, "Unauthorized", 403)


def test_open_unknown_sitting_envelope(client):
    resp = client.post("/v1/sittings/ghost-s000/open")
    assert_envelope(resp, "UnknownSitting", 404)


def test_sitting_status_view(client, center, author_keys):
    exam, sitting_id, ready = stage(center, author_keys, client)
    resp = client.get(f"/v1/sittings/{sitting_id}")
    assert resp.status_code == 200
    data = resp.json()
    assert data["sitting_id"] == sitting_id
    assert data["security_image"]["confirm_code"] == \
        ready["security_image"]["confirm_code"]
    assert "server_now" in data
    assert data["counts"] == {"not-authenticated": 5}


# ---------------------------------------------------------------------------
# Candidate flow over HTTP
# ---------------------------------------------------------------------------

def test_full_session_over_http(client, center, author_keys):
    exam, sitting_id, ready = stage(center, author_keys, client)
    token = auth_token(client, sitting_id)

    resp = begin(client, token, ready)
    assert resp.status_code == 200
    assert resp.json()["state"] == "active"

    paper = client.get(f"/v1/sessions/{token}/paper").json()
    assert len(paper["questions"]) == 20
    qid = paper["questions"][0]["id"]
    resp = client.put(f"/v1/sessions/{token}/answers/{qid}",
                      json={"value": "B"})
    assert resp.status_code == 200
    assert resp.json()["answered"] == 1

    resp = client.post(f"/v1/sessions/{token}/submit")
    assert resp.status_code == 200
    assert resp.json()["termination"] == "candidate-submitted"
    assert resp.json()["answered"] == 1

    again = client.post(f"/v1/sessions/{token}/submit")
    assert_envelope(again, "SessionNotActive", 409)


def test_auth_failure_envelope_hides_which_credential_failed(
        client, center, author_keys):
    stage(center, author_keys, client)
    resp = client.post("/v1/auth", json={
        "reg_no": "2016/1/00000PA", "identity_no": "ID-WRONG",
        "sitting_id": "ENG101-2016-s000"})
    assert_envelope(resp, "UnknownCandidate", 401)


def test_begin_envelopes(client, center, author_keys):
    exam, sitting_id, ready = stage(center, author_keys, client)
    token = auth_token(client, sitting_id)
    resp = begin(client, token, ready, environment_digest="zz-not-hex")
    assert_envelope(resp, "MalformedRequest", 400)
    resp = begin(client, token, ready, communications_disabled=False)
    assert_envelope(resp, "LockdownRejected", 403)
    resp = client.post("/v1/sessions/00ff/begin", json={
        "communications_disabled": True, "external_storage_blocked": True,
        "environment_digest": ready["environment_digest"]})
    assert_envelope(resp, "MalformedRequest", 400)  # short token


def test_answer_envelopes(client, center, author_keys):
    exam, sitting_id, ready = stage(center, author_keys, client)
    token = auth_token(client, sitting_id)
    begin(client, token, ready)
    resp = client.put(f"/v1/sessions/{token}/answers/q99",
                      json={"value": "A"})
    assert_envelope(resp, "UnknownQuestion", 404)
    resp = client.put(f"/v1/sessions/{token}/answers/q01",
                      json={"value": "Z"})
    assert_envelope(resp, "MalformedAnswer", 400)
    resp = client.put(f"/v1/sessions/{token}/answers/q01",
                      json={"wrong_field": 1})
    assert_envelope(resp, "MalformedRequest", 400)


def test_malformed_request_persists_nothing(client, center, author_keys):
    exam, sitting_id, ready = stage(center, author_keys, client)
    audit_path = center.stores.candidate_store.audit.path
    before = audit_path.read_text().count("\n")
    resp = client.post("/v1/auth", json={"reg_no": "2016/1/00000PA"})
    assert_envelope(resp, "MalformedRequest", 400)
    assert audit_path.read_text().count("\n") == before


def test_clock_advance_expires_sessions(client, center, author_keys):
    exam, sitting_id, ready = stage(center, author_keys, client)
    token = auth_token(client, sitting_id)
    begin(client, token, ready)
    resp = client.post("/v1/test-clock/advance", json={"seconds": 1800})
    assert resp.json()["expired_sessions"] == 1
    resp = client.put(f"/v1/sessions/{token}/answers/q01", json={"value": "A"})
    assert_envelope(resp, "SessionNotActive", 409)
    assert client.get(f"/v1/sessions/{token}").json()["state"] == "expired"


def test_two_sessions_are_independent(client, center, author_keys):
    exam, sitting_id, ready = stage(center, author_keys, client)
    tok_a = auth_token(client, sitting_id, i=0)
    tok_b = auth_token(client, sitting_id, i=1)
    assert tok_a != tok_b
    begin(client, tok_a, ready)
    begin(client, tok_b, ready)
    client.put(f"/v1/sessions/{tok_a}/answers/q01", json={"value": "A"})
    assert client.get(f"/v1/sessions/{tok_a}").json()["answered"] == ["q01"]
    assert client.get(f"/v1/sessions/{tok_b}").json()["answered"] == []
    client.post(f"/v1/sessions/{tok_a}/submit")
    assert client.get(f"/v1/sessions/{tok_b}").json()["state"] == "active"


# ---------------------------------------------------------------------------
# Results over HTTP
# ---------------------------------------------------------------------------

def run_one_candidate(client, center, author_keys):
    exam, sitting_id, ready = stage(center, author_keys, client)
    token = auth_token(client, sitting_id)
    begin(client, token, ready)
    client.post(f"/v1/sessions/{token}/submit")
    resp = client.post("/v1/cards", json={"reg_no": "2016/1/00000PA",
                                          "sitting_id": sitting_id})
    assert resp.status_code == 200
    return exam, resp.json()["pin"]


def test_result_check_embargo_then_success(client, center, author_keys):
    exam, pin = run_one_candidate(client, center, author_keys)
    body = {"reg_no": "2016/1/00000PA", "identity_no": "ID00000", "pin": pin}
    resp = client.post("/v1/results/check", json=body)
    assert_envelope(resp, "EmbargoActive", 403)
    client.post("/v1/test-clock/advance", json={"seconds": 25 * 3600})
    resp = client.post("/v1/results/check", json=body)
    assert resp.status_code == 200
    assert resp.json()["status"] == "final"
    assert resp.json()["max_total"] == exam.max_total
    resp = client.post("/v1/results/check", json=body)
    assert_envelope(resp, "CardUsed", 409)


def test_results_csv_endpoint(client, center, author_keys):
    exam, pin = run_one_candidate(client, center, author_keys)
    resp = client.get(f"/v1/exams/{exam.exam_id}/results.csv")
    assert resp.status_code == 200
    assert resp.headers["content-type"].startswith("text/csv")
    assert resp.text.splitlines()[0] == (
        "reg_no,course_code,objective_marks,essay_marks_total,total,"
        "max_total,status")


def test_essay_marks_endpoint(client, center, author_keys):
    draft = exam_draft(n_objective=2, n_essay=1)
    exam, sitting_id, ready = stage(center, author_keys, client, draft=draft)
    token = auth_token(client, sitting_id)
    begin(client, token, ready)
    client.put(f"/v1/sessions/{token}/answers/e01",
               json={"value": "An essay about dams."})
    client.post(f"/v1/sessions/{token}/submit")
    resp = client.post("/v1/marks", json={
        "reg_no": "2016/1/00000PA", "exam_id": exam.exam_id,
        "question_id": "e01", "awarded": 3, "marker_id": "assessor-1"})
    assert resp.status_code == 200
    assert resp.json()["status"] == "final"
    resp = client.post("/v1/marks", json={
        "reg_no": "2016/1/00000PA", "exam_id": exam.exam_id,
        "question_id": "q01", "awarded": 3, "marker_id": "assessor-1"})
    assert_envelope(resp, "NotAnEssayQuestion", 409)


# ---------------------------------------------------------------------------
# Throttling
# ---------------------------------------------------------------------------

def test_repeated_auth_failures_throttle(client, center, author_keys):
    stage(center, author_keys, client)
    body = {"reg_no": "2016/1/00000PA", "identity_no": "ID-WRONG",
            "sitting_id": "ENG101-2016-s000"}
    for _ in range(6):
        assert client.post("/v1/auth", json=body).status_code == 401
    resp = client.post("/v1/auth", json=body)
    assert_envelope(resp, "Throttled", 429)
    assert resp.json()["retriable"] is True
    # other identities are unaffected
    ok = client.post("/v1/auth", json={
        "reg_no": "2016/1/00001PA", "identity_no": "ID00001",
        "sitting_id": "ENG101-2016-s000"})
    assert ok.status_code == 200


def test_throttle_window_expires(client, center, author_keys):
    stage(center, author_keys, client)
    body = {"reg_no": "2016/1/00000PA", "identity_no": "ID-WRONG",
            "sitting_id": "ENG101-2016-s000"}
    for _ in range(6):
        client.post("/v1/auth", json=body)
    assert client.post("/v1/auth", json=body).status_code == 429
    client.post("/v1/test-clock/advance", json={"seconds": 61})
    resp = client.post("/v1/auth", json={
        "reg_no": "2016/1/00000PA", "identity_no": "ID00000",
        "sitting_id": "ENG101-2016-s000"})
    assert resp.status_code == 200


def test_result_check_failures_throttle(client, center, author_keys):
    exam, pin = run_one_candidate(client, center, author_keys)
    client.post("/v1/test-clock/advance", json={"seconds": 25 * 3600})
    wrong = {"reg_no": "2016/1/00000PA", "identity_no": "ID00000",
             "pin": "000000000000" if pin != "000000000000" else "111111111111"}
    for _ in range(6):
        assert client.post("/v1/results/check", json=wrong).status_code == 401
    resp = client.post("/v1/results/check", json=wrong)
    assert_envelope(resp, "Throttled", 429)


# ---------------------------------------------------------------------------
# Admin token
# ---------------------------------------------------------------------------

def test_admin_token_guards_administrative_routes(center, author_keys):
    app = create_app(center, ServiceConfig(admin_token="sekret",
                                           test_clock=True))
    client = TestClient(app)
    blob = sealed_blob(exam_draft(), author_keys,
                       center._center_keys.public_only())
    body = {"package_b64": base64.b64encode(blob).decode()}

    resp = client.post("/v1/packages", json=body)
    assert_envelope(resp, "Unauthorized", 403)
    resp = client.post("/v1/packages", json=body,
                       headers={"Authorization": "Bearer wrong"})
    assert_envelope(resp, "Unauthorized", 403)
    resp = client.post("/v1/packages", json=body,
                       headers={"Authorization": "Bearer sekret"})
    assert resp.status_code == 200

    for method, path in [("POST", "/v1/sittings/x/open"),
                         ("POST", "/v1/cards"),
                         ("POST", "/v1/marks"),
                         ("GET", "/v1/exams/x/results.csv")]:
        resp = client.request(method, path, json={} if method == "POST" else None)
        assert resp.status_code in (400, 403)
        if resp.status_code == 403:
            assert resp.json()["code"] == "Unauthorized"

    # candidate-facing routes stay open
    assert client.get("/v1/time").status_code == 200


def test_clock_endpoint_absent_in_production_config(center):
    client = TestClient(create_app(center, ServiceConfig()))
    resp = client.post("/v1/test-clock/advance", json={"seconds": 60})
    assert resp.status_code == 404
    assert client.get("/v1/time").status_code == 200
