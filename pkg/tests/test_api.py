import json
import re

import pytest
from fastapi.testclient import TestClient

from votegrid.config import ApiConfig
from votegrid.server import create_app

GENEROUS = {"default": {"per_minute": 600000, "burst": 300000},
            "auth": {"per_minute": 600000, "burst": 300000},
            "otp": {"per_minute": 600000, "burst": 300000}}

CANDIDATES = [
    {"name": "Ada Alon", "office": "President", "candidate_id": "pres-a"},
    {"name": "Ben Bas", "office": "President", "candidate_id": "pres-b"},
    {"name": "Cora Cruz", "office": "Vice President", "candidate_id": "vp-c"},
]

REGISTRATION = {
    "employee_id": "e-100",
    "password": "pw-e-100",
    "lastname": "Reyes",
    "firstname": "Sam",
    "college": "Engineering",
    "position": "Professor",
    "contact_number": "+639170000001",
    "email": "e-100@example.test",
}


def make_app(tmp_path, rate_limits=GENEROUS, **overrides):
    config = ApiConfig(
        datastore_path=str(tmp_path / "api.db"),
        audit_log_path=str(tmp_path / "audit.log"),
        transport="memory",
        offices=["President", "Vice President"],
        candidates=list(CANDIDATES),
        admins=[{"employee_id": "admin-1", "password": "admin-pw",
                 "email": "admin@example.test"}],
        rate_limits=rate_limits,
        **overrides,
    )
    return create_app(config)


@pytest.fixture
def client(tmp_path):
    app = make_app(tmp_path)
    with TestClient(app, raise_server_exceptions=False) as test_client:
        test_client.app = app
        yield test_client


def login(client, employee_id, password) -> str:
    response = client.post("/api/login", json={"employee_id": employee_id,
                                               "password": password})
    assert response.status_code == 200, response.text
    return response.json()["token"]


def auth(token) -> dict:
    return {"Authorization": f"Bearer {token}"}


def admin_token(client) -> str:
    return login(client, "admin-1", "admin-pw")


def open_election(client) -> str:
    token = admin_token(client)
    response = client.post("/api/admin/election/open", headers=auth(token))
    assert response.status_code == 200
    return token


def register_and_approve(client, admin: str, registration=REGISTRATION):
    response = client.post("/api/register", json=registration)
    assert response.status_code == 201, response.text
    response = client.post("/api/admin/approve", headers=auth(admin),
                           json={"employee_id": registration["employee_id"],
                                 "decision": "approve"})
    assert response.status_code == 200


def read_otp_code(client, token) -> str:
    """Reassemble the code the real voter would: email positions + table."""
    service = client.app.state.service
    email_body = service.dispatcher.transports["email"].sent[-1].body
    sms_body = service.dispatcher.transports["sms"].sent[-1].body
    tokens = re.findall(r"R([1-4])C([1-4])", email_body)
    cells = client.get("/api/otp/table", headers=auth(token)).json()["cells"]
    code = "".join(cells[(int(r) - 1) * 4 + (int(c) - 1)] for r, c in tokens)
    assert code == sms_body.removeprefix("INFO: ").replace(" ", "")
    return code


class TestVoterJourney:
    def test_full_flow(self, client):
        admin = open_election(client)
        register_and_approve(client, admin)

        token = login(client, "e-100", "pw-e-100")
        response = client.post("/api/otp/request", headers=auth(token),
                               json={"employee_id": "e-100"})
        assert response.status_code == 200
        assert response.json()["warnings"] == []

        table = client.get("/api/otp/table", headers=auth(token)).json()
        assert len(table["cells"]) == 16
        assert all(len(cell) == 2 for cell in table["cells"])

        code = read_otp_code(client, token)
        response = client.post("/api/otp/confirm", headers=auth(token),
                               json={"otp": code})
        assert response.status_code == 200
        assert response.json()["level"] == "otp_verified"

        ballot = client.get("/api/ballot", headers=auth(token)).json()
        offices = {block["office"] for block in ballot["offices"]}
        assert offices == {"President", "Vice President"}

        response = client.post("/api/votes", headers=auth(token),
                               json={"selections": {"President": "pres-a"}})
        assert response.status_code == 200
        assert len(response.json()["receipt_id"]) == 32

        results = client.get("/api/results").json()
        assert results["offices"]["President"]["pres-a"] == 1
        assert results["total_ballots"] == 1

    def test_second_vote_returns_already_voted(self, client):
        admin = open_election(client)
        register_and_approve(client, admin)
        token = login(client, "e-100", "pw-e-100")
        client.post("/api/otp/request", headers=auth(token),
                    json={"employee_id": "e-100"})
        code = read_otp_code(client, token)
        client.post("/api/otp/confirm", headers=auth(token), json={"otp": code})
        first = client.post("/api/votes", headers=auth(token),
                            json={"selections": {"President": "pres-a"}})
        assert first.status_code == 200
        second = client.post("/api/votes", headers=auth(token),
                             json={"selections": {"President": "pres-a"}})
        assert second.status_code == 409
        assert second.json()["error"]["code"] == "already_voted"

    def test_wrong_otp_maps_to_401(self, client):
        admin = open_election(client)
        register_and_approve(client, admin)
        token = login(client, "e-100", "pw-e-100")
        client.post("/api/otp/request", headers=auth(token),
                    json={"employee_id": "e-100"})
        response = client.post("/api/otp/confirm", headers=auth(token),
                               json={"otp": "zzzzzz"})
        assert response.status_code == 401
        assert response.json()["error"]["code"] == "otp_mismatch"


class TestSessionHandling:
    def test_tampered_token_rejected(self, client):
        admin = admin_token(client)
        for i in range(len(admin)):
            mutated = admin[:i] + ("A" if admin[i] != "A" else "B") + admin[i + 1:]
            response = client.get("/api/admin/audit", headers=auth(mutated))
            assert response.status_code == 401

    def test_missing_token_rejected(self, client):
        response = client.get("/api/ballot")
        assert response.status_code == 401

    def test_expired_token_rejected_and_purged(self, tmp_path):
        from tests.conftest import build_harness
        harness = build_harness(tmp_path, session_ttl=60.0)
        app = create_app(ApiConfig(rate_limits=GENEROUS), service=harness.service)
        with TestClient(app, raise_server_exceptions=False) as client:
            token = login(client, "admin-1", harness.admin_password)
            assert client.get("/api/admin/audit",
                              headers=auth(token)).status_code == 200
            harness.clock.advance(61)
            assert client.get("/api/admin/audit",
                              headers=auth(token)).status_code == 401
            assert token not in harness.service._sessions


class TestErrorOpacity:
    def test_unknown_user_and_wrong_password_identical(self, client):
        unknown = client.post("/api/login", json={"employee_id": "ghost",
                                                  "password": "pw"})
        wrong = client.post("/api/login", json={"employee_id": "admin-1",
                                                "password": "nope"})
        assert unknown.status_code == wrong.status_code == 401
        assert unknown.content == wrong.content


class TestSchemaViolations:
    @pytest.mark.parametrize("payload", [
        b"", b"{nope", b"[]", b"42",
        b'{"employee_id": 5}',
        b'{"employee_id": "x"}',
    ])
    def test_malformed_register_bodies(self, client, payload):
        before_voters = len(client.app.state.service.store.list_voters())
        before_events = len(client.app.state.service.audit.events())
        response = client.post("/api/register", content=payload,
                               headers={"Content-Type": "application/json"})
        assert response.status_code == 400
        assert response.json()["error"]["code"] == "invalid_request"
        assert len(client.app.state.service.store.list_voters()) == before_voters
        assert len(client.app.state.service.audit.events()) == before_events

    def test_malformed_votes_body(self, client):
        admin = open_election(client)
        register_and_approve(client, admin)
        token = login(client, "e-100", "pw-e-100")
        response = client.post(
            "/api/votes",
            headers={**auth(token), "Content-Type": "application/json"},
            content=b'{"selections": "president"}')
        assert response.status_code == 400
        assert client.app.state.service.tally().total_ballots == 0


class TestPermissionMatrix:
    def test_exhaustive_route_by_level(self, client):
        admin = open_election(client)
        register_and_approve(client, admin)
        voter = login(client, "e-100", "pw-e-100")
        # A second pending voter so approve has a target.
        client.post("/api/register",
                    json={**REGISTRATION, "employee_id": "e-200",
                          "email": "e-200@example.test",
                          "contact_number": "+639170000002"})

        matrix = [
            ("POST", "/api/otp/request", {"employee_id": "e-100"},
             {"anon": 401, "voter": 200, "admin": 403}),
            ("GET", "/api/otp/table", None,
             {"anon": 401, "voter": 200, "admin": 409}),
            ("POST", "/api/otp/confirm", {"otp": "zzzzzz"},
             {"anon": 401, "voter": 401, "admin": 409}),
            ("GET", "/api/ballot", None,
             {"anon": 401, "voter": 403, "admin": 403}),
            ("POST", "/api/votes", {"selections": {}},
             {"anon": 401, "voter": 403, "admin": 403}),
            ("POST", "/api/admin/approve",
             {"employee_id": "e-200", "decision": "approve"},
             {"anon": 401, "voter": 403, "admin": 200}),
            ("POST", "/api/admin/election/close", None,
             {"anon": 401, "voter": 403, "admin": 200}),
            ("GET", "/api/admin/audit", None,
             {"anon": 401, "voter": 403, "admin": 200}),
        ]
        tokens = {"anon": None, "voter": voter, "admin": admin}
        for method, path, body, expected in matrix:
            for level, token in tokens.items():
                headers = auth(token) if token else {}
                response = client.request(method, path, json=body, headers=headers)
                assert response.status_code == expected[level], (
                    f"{method} {path} as {level}: expected {expected[level]}, "
                    f"got {response.status_code} {response.text}")

    def test_results_public(self, client):
        assert client.get("/api/results").status_code == 200

    def test_unauthenticated_mutation_only_registration(self, client):
        # Every other mutating route must refuse anonymous calls outright.
        for method, path in [("POST", "/api/otp/request"),
                             ("POST", "/api/otp/confirm"),
                             ("POST", "/api/votes"),
                             ("POST", "/api/admin/approve"),
                             ("POST", "/api/admin/election/open"),
                             ("POST", "/api/admin/election/close")]:
            response = client.request(method, path, json={})
            assert response.status_code == 401, f"{path} leaked through"
        assert client.post("/api/register", json=REGISTRATION).status_code == 201


class TestRateLimiting:
    def test_otp_confirm_class_strictest(self, tmp_path):
        limits = dict(GENEROUS)
        limits["otp"] = {"per_minute": 5, "burst": 5}
        # Lockout threshold lifted so this test observes the limiter alone.
        app = make_app(tmp_path, rate_limits=limits, lockout_threshold=100)
        with TestClient(app, raise_server_exceptions=False) as client:
            admin = open_election(client)
            register_and_approve(client, admin)
            token = login(client, "e-100", "pw-e-100")
            client.post("/api/otp/request", headers=auth(token),
                        json={"employee_id": "e-100"})
            responses = []
            for _ in range(6):
                responses.append(client.post("/api/otp/confirm",
                                             headers=auth(token),
                                             json={"otp": "zzzzzz"}))
            assert [r.status_code for r in responses[:5]] == [401] * 5
            assert responses[-1].status_code == 429
            assert responses[-1].json()["error"]["code"] == "rate_limited"

    def test_throttle_carries_retry_after(self, tmp_path):
        app = make_app(tmp_path, rate_limits={
            "default": {"per_minute": 2, "burst": 2},
            "auth": GENEROUS["auth"], "otp": GENEROUS["otp"]})
        with TestClient(app, raise_server_exceptions=False) as client:
            assert client.get("/api/results").status_code == 200
            assert client.get("/api/results").status_code == 200
            throttled = client.get("/api/results")
            assert throttled.status_code == 429
            assert int(throttled.headers["Retry-After"]) >= 1
            assert throttled.json()["error"]["code"] == "rate_limited"


class TestResponseHygiene:
    def test_errors_never_carry_stack_traces(self, client):
        response = client.post("/api/login", content=b"{broken",
                               headers={"Content-Type": "application/json"})
        assert "Traceback" not in response.text
        response = client.get("/api/ballot")
        assert "Traceback" not in response.text

    def test_table_serialization_shape(self, client):
        admin = open_election(client)
        register_and_approve(client, admin)
        token = login(client, "e-100", "pw-e-100")
        client.post("/api/otp/request", headers=auth(token),
                    json={"employee_id": "e-100"})
        body = client.get("/api/otp/table", headers=auth(token)).json()
        assert set(body) == {"table_id", "cells", "rows", "cols"}
        assert body["rows"] == body["cols"] == 4
        assert isinstance(body["cells"], list) and len(body["cells"]) == 16
