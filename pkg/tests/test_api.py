"""Endpoint-level tests: auth completeness, problem objects, multipart
upload, pagination, content negotiation, CSV download."""

import json
from datetime import timedelta

import numpy as np
import pytest
from fastapi.testclient import TestClient

from vcpay import vc
from vcpay.bank import BankConfig, BankService, MockPaymentAdapter, TokenClient
from vcpay.bank.api import create_app
from vcpay.broker import ShareEnvelope, TransactionDescriptor
from vcpay.protocol import BusinessModel, Role
from vcpay.timefmt import utcnow

SELLER = "seller2@alphaplus.com"
BUYER = "buyer1@alphaplus.com"


@pytest.fixture
def service(tmp_path):
    config = BankConfig(
        db_path=str(tmp_path / "api.sqlite3"),
        data_dir=str(tmp_path / "api-data"),
        sync_jobs=True,
        batch_threshold=100,
        clients=[
            TokenClient("admin", "admin-secret", "Admin"),
            TokenClient("broker", "broker-secret", "User"),
            TokenClient("buyer-app", "buyer-secret", "User", party=BUYER),
        ],
    )
    svc = BankService(config, MockPaymentAdapter())
    yield svc
    svc.close()


@pytest.fixture
def client(service):
    return TestClient(create_app(service), raise_server_exceptions=False)


def bearer(client, client_id, secret):
    response = client.post(
        "/token",
        json={"grant_type": "client_credentials", "client_id": client_id, "client_secret": secret},
    )
    assert response.status_code == 200, response.text
    return {"Authorization": f"Bearer {response.json()['access_token']}"}


@pytest.fixture
def admin_headers(client):
    return bearer(client, "admin", "admin-secret")


@pytest.fixture
def user_headers(client):
    return bearer(client, "buyer-app", "buyer-secret")


def upload_pair(client, headers, ref="T1", seed=3, delay=0):
    secret = vc.BinaryImage(np.random.default_rng(seed).integers(0, 2, (8, 8), dtype=np.uint8))
    share_s, share_b = vc.generate_shares(secret, seed)
    descriptor = TransactionDescriptor(SELLER, BUYER, 500, "XOF", BusinessModel.CARRY_THEN_CASH)
    issued = utcnow()
    generated = issued + timedelta(seconds=delay)
    txn_id = None
    for role, share in ((Role.SELLER, share_s), (Role.BUYER, share_b)):
        envelope = ShareEnvelope.build(
            ref, role, share.to_pbm(), issued, generated, transaction=descriptor
        )
        response = client.post(
            "/shares",
            headers=headers,
            data={"meta": json.dumps(envelope.meta_json())},
            files={"share": ("share.pbm", envelope.share_payload, "image/x-portable-bitmap")},
        )
        assert response.status_code == 200, response.text
        txn_id = response.json()["transaction"]["id"]
    return txn_id


# --- token endpoint -----------------------------------------------------------


def test_token_rejects_bad_secret(client):
    response = client.post(
        "/token",
        json={"grant_type": "client_credentials", "client_id": "admin", "client_secret": "nope"},
    )
    assert response.status_code == 401
    assert response.json()["code"] == "auth_invalid_token"


def test_token_rejects_unknown_grant(client):
    response = client.post(
        "/token",
        json={"grant_type": "password", "client_id": "admin", "client_secret": "admin-secret"},
    )
    assert response.status_code == 422


def test_token_accepts_form_encoding(client):
    response = client.post(
        "/token",
        data={"grant_type": "client_credentials", "client_id": "admin", "client_secret": "admin-secret"},
    )
    assert response.status_code == 200
    assert response.json()["token_type"] == "bearer"


# --- auth completeness --------------------------------------------------------------

PROTECTED = [
    ("GET", "/transactions"),
    ("GET", "/transactions/1"),
    ("POST", "/transactions/1/approve"),
    ("POST", "/transactions/1/reject"),
    ("GET", "/transactions/1/reconstruction"),
    ("GET", "/batches"),
    ("GET", "/batches/1"),
    ("POST", "/batches/1/settle"),
    ("GET", "/export.csv"),
    ("GET", "/blacklist"),
    ("DELETE", "/blacklist/whoever"),
    ("GET", "/notifications"),
    ("POST", "/jobs/drain"),
]


@pytest.mark.parametrize("method,path", PROTECTED)
def test_missing_token_rejected_everywhere(client, method, path):
    response = client.request(method, path)
    assert response.status_code == 401
    assert response.json()["code"] == "auth_invalid_token"


@pytest.mark.parametrize("method,path", PROTECTED)
def test_expired_token_rejected_everywhere(service, client, method, path):
    service.config.token_ttl_seconds = -5
    headers = bearer(client, "admin", "admin-secret")
    response = client.request(method, path, headers=headers)
    assert response.status_code == 401


def test_shares_endpoint_requires_token(client):
    response = client.post(
        "/shares",
        data={"meta": "{}"},
        files={"share": ("share.pbm", b"P4\n1 1\n\x00", "image/x-portable-bitmap")},
    )
    assert response.status_code == 401


def test_user_role_cannot_approve(client, admin_headers, user_headers):
    txn_id = upload_pair(client, admin_headers)
    response = client.post(f"/transactions/{txn_id}/approve", headers=user_headers)
    assert response.status_code == 403
    assert response.json()["code"] == "forbidden"


# --- flows ------------------------------------------------------------------------


def test_upload_list_approve_settle_flow(client, admin_headers):
    txn_id = upload_pair(client, admin_headers)

    listing = client.get(
        "/transactions", headers=admin_headers, params={"state": "ToApprove"}
    ).json()
    assert listing["total"] == 1
    assert listing["items"][0]["id"] == txn_id
    assert listing["pageSize"] == 10

    approved = client.post(
        f"/transactions/{txn_id}/approve", headers=admin_headers, json={"note": "ok"}
    ).json()
    assert approved["transaction"]["state"] == "Queued"
    batch_id = approved["batch"]["id"]
    assert approved["batch"]["state"] == "Triggered"

    settled = client.post(f"/batches/{batch_id}/settle", headers=admin_headers).json()
    assert settled["state"] == "Settled"
    final = client.get(f"/transactions/{txn_id}", headers=admin_headers).json()
    assert final["state"] == "Settled"


def test_declined_settlement_blacklist_visible(client, admin_headers):
    txn_id = upload_pair(client, admin_headers)
    approved = client.post(
        f"/transactions/{txn_id}/approve", headers=admin_headers, json={}
    ).json()
    batch_id = approved["batch"]["id"]
    declined = client.post(
        f"/batches/{batch_id}/settle",
        headers=admin_headers,
        json={"mockOutcome": "declined", "reason": "no funds"},
    ).json()
    assert declined["state"] == "Declined"
    blacklist = client.get("/blacklist", headers=admin_headers).json()["items"]
    assert [entry["party"] for entry in blacklist] == [BUYER]
    notes = client.get("/notifications", headers=admin_headers).json()["items"]
    assert notes and notes[0]["party"] == SELLER

    removed = client.delete(f"/blacklist/{BUYER}", headers=admin_headers)
    assert removed.status_code == 200
    assert client.get("/blacklist", headers=admin_headers).json()["items"] == []


def test_reconstruction_json_and_png(client, admin_headers):
    txn_id = upload_pair(client, admin_headers)
    body = client.get(
        f"/transactions/{txn_id}/reconstruction", headers=admin_headers
    ).json()
    assert body["record"]["outcome"] == "Ok"
    assert body["record"]["captchaWindow"] == "WithinWindow"
    assert body["shareSeller"] and body["decodedPbm"]

    png = client.get(
        f"/transactions/{txn_id}/reconstruction",
        headers={**admin_headers, "Accept": "image/png"},
        params={"which": "decoded"},
    )
    assert png.status_code == 200
    assert png.headers["content-type"] == "image/png"
    assert png.content[:8] == b"\x89PNG\r\n\x1a\n"


def test_reconstruction_forbidden_for_user(client, admin_headers, user_headers):
    txn_id = upload_pair(client, admin_headers)
    response = client.get(
        f"/transactions/{txn_id}/reconstruction", headers=user_headers
    )
    assert response.status_code == 403


def test_user_scoped_listing(client, admin_headers, user_headers):
    upload_pair(client, admin_headers)
    mine = client.get("/transactions", headers=user_headers).json()
    assert mine["total"] == 1  # buyer-app is party to T1
    broker_headers = bearer(client, "broker", "broker-secret")
    theirs = client.get("/transactions", headers=broker_headers).json()
    assert theirs["total"] == 0


def test_csv_download(client, admin_headers):
    upload_pair(client, admin_headers)
    response = client.get("/export.csv", headers=admin_headers)
    assert response.status_code == 200
    assert response.headers["content-type"].startswith("text/csv")
    lines = response.content.decode().strip().split("\n")
    assert lines[0] == "Id,Seller,Buyer,Timestamp,Amount"
    assert lines[1].startswith("1,seller2@alphaplus.com,buyer1@alphaplus.com,")
    assert lines[1].endswith(",500.0")


def test_problem_object_shape(client, admin_headers):
    response = client.get("/transactions/999", headers=admin_headers)
    assert response.status_code == 404
    body = response.json()
    assert set(body) == {"type", "title", "status", "code", "detail"}
    assert body["code"] == "not_found"


def test_invalid_state_filter_problem(client, admin_headers):
    response = client.get(
        "/transactions", headers=admin_headers, params={"state": "Nope"}
    )
    assert response.status_code == 422
    assert response.json()["code"] == "validation"


def test_approve_conflict_is_illegal_transition(client, admin_headers):
    txn_id = upload_pair(client, admin_headers)
    assert (
        client.post(f"/transactions/{txn_id}/reject", headers=admin_headers, json={})
        .json()["transaction"]["state"]
        == "Rejected"
    )
    response = client.post(f"/transactions/{txn_id}/approve", headers=admin_headers)
    assert response.status_code == 409
    assert response.json()["code"] == "illegal_transition"


def test_expired_window_upload_ends_rejected(client, admin_headers):
    txn_id = upload_pair(client, admin_headers, ref="late", delay=61)
    body = client.get(f"/transactions/{txn_id}", headers=admin_headers).json()
    assert body["state"] == "Rejected"
