"""Scenario runner: simulated seller and buyer devices, a broker satchel,
and an HTTP client for the point of service.

A scenario is a JSON document::

    {
      "seed": 7,
      "steps": [
        {"op": "TakeSelfie", "txn": "T1", "seller": "...", "buyer": "...",
         "amount": 500, "currency": "XOF", "model": "carry-then-cash",
         "generationDelaySeconds": 0},
        {"op": "ExchangeShares", "txn": "T1"},
        {"op": "BrokerCollect", "txn": "T1", "from": ["seller", "buyer"]},
        {"op": "BrokerGoOnline"},
        {"op": "BrokerDeliver"},
        {"op": "OperatorApprove", "txn": "T1", "note": "looks right"},
        {"op": "OperatorReject", "txn": "T1", "note": "..."},
        {"op": "Settle", "txn": "T1", "outcome": "success" | "declined"}
      ]
    }

Steps must reference transactions introduced by an earlier ``TakeSelfie``.
Transcript lines avoid wall-clock values so runs with a fixed seed and a
``--sync-jobs`` bank are reproducible line for line.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from pathlib import Path

import httpx
import numpy as np

from . import vc
from .broker import BrokerStore, ShareEnvelope, TransactionDescriptor, UploadAck, UploadStatus
from .errors import ValidationError, VcpayError
from .imaging import (
    Corner,
    ErrorDiffusion,
    GrayscaleImage,
    binarize,
    compose_selfie,
    render_price_captcha,
)
from .protocol import BusinessModel, Role
from .timefmt import utcnow


def synthetic_selfie(seed: int, width: int = 192, height: int = 144) -> GrayscaleImage:
    """Deterministic stand-in for a camera frame: two head-and-shoulder
    figures over a gradient backdrop."""
    rng = np.random.default_rng(seed)
    ys, xs = np.mgrid[0:height, 0:width]
    backdrop = 140.0 + 80.0 * (ys / max(height - 1, 1))
    canvas = backdrop + rng.normal(0.0, 6.0, size=(height, width))
    for cx_frac in (0.32, 0.68):
        cx = cx_frac * width
        cy = 0.42 * height
        radius = 0.16 * min(width, height)
        head = ((xs - cx) ** 2 + (ys - cy) ** 2) <= radius**2
        canvas[head] = 60.0 + 25.0 * np.sin(xs[head] / 6.0)
        torso = (
            (np.abs(xs - cx) <= radius * 1.4)
            & (ys >= cy + radius)
            & (ys <= cy + radius * 3.2)
        )
        canvas[torso] = 90.0 + 20.0 * np.cos(ys[torso] / 5.0)
    return GrayscaleImage(np.clip(canvas, 0, 255).astype(np.uint8))


@dataclass
class LocalPurchase:
    """What the two devices know about one purchase before the bank does."""

    ref: str
    descriptor: TransactionDescriptor
    seed: int
    generation_delay: float = 0.0
    captcha_issued_at: datetime | None = None
    share_generated_at: datetime | None = None
    seller_envelope: ShareEnvelope | None = None
    buyer_envelope: ShareEnvelope | None = None
    bank_id: int | None = None
    batch_id: int | None = None
    composed: vc.BinaryImage | None = None


class HttpBank:
    """Minimal client for the point-of-service API."""

    def __init__(self, base_url: str, client_id: str, client_secret: str) -> None:
        self.base_url = base_url.rstrip("/")
        self.http = httpx.Client(base_url=self.base_url, timeout=30.0)
        response = self.http.post(
            "/token",
            json={
                "grant_type": "client_credentials",
                "client_id": client_id,
                "client_secret": client_secret,
            },
        )
        self._raise_for_problem(response)
        self.http.headers["Authorization"] = f"Bearer {response.json()['access_token']}"

    @staticmethod
    def _raise_for_problem(response: httpx.Response) -> None:
        if response.status_code >= 400:
            try:
                problem = response.json()
                raise VcpayError(
                    f"{problem.get('code', 'error')}: {problem.get('detail', response.text)}"
                )
            except (ValueError, KeyError):
                raise VcpayError(f"HTTP {response.status_code}: {response.text}") from None

    def upload(self, envelope: ShareEnvelope) -> UploadAck:
        response = self.http.post(
            "/shares",
            data={"meta": json.dumps(envelope.meta_json())},
            files={"share": ("share.pbm", envelope.share_payload, "image/x-portable-bitmap")},
        )
        self._raise_for_problem(response)
        body = response.json()
        return UploadAck(
            status=UploadStatus(body["status"]),
            bank_transaction_id=body["transaction"]["id"],
            transaction_state=body["transaction"]["state"],
        )

    def drain_jobs(self) -> int:
        response = self.http.post("/jobs/drain")
        self._raise_for_problem(response)
        return response.json()["ran"]

    def get_transaction(self, txn_id: int) -> dict:
        response = self.http.get(f"/transactions/{txn_id}")
        self._raise_for_problem(response)
        return response.json()

    def decide(self, txn_id: int, decision: str, note: str) -> dict:
        response = self.http.post(
            f"/transactions/{txn_id}/{decision.lower()}", json={"note": note}
        )
        self._raise_for_problem(response)
        return response.json()

    def settle(self, batch_id: int, outcome: str, reason: str | None) -> dict:
        body: dict = {}
        if outcome == "declined":
            body = {"mockOutcome": "declined", "reason": reason or "insufficient funds"}
        response = self.http.post(f"/batches/{batch_id}/settle", json=body)
        self._raise_for_problem(response)
        return response.json()

    def blacklist(self) -> list[dict]:
        response = self.http.get("/blacklist")
        self._raise_for_problem(response)
        return response.json()["items"]

    def close(self) -> None:
        self.http.close()


@dataclass
class ScenarioResult:
    transcript: list[str] = field(default_factory=list)
    purchases: dict[str, LocalPurchase] = field(default_factory=dict)
    failed_step: str | None = None

    def line(self, text: str) -> None:
        self.transcript.append(text)


def run_scenario(
    scenario: dict,
    bank: HttpBank,
    *,
    seed_override: int | None = None,
    selfie_size: tuple[int, int] = (192, 144),
) -> ScenarioResult:
    seed = seed_override if seed_override is not None else int(scenario.get("seed", 0))
    steps = scenario.get("steps", [])
    broker = BrokerStore()
    result = ScenarioResult()
    result.line(f"scenario seed={seed} steps={len(steps)}")

    for index, step in enumerate(steps, start=1):
        op = step.get("op", "?")
        label = f"[{index}] {op}"
        try:
            if op == "TakeSelfie":
                _take_selfie(step, seed, selfie_size, result)
            elif op == "ExchangeShares":
                _exchange_shares(step, seed, result)
            elif op == "BrokerCollect":
                _broker_collect(step, broker, result)
            elif op == "BrokerGoOnline":
                broker.go_online()
                result.line(f"{label}: broker Online")
                continue
            elif op == "BrokerGoOffline":
                broker.go_offline()
                result.line(f"{label}: broker Offline")
                continue
            elif op == "BrokerDeliver":
                _broker_deliver(broker, bank, result)
            elif op in ("OperatorApprove", "OperatorReject"):
                _operator_decide(step, op, bank, result)
            elif op == "Settle":
                _settle(step, bank, result)
            else:
                raise ValidationError(f"unknown scenario op {op!r}")
            result.line(f"{label}: ok")
        except Exception as exc:
            # keep the transcript: the failing step is part of the record
            result.failed_step = label
            result.line(f"{label}: FAILED: {exc}")
            break
    return result


def _purchase(result: ScenarioResult, step: dict) -> LocalPurchase:
    ref = step.get("txn", "")
    purchase = result.purchases.get(ref)
    if purchase is None:
        raise ValidationError(f"step references unknown transaction {ref!r}")
    return purchase


def _take_selfie(step: dict, seed: int, size: tuple[int, int], result: ScenarioResult) -> None:
    ref = step["txn"]
    if ref in result.purchases:
        raise ValidationError(f"transaction {ref!r} already taken")
    descriptor = TransactionDescriptor(
        seller=step["seller"],
        buyer=step["buyer"],
        amount=int(step["amount"]),
        currency=step.get("currency", "XOF"),
        business_model=BusinessModel(step.get("model", "carry-then-cash")),
    )
    ref_tag = int.from_bytes(hashlib.sha256(ref.encode("utf-8")).digest()[:2], "big")
    purchase = LocalPurchase(
        ref=ref,
        descriptor=descriptor,
        seed=seed ^ ref_tag,
        generation_delay=float(step.get("generationDelaySeconds", 0)),
    )
    width, height = size
    selfie_gray = synthetic_selfie(purchase.seed, width, height)
    selfie = binarize(selfie_gray, ErrorDiffusion())
    captcha = render_price_captcha(
        descriptor.amount, descriptor.currency, purchase.seed, issued_at=utcnow()
    )
    purchase.captcha_issued_at = captcha.issued_at
    purchase.composed = compose_selfie(selfie, captcha, Corner.TOP_LEFT)
    result.purchases[ref] = purchase
    result.line(
        f"    selfie {width}x{height}, price overlay "
        f"{captcha.rendered_image.width}x{captcha.rendered_image.height}, "
        f"amount={descriptor.amount} {descriptor.currency}"
    )


def _exchange_shares(step: dict, seed: int, result: ScenarioResult) -> None:
    purchase = _purchase(result, step)
    if purchase.composed is None:
        raise ValidationError("TakeSelfie must run before ExchangeShares")
    share_seller, share_buyer = vc.generate_shares(purchase.composed, purchase.seed)
    generated_at = purchase.captcha_issued_at + timedelta(seconds=purchase.generation_delay)
    purchase.share_generated_at = generated_at
    purchase.seller_envelope = ShareEnvelope.build(
        purchase.ref,
        Role.SELLER,
        share_seller.to_pbm(),
        purchase.captcha_issued_at,
        generated_at,
        transaction=purchase.descriptor,
    )
    purchase.buyer_envelope = ShareEnvelope.build(
        purchase.ref,
        Role.BUYER,
        share_buyer.to_pbm(),
        purchase.captcha_issued_at,
        generated_at,
        transaction=purchase.descriptor,
    )
    result.line(
        f"    shares {share_seller.width}x{share_seller.height} generated "
        f"(delay {purchase.generation_delay:.0f}s)"
    )


def _broker_collect(step: dict, broker: BrokerStore, result: ScenarioResult) -> None:
    purchase = _purchase(result, step)
    senders = step.get("from", ["seller", "buyer"])
    for sender in senders:
        envelope = (
            purchase.seller_envelope if sender == "seller" else purchase.buyer_envelope
        )
        if envelope is None:
            raise ValidationError("ExchangeShares must run before BrokerCollect")
        broker.collect(envelope)
    result.line(f"    collected {len(senders)} envelope(s); pending={len(broker.pending)}")


def _broker_deliver(broker: BrokerStore, bank: HttpBank, result: ScenarioResult) -> None:
    report = broker.deliver_all(bank)
    result.line(
        f"    delivered={len(report.delivered)} failed={len(report.failures)} "
        f"pending-after={len(broker.pending)}"
    )
    for key, ack in sorted(report.acks.items()):
        for purchase in result.purchases.values():
            if purchase.ref == key[0]:
                purchase.bank_id = ack.bank_transaction_id
        result.line(
            f"    {key[0]}/{key[1]}: {ack.status.value}, bank txn {ack.bank_transaction_id} "
            f"state={ack.transaction_state}"
        )
    for failure in report.failures:
        result.line(f"    {failure.envelope_key}: FAILED {failure.reason}")


def _operator_decide(step: dict, op: str, bank: HttpBank, result: ScenarioResult) -> None:
    purchase = _purchase(result, step)
    if purchase.bank_id is None:
        raise ValidationError("shares must be delivered before an operator decision")
    bank.drain_jobs()
    decision = "approve" if op == "OperatorApprove" else "reject"
    body = bank.decide(purchase.bank_id, decision, step.get("note", ""))
    txn = body["transaction"]
    result.line(f"    txn {txn['id']} -> {txn['state']}")
    if body.get("batch"):
        batch = body["batch"]
        result.line(
            f"    batch {batch['id']} state={batch['state']} total={batch['totalAmount']} "
            f"threshold={batch['thresholdAtCreation']}"
        )
        purchase.batch_id = batch["id"]


def _settle(step: dict, bank: HttpBank, result: ScenarioResult) -> None:
    purchase = _purchase(result, step)
    batch_id = purchase.batch_id
    if batch_id is None:
        raise ValidationError("no settlement batch; approve the transaction first")
    outcome = step.get("outcome", "success")
    batch = bank.settle(batch_id, outcome, step.get("reason"))
    result.line(f"    batch {batch['id']} -> {batch['state']}")
    if purchase.bank_id is not None:
        txn = bank.get_transaction(purchase.bank_id)
        result.line(f"    txn {txn['id']} -> {txn['state']}")
    if outcome == "declined":
        entries = bank.blacklist()
        listed = ", ".join(sorted(e["party"] for e in entries)) or "(empty)"
        result.line(f"    blacklist: {listed}")


def load_scenario(path: str | Path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))
