"""Bank-side domain service.

Owns the authoritative transaction ledger, pairs uploaded shares into
reconstructions, queues operator decisions into settlement batches and talks
to the payment adapter. The HTTP layer in `api` is a thin shell over this
class; everything here is callable directly (the job drain in particular
exists so tests can run pairing synchronously).

Durability rule: every state change is committed to SQLite inside the
mutating call, before any result is returned.
"""

from __future__ import annotations

import enum
import queue
import secrets
import threading
from dataclasses import dataclass
from datetime import datetime, timedelta
from pathlib import Path

from .. import protocol, vc
from ..broker import ShareEnvelope, UploadStatus
from ..errors import (
    AuthError,
    ClockSkewError,
    ConflictError,
    DimensionMismatchError,
    ForbiddenError,
    IntegrityError,
    NotFoundError,
    PreconditionError,
    TamperDetectedError,
    ValidationError,
)
from ..imaging import CaptureWindow, check_window
from ..protocol import (
    BatchState,
    BlacklistReason,
    Event,
    EventType,
    PartyId,
    Role,
    SettlementBatch,
    Transaction,
    TransactionState,
)
from ..timefmt import rfc3339, utcnow
from .adapters import MockPaymentAdapter, PaymentAdapter, TransferResult
from .config import BankConfig
from .store import BankStore, TransactionMeta

PAGE_SIZE = 10


@dataclass(frozen=True)
class ApiPrincipal:
    client_id: str
    role: str  # "Admin" | "User"
    party: str | None
    token_expiry: datetime

    @property
    def is_admin(self) -> bool:
        return self.role == "Admin"

    def expired(self, now: datetime) -> bool:
        return now >= self.token_expiry


class ReconstructionOutcome(str, enum.Enum):
    OK = "Ok"
    TAMPER_DETECTED = "TamperDetected"
    DIMENSION_MISMATCH = "DimensionMismatch"


@dataclass(frozen=True)
class ReconstructionRecord:
    transaction_id: int
    stacked_image_path: str
    decoded_image_path: str
    block_weight_histogram: dict[int, int]
    outcome: ReconstructionOutcome
    captcha_window: CaptureWindow

    def to_json(self) -> dict:
        return {
            "transactionId": self.transaction_id,
            "stackedImagePath": self.stacked_image_path,
            "decodedImagePath": self.decoded_image_path,
            "blockWeightHistogram": {
                str(k): v for k, v in self.block_weight_histogram.items()
            },
            "outcome": self.outcome.value,
            "captchaWindow": self.captcha_window.value,
        }


@dataclass(frozen=True)
class UploadResult:
    status: UploadStatus
    transaction: Transaction


@dataclass(frozen=True)
class Page:
    items: tuple[Transaction, ...]
    page: int
    page_size: int
    total: int


def transaction_json(txn: Transaction, meta: TransactionMeta | None = None) -> dict:
    data = {
        "id": txn.id,
        "seller": txn.seller.identifier,
        "buyer": txn.buyer.identifier,
        "amount": txn.amount,
        "currency": txn.currency,
        "businessModel": txn.business_model.value,
        "state": txn.state.value,
        "createdAt": rfc3339(txn.created_at),
        "updatedAt": rfc3339(txn.updated_at),
        "captchaNonce": txn.captcha_nonce,
        "note": txn.note,
    }
    if meta is not None:
        data["externalRef"] = meta.external_ref
        data["tamperEvidence"] = meta.tamper_evidence
        data["rejectReason"] = meta.reject_reason
    return data


def batch_json(batch: SettlementBatch) -> dict:
    return {
        "id": batch.id,
        "seller": batch.seller.identifier,
        "buyer": batch.buyer.identifier,
        "transactionIds": list(batch.transaction_ids),
        "totalAmount": batch.total_amount,
        "thresholdAtCreation": batch.threshold_at_creation,
        "state": batch.state.value,
        "transferReference": batch.transfer_reference,
    }


class BankService:
    def __init__(self, config: BankConfig, adapter: PaymentAdapter | None = None) -> None:
        self.config = config
        self.adapter: PaymentAdapter = adapter if adapter is not None else MockPaymentAdapter()
        self.store = BankStore(config.db_path)
        self.data_dir = Path(config.data_dir)
        self.data_dir.mkdir(parents=True, exist_ok=True)

        self.ledger = protocol.Ledger(observer=self._persist)
        self._meta: dict[int, TransactionMeta] = {}
        self._refs: dict[str, int] = {}
        self._envelopes: dict[tuple[int, Role], ShareEnvelope] = {}
        self._reconstructions: dict[int, ReconstructionRecord] = {}
        self._tokens: dict[str, ApiPrincipal] = {}

        self._create_lock = threading.Lock()
        self._txn_locks: dict[int, threading.Lock] = {}
        self._txn_locks_guard = threading.Lock()
        self._jobs: queue.Queue[int] = queue.Queue()
        self._worker: threading.Thread | None = None

        self._restore()

    # -- restore -----------------------------------------------------------

    def _restore(self) -> None:
        for txn, meta in self.store.load_transactions():
            self.ledger.adopt(txn)
            self._meta[txn.id] = meta
            self._refs[meta.external_ref] = txn.id
        for batch in self.store.load_batches():
            self.ledger.adopt_batch(batch)
        for entry in self.store.load_blacklist():
            self.ledger.blacklist.add(entry.party, entry.reason, since=entry.since)
        self._envelopes.update(self.store.load_envelopes())
        for txn_id, raw in self.store.load_reconstructions().items():
            self._reconstructions[txn_id] = ReconstructionRecord(
                transaction_id=txn_id,
                stacked_image_path=raw["stacked_path"],
                decoded_image_path=raw["decoded_path"],
                block_weight_histogram=raw["weight_histogram"],
                outcome=ReconstructionOutcome(raw["outcome"]),
                captcha_window=CaptureWindow(raw["captcha_window"]),
            )
        from ..timefmt import parse_rfc3339

        now = utcnow()
        for token, client_id, role, party, expires in self.store.load_tokens():
            expiry = parse_rfc3339(expires)
            if expiry > now:
                self._tokens[token] = ApiPrincipal(client_id, role, party, expiry)
        for txn_id in self.store.pending_jobs():
            self._jobs.put(txn_id)

    def _persist(self, kind: str, value: object) -> None:
        if kind == "transaction":
            txn = value  # type: ignore[assignment]
            self.store.save_transaction(txn, self._meta[txn.id])
        elif kind == "batch":
            self.store.save_batch(value)
        elif kind == "blacklist":
            self.store.save_blacklist_entry(value)
        elif kind == "blacklist_removed":
            self.store.delete_blacklist_entry(value)

    def _txn_lock(self, txn_id: int) -> threading.Lock:
        with self._txn_locks_guard:
            lock = self._txn_locks.get(txn_id)
            if lock is None:
                lock = threading.Lock()
                self._txn_locks[txn_id] = lock
            return lock

    # -- auth ----------------------------------------------------------------

    def issue_token(self, client_id: str, client_secret: str) -> dict:
        for client in self.config.clients:
            if client.client_id == client_id and client.client_secret == client_secret:
                token = secrets.token_urlsafe(24)
                expiry = utcnow() + timedelta(seconds=self.config.token_ttl_seconds)
                principal = ApiPrincipal(client.client_id, client.role, client.party, expiry)
                self._tokens[token] = principal
                self.store.save_token(
                    token, client.client_id, client.role, client.party, rfc3339(expiry)
                )
                return {
                    "access_token": token,
                    "token_type": "bearer",
                    "expires_in": self.config.token_ttl_seconds,
                    "role": client.role,
                }
        raise AuthError("unknown client id or bad secret")

    def authenticate(self, token: str | None) -> ApiPrincipal:
        if not token:
            raise AuthError("missing bearer token")
        principal = self._tokens.get(token)
        if principal is None:
            raise AuthError("unknown token")
        if principal.expired(utcnow()):
            raise AuthError("token expired")
        return principal

    def _require_admin(self, principal: ApiPrincipal) -> None:
        if not principal.is_admin:
            raise ForbiddenError(f"client {principal.client_id} lacks the Admin role")

    # -- share intake -----------------------------------------------------------

    def upload_share(self, principal: ApiPrincipal, envelope: ShareEnvelope) -> UploadResult:
        """Persist one share; first share opens/advances the transaction,
        the second enqueues pairing. Byte-identical re-uploads are duplicates."""
        if not envelope.checksum_ok():
            raise IntegrityError(
                f"payload checksum mismatch for transaction {envelope.transaction_id}"
            )
        txn_id = self._resolve_or_create(envelope)
        with self._txn_lock(txn_id):
            txn = self.ledger.get(txn_id)
            key = (txn_id, envelope.sender_role)
            existing = self._envelopes.get(key)
            if existing is not None:
                if existing.share_payload == envelope.share_payload:
                    return UploadResult(UploadStatus.DUPLICATE, txn)
                meta = self._meta[txn_id]
                meta.tamper_evidence = True
                self.store.save_transaction(txn, meta)
                raise ConflictError(
                    f"a different share already exists for {envelope.transaction_id} "
                    f"from {envelope.sender_role.value}; flagged as tamper evidence"
                )
            self._envelopes[key] = envelope
            self.store.save_envelope(txn_id, envelope)

            if txn.state is TransactionState.CREATED:
                # the share's existence proves the local exchange happened
                self.ledger.apply(txn_id, Event(EventType.SHARES_EXCHANGED_LOCALLY))
                txn = self.ledger.apply(txn_id, Event(EventType.FIRST_SHARE_DELIVERED))
            elif txn.state is TransactionState.SHARE_EXCHANGED:
                txn = self.ledger.apply(txn_id, Event(EventType.FIRST_SHARE_DELIVERED))

            both_present = (txn_id, Role.BUYER) in self._envelopes and (
                txn_id,
                Role.SELLER,
            ) in self._envelopes
            if both_present and self.store.job_status(txn_id) is None:
                self.store.set_job_status(txn_id, "queued")
                if self.config.sync_jobs:
                    self.run_pairing(txn_id)
                    txn = self.ledger.get(txn_id)
                else:
                    self._jobs.put(txn_id)
            return UploadResult(UploadStatus.STORED, txn)

    def _resolve_or_create(self, envelope: ShareEnvelope) -> int:
        with self._create_lock:
            txn_id = self._refs.get(envelope.transaction_id)
            if txn_id is not None:
                return txn_id
            descriptor = envelope.transaction
            if descriptor is None:
                raise ValidationError(
                    f"unknown transaction {envelope.transaction_id!r} and the envelope "
                    "carries no purchase descriptor"
                )
            seller = PartyId(descriptor.seller, Role.SELLER)
            buyer = PartyId(descriptor.buyer, Role.BUYER)
            txn_id = self.ledger.allocate_transaction_id()
            txn = protocol.create_transaction(
                txn_id,
                seller,
                buyer,
                descriptor.amount,
                descriptor.currency,
                descriptor.business_model,
                blacklist=self.ledger.blacklist,
                created_at=utcnow(),
            )
            meta = TransactionMeta(external_ref=envelope.transaction_id)
            self._meta[txn_id] = meta
            self._refs[envelope.transaction_id] = txn_id
            self.ledger.adopt(txn)
            self.store.save_transaction(txn, meta)
            return txn_id

    # -- pairing and reconstruction -----------------------------------------------

    def run_pairing(self, txn_id: int) -> ReconstructionRecord:
        """Stack both shares, decode, check the capture window, move the
        transaction to ToApprove or Rejected. Idempotent per transaction."""
        record = self._reconstructions.get(txn_id)
        if record is not None:
            return record
        buyer_env = self._envelopes.get((txn_id, Role.BUYER))
        seller_env = self._envelopes.get((txn_id, Role.SELLER))
        if buyer_env is None or seller_env is None:
            raise PreconditionError(
                f"transaction {txn_id} does not have both shares yet"
            )

        window = CaptureWindow.WITHIN_WINDOW
        for env in (buyer_env, seller_env):
            try:
                result = check_window(
                    env.captcha_issued_at,
                    env.share_generated_at,
                    self.config.captcha_window_seconds,
                )
            except ClockSkewError:
                result = CaptureWindow.EXPIRED
            if result is CaptureWindow.EXPIRED:
                window = CaptureWindow.EXPIRED

        outcome = ReconstructionOutcome.OK
        reason = ""
        histogram: dict[int, int] = {0: 0, 1: 0, 2: 0}
        stacked_path = ""
        decoded_path = ""
        try:
            share_s = vc.Share.from_pbm(seller_env.share_payload)
            share_b = vc.Share.from_pbm(buyer_env.share_payload)
            stacked = vc.stack([share_s, share_b])
            histogram = stacked.weight_histogram()
            out_dir = self.data_dir / "reconstructions" / str(txn_id)
            out_dir.mkdir(parents=True, exist_ok=True)
            stacked_path = str(out_dir / "stacked.pbm")
            Path(stacked_path).write_bytes(stacked.to_pbm())
            vc.verify_share(share_s, "seller share")
            vc.verify_share(share_b, "buyer share")
            decoded = vc.decode(stacked)
            decoded_path = str(out_dir / "decoded.pbm")
            Path(decoded_path).write_bytes(decoded.to_pbm())
        except DimensionMismatchError as exc:
            outcome = ReconstructionOutcome.DIMENSION_MISMATCH
            reason = str(exc)
        except TamperDetectedError as exc:
            outcome = ReconstructionOutcome.TAMPER_DETECTED
            reason = str(exc)

        ok = outcome is ReconstructionOutcome.OK and window is CaptureWindow.WITHIN_WINDOW
        if not ok and not reason:
            reason = "share generation exceeded the capture window"
        record = ReconstructionRecord(
            transaction_id=txn_id,
            stacked_image_path=stacked_path,
            decoded_image_path=decoded_path,
            block_weight_histogram=histogram,
            outcome=outcome,
            captcha_window=window,
        )
        self._reconstructions[txn_id] = record
        self.store.save_reconstruction(
            txn_id,
            stacked_path,
            decoded_path,
            histogram,
            outcome.value,
            window.value,
        )
        meta = self._meta[txn_id]
        if not ok:
            meta.reject_reason = reason
        self.ledger.apply(txn_id, Event.second_share_delivered(ok, note=reason))
        self.store.set_job_status(txn_id, "done")
        return record

    def drain_jobs_as(self, principal: ApiPrincipal) -> int:
        """Admin-gated synchronous drain, exposed over the API for tests."""
        self._require_admin(principal)
        return self.drain_jobs()

    def drain_jobs(self) -> int:
        """Run queued pairings synchronously; returns how many ran."""
        ran = 0
        for txn_id in self.store.pending_jobs():
            self.run_pairing(txn_id)
            ran += 1
        while True:
            try:
                txn_id = self._jobs.get_nowait()
            except queue.Empty:
                break
            if self._reconstructions.get(txn_id) is None:
                self.run_pairing(txn_id)
                ran += 1
        return ran

    def start_worker(self) -> None:
        if self._worker is not None:
            return

        def loop() -> None:
            while True:
                txn_id = self._jobs.get()
                if txn_id < 0:
                    return
                try:
                    self.run_pairing(txn_id)
                except Exception:
                    self.store.set_job_status(txn_id, "failed")

        self._worker = threading.Thread(target=loop, name="pairing-worker", daemon=True)
        self._worker.start()

    def stop_worker(self) -> None:
        if self._worker is not None:
            self._jobs.put(-1)
            self._worker.join(timeout=5)
            self._worker = None

    # -- operator actions ------------------------------------------------------------

    def operator_decide(
        self,
        principal: ApiPrincipal,
        txn_id: int,
        decision: str,
        note: str = "",
        source: str = "human",
    ) -> tuple[Transaction, SettlementBatch | None]:
        """Approve or reject a reconstructed purchase; approval accrues it
        into the pair's open settlement batch."""
        self._require_admin(principal)
        if decision not in ("Approve", "Reject"):
            raise ValidationError(f"decision must be Approve or Reject, got {decision!r}")
        txn = self.ledger.get(txn_id)
        if decision == "Reject":
            txn = self.ledger.apply(txn_id, Event(EventType.OPERATOR_REJECT, note=note))
            return txn, None
        txn = self.ledger.apply(txn_id, Event(EventType.OPERATOR_APPROVE, note=note))
        threshold = self._threshold_for_pair(txn)
        batch = self.ledger.open_batch_for_pair(txn.seller, txn.buyer, threshold)
        batch = self.ledger.accrue(batch.id, txn_id)
        return self.ledger.get(txn_id), batch

    def _threshold_for_pair(self, txn: Transaction) -> int:
        if self.config.batch_threshold is not None:
            return self.config.batch_threshold
        accepted_like = {
            TransactionState.ACCEPTED,
            TransactionState.QUEUED,
            TransactionState.SETTLED,
            TransactionState.DECLINED,
        }
        history = [
            other.amount
            for other in self.ledger.transactions.values()
            if other.id != txn.id
            and other.seller.identifier == txn.seller.identifier
            and other.buyer.identifier == txn.buyer.identifier
            and other.state in accepted_like
        ]
        return protocol.default_threshold(
            history,
            self.config.batch_threshold_fallback,
            self.config.batch_median_multiplier,
        )

    # -- settlement -------------------------------------------------------------------

    def settle_batch(
        self,
        principal: ApiPrincipal,
        batch_id: int,
        *,
        mock_outcome: str | None = None,
        mock_reason: str | None = None,
    ) -> SettlementBatch:
        """Submit a Triggered batch to the payment adapter.

        Adapter timeouts leave the batch Triggered and are safe to retry;
        re-settling an already Settled batch returns it unchanged."""
        self._require_admin(principal)
        batch = self.ledger.get_batch(batch_id)
        if batch.state is BatchState.SETTLED:
            return batch
        if batch.state is not BatchState.TRIGGERED:
            raise PreconditionError(
                f"batch {batch_id} is {batch.state.value}; only Triggered batches settle"
            )
        if mock_outcome is not None and isinstance(self.adapter, MockPaymentAdapter):
            self.adapter.set_outcome(batch_id, mock_outcome, mock_reason)
        result: TransferResult = self.adapter.submit_transfer(batch)
        if result.success:
            return self.ledger.resolve_batch(
                batch_id, settled=True, reference=result.reference or ""
            )
        reason = result.reason or "declined"
        batch = self.ledger.resolve_batch(batch_id, settled=False, note=reason)
        message = (
            f"payment for batch {batch_id} declined ({reason}); "
            f"buyer {batch.buyer.identifier} blacklisted"
        )
        self.store.add_notification(batch.seller.identifier, message, rfc3339(utcnow()))
        return batch

    # -- queries -----------------------------------------------------------------------

    _FILTERS = {state.value for state in TransactionState} | {"All"}

    def _visible(self, principal: ApiPrincipal, txn: Transaction) -> bool:
        if principal.is_admin:
            return True
        return principal.party in (txn.seller.identifier, txn.buyer.identifier)

    def list_transactions(
        self,
        principal: ApiPrincipal,
        state_filter: str = "All",
        page: int = 1,
        page_size: int = PAGE_SIZE,
    ) -> Page:
        if state_filter not in self._FILTERS:
            raise ValidationError(f"unknown state filter {state_filter!r}")
        if page < 1:
            raise ValidationError("page numbers start at 1")
        rows = [
            txn
            for txn in self.ledger.transactions.values()
            if self._visible(principal, txn)
            and (state_filter == "All" or txn.state.value == state_filter)
        ]
        rows.sort(key=lambda t: (-t.updated_at.timestamp(), t.id))
        start = (page - 1) * page_size
        return Page(
            items=tuple(rows[start : start + page_size]),
            page=page,
            page_size=page_size,
            total=len(rows),
        )

    def get_transaction(self, principal: ApiPrincipal, txn_id: int) -> Transaction:
        txn = self.ledger.get(txn_id)
        if not self._visible(principal, txn):
            raise ForbiddenError("transaction belongs to other parties")
        return txn

    def transaction_meta(self, txn_id: int) -> TransactionMeta:
        meta = self._meta.get(txn_id)
        if meta is None:
            raise NotFoundError(f"no transaction {txn_id}")
        return meta

    def reconstruction_detail(self, principal: ApiPrincipal, txn_id: int) -> dict:
        """Record plus all four images (PBM bytes); Admin only."""
        self._require_admin(principal)
        self.ledger.get(txn_id)  # 404 before exposing anything else
        record = self._reconstructions.get(txn_id)
        seller_env = self._envelopes.get((txn_id, Role.SELLER))
        buyer_env = self._envelopes.get((txn_id, Role.BUYER))
        stacked = decoded = None
        if record is not None:
            if record.stacked_image_path:
                path = Path(record.stacked_image_path)
                stacked = path.read_bytes() if path.exists() else None
            if record.decoded_image_path:
                path = Path(record.decoded_image_path)
                decoded = path.read_bytes() if path.exists() else None
        return {
            "record": record,
            "share_seller": seller_env.share_payload if seller_env else None,
            "share_buyer": buyer_env.share_payload if buyer_env else None,
            "stacked": stacked,
            "decoded": decoded,
        }

    def export_csv(self, principal: ApiPrincipal, state_filter: str = "All") -> bytes:
        """CSV dialect: LF line endings, header row, Id-ascending rows,
        RFC 3339 timestamps, amounts with one decimal place."""
        if state_filter not in self._FILTERS:
            raise ValidationError(f"unknown state filter {state_filter!r}")
        rows = sorted(
            (
                txn
                for txn in self.ledger.transactions.values()
                if self._visible(principal, txn)
                and (state_filter == "All" or txn.state.value == state_filter)
            ),
            key=lambda t: t.id,
        )
        lines = ["Id,Seller,Buyer,Timestamp,Amount"]
        for txn in rows:
            lines.append(
                f"{txn.id},{txn.seller.identifier},{txn.buyer.identifier},"
                f"{rfc3339(txn.created_at)},{txn.amount:.1f}"
            )
        return ("\n".join(lines) + "\n").encode("utf-8")

    def list_batches(self, principal: ApiPrincipal) -> list[SettlementBatch]:
        self._require_admin(principal)
        return [self.ledger.batches[k] for k in sorted(self.ledger.batches)]

    def get_batch(self, principal: ApiPrincipal, batch_id: int) -> SettlementBatch:
        self._require_admin(principal)
        return self.ledger.get_batch(batch_id)

    def blacklist_entries(self, principal: ApiPrincipal) -> list:
        self._require_admin(principal)
        return self.ledger.blacklist.entries()

    def remove_blacklist_entry(self, principal: ApiPrincipal, identifier: str) -> None:
        self._require_admin(principal)
        self.ledger.unblacklist(identifier)

    def notifications(self, principal: ApiPrincipal) -> list[dict]:
        self._require_admin(principal)
        return self.store.list_notifications()

    # -- fixtures / migration ------------------------------------------------------------

    def import_transaction(self, txn: Transaction, external_ref: str) -> Transaction:
        """Adopt a historical record verbatim (ops/migration path)."""
        meta = TransactionMeta(external_ref=external_ref)
        self._meta[txn.id] = meta
        self._refs[external_ref] = txn.id
        self.ledger.adopt(txn)
        self.store.save_transaction(txn, meta)
        return txn

    def close(self) -> None:
        self.stop_worker()
        self.store.close()
