"""Store-and-forward share transport.

An itinerant broker collects share envelopes from buyers and sellers while
away from any connection, then uploads everything pending when a window of
connectivity opens. Envelopes are content-addressed by checksum and keyed by
(transaction, sender role); the point of service deduplicates on the same
key, so delivery is at-least-once overall and exactly-once in effect.

On disk an envelope is a directory holding ``share.pbm`` plus ``meta.json``
(transaction id, sender role, checksum hex, RFC 3339 timestamps) — the
"human carries a file" simulation of the physical share handover.
"""

from __future__ import annotations

import enum
import hashlib
import json
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Protocol

from .errors import ConflictError, IntegrityError, NotConnectedError, ValidationError
from .protocol import BusinessModel, Role
from .timefmt import parse_rfc3339, rfc3339, utcnow

_META_FILE = "meta.json"
_SHARE_FILE = "share.pbm"


def payload_checksum(payload: bytes) -> str:
    return hashlib.sha256(payload).hexdigest()


@dataclass(frozen=True)
class TransactionDescriptor:
    """Purchase facts the envelope carries so the bank can open the record
    without any prior online registration."""

    seller: str
    buyer: str
    amount: int
    currency: str
    business_model: BusinessModel

    def to_json(self) -> dict:
        return {
            "seller": self.seller,
            "buyer": self.buyer,
            "amount": self.amount,
            "currency": self.currency,
            "businessModel": self.business_model.value,
        }

    @classmethod
    def from_json(cls, data: dict) -> "TransactionDescriptor":
        return cls(
            seller=data["seller"],
            buyer=data["buyer"],
            amount=int(data["amount"]),
            currency=data["currency"],
            business_model=BusinessModel(data["businessModel"]),
        )


@dataclass(frozen=True)
class ShareEnvelope:
    """Wire unit the broker carries: one share plus routing metadata."""

    transaction_id: str
    sender_role: Role
    share_payload: bytes
    checksum: str
    captcha_issued_at: datetime
    share_generated_at: datetime
    created_at: datetime
    transaction: TransactionDescriptor | None = None

    def __post_init__(self) -> None:
        if self.sender_role not in (Role.BUYER, Role.SELLER):
            raise ValidationError("envelope sender must be Buyer or Seller")
        if not self.transaction_id:
            raise ValidationError("envelope needs a transaction id")

    @classmethod
    def build(
        cls,
        transaction_id: str,
        sender_role: Role,
        share_payload: bytes,
        captcha_issued_at: datetime,
        share_generated_at: datetime,
        *,
        transaction: TransactionDescriptor | None = None,
        created_at: datetime | None = None,
    ) -> "ShareEnvelope":
        return cls(
            transaction_id=transaction_id,
            sender_role=sender_role,
            share_payload=share_payload,
            checksum=payload_checksum(share_payload),
            captcha_issued_at=captcha_issued_at,
            share_generated_at=share_generated_at,
            created_at=created_at if created_at is not None else utcnow(),
            transaction=transaction,
        )

    @property
    def key(self) -> tuple[str, str]:
        return (self.transaction_id, self.sender_role.value)

    def checksum_ok(self) -> bool:
        return payload_checksum(self.share_payload) == self.checksum

    def meta_json(self) -> dict:
        meta = {
            "transactionId": self.transaction_id,
            "senderRole": self.sender_role.value,
            "checksum": self.checksum,
            "captchaIssuedAt": rfc3339(self.captcha_issued_at),
            "shareGeneratedAt": rfc3339(self.share_generated_at),
            "createdAt": rfc3339(self.created_at),
        }
        if self.transaction is not None:
            meta["transaction"] = self.transaction.to_json()
        return meta

    def write_to_dir(self, directory: Path) -> None:
        directory.mkdir(parents=True, exist_ok=True)
        (directory / _SHARE_FILE).write_bytes(self.share_payload)
        (directory / _META_FILE).write_text(
            json.dumps(self.meta_json(), indent=2) + "\n", encoding="utf-8"
        )

    @classmethod
    def from_meta_json(cls, meta: dict, payload: bytes) -> "ShareEnvelope":
        descriptor = meta.get("transaction")
        return cls(
            transaction_id=meta["transactionId"],
            sender_role=Role(meta["senderRole"]),
            share_payload=payload,
            checksum=meta["checksum"],
            captcha_issued_at=parse_rfc3339(meta["captchaIssuedAt"]),
            share_generated_at=parse_rfc3339(meta["shareGeneratedAt"]),
            created_at=parse_rfc3339(meta["createdAt"]),
            transaction=TransactionDescriptor.from_json(descriptor) if descriptor else None,
        )

    @classmethod
    def read_from_dir(cls, directory: Path) -> "ShareEnvelope":
        meta = json.loads((directory / _META_FILE).read_text(encoding="utf-8"))
        payload = (directory / _SHARE_FILE).read_bytes()
        return cls.from_meta_json(meta, payload)


class Connectivity(str, enum.Enum):
    OFFLINE = "Offline"
    ONLINE = "Online"


class UploadStatus(str, enum.Enum):
    STORED = "Stored"
    DUPLICATE = "Duplicate"


@dataclass(frozen=True)
class UploadAck:
    status: UploadStatus
    bank_transaction_id: int | None = None
    transaction_state: str | None = None


class BankEndpoint(Protocol):
    """Where deliveries land; raising marks the envelope as failed."""

    def upload(self, envelope: ShareEnvelope) -> UploadAck: ...


@dataclass
class DeliveryFailure:
    envelope_key: tuple[str, str]
    reason: str


@dataclass
class DeliveryReport:
    delivered: list[tuple[str, str]] = field(default_factory=list)
    failures: list[DeliveryFailure] = field(default_factory=list)
    acks: dict[tuple[str, str], UploadAck] = field(default_factory=dict)

    @property
    def attempted(self) -> int:
        return len(self.delivered) + len(self.failures)


class BrokerStore:
    """One broker's satchel of envelopes.

    Starts Offline. A single logical owner mutates a store; independent
    stores may run concurrently. With a spool directory, pending and
    delivered envelopes mirror to disk in the documented envelope format.
    """

    def __init__(self, spool_dir: Path | str | None = None) -> None:
        self.pending: dict[tuple[str, str], ShareEnvelope] = {}
        self.delivered: dict[tuple[str, str], UploadAck] = {}
        self._delivered_checksums: dict[tuple[str, str], str] = {}
        self.connectivity = Connectivity.OFFLINE
        self.spool_dir = Path(spool_dir) if spool_dir is not None else None
        if self.spool_dir is not None:
            self._load_spool()

    def go_online(self) -> None:
        self.connectivity = Connectivity.ONLINE

    def go_offline(self) -> None:
        self.connectivity = Connectivity.OFFLINE

    def collect(self, envelope: ShareEnvelope) -> None:
        """Accept an envelope from a party; duplicates must be byte-identical."""
        if not envelope.checksum_ok():
            raise IntegrityError(
                f"checksum mismatch for envelope {envelope.key}: payload does not "
                f"hash to {envelope.checksum}"
            )
        done = self._delivered_checksums.get(envelope.key)
        if done is not None:
            if done == envelope.checksum:
                return  # already delivered; re-collection is a no-op
            raise ConflictError(
                f"conflicting payload for delivered envelope {envelope.key}"
            )
        existing = self.pending.get(envelope.key)
        if existing is not None:
            if existing.share_payload == envelope.share_payload:
                return  # idempotent re-collection
            raise ConflictError(
                f"conflicting payload for envelope {envelope.key}; possible tampering"
            )
        self.pending[envelope.key] = envelope
        self._spool_write(envelope, "pending")

    def deliver_all(self, bank: BankEndpoint) -> DeliveryReport:
        """Upload every pending envelope once; keep failures pending."""
        if self.connectivity is not Connectivity.ONLINE:
            raise NotConnectedError("broker is offline; cannot reach the bank")
        report = DeliveryReport()
        for key in list(self.pending):
            envelope = self.pending[key]
            if not envelope.checksum_ok():
                report.failures.append(
                    DeliveryFailure(key, "payload mutated after collection")
                )
                continue
            try:
                ack = bank.upload(envelope)
            except Exception as exc:  # per-envelope failures are not fatal
                report.failures.append(DeliveryFailure(key, str(exc)))
                continue
            del self.pending[key]
            self.delivered[key] = ack
            self._delivered_checksums[key] = envelope.checksum
            report.delivered.append(key)
            report.acks[key] = ack
            self._spool_move(envelope)
        return report

    # -- disk mirror -----------------------------------------------------

    def _envelope_dirname(self, envelope: ShareEnvelope) -> str:
        return f"{envelope.transaction_id}__{envelope.sender_role.value}"

    def _spool_write(self, envelope: ShareEnvelope, bucket: str) -> None:
        if self.spool_dir is None:
            return
        envelope.write_to_dir(self.spool_dir / bucket / self._envelope_dirname(envelope))

    def _spool_move(self, envelope: ShareEnvelope) -> None:
        if self.spool_dir is None:
            return
        name = self._envelope_dirname(envelope)
        src = self.spool_dir / "pending" / name
        dst = self.spool_dir / "delivered" / name
        if src.exists():
            dst.parent.mkdir(parents=True, exist_ok=True)
            if dst.exists():
                return
            src.rename(dst)

    def _load_spool(self) -> None:
        pending_dir = self.spool_dir / "pending"
        if not pending_dir.is_dir():
            return
        for entry in sorted(pending_dir.iterdir()):
            if entry.is_dir() and (entry / _META_FILE).exists():
                envelope = ShareEnvelope.read_from_dir(entry)
                self.pending[envelope.key] = envelope
