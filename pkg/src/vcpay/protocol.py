"""Transaction lifecycle, settlement batching and blacklisting.

The lifecycle is a strict state machine: a purchase is created at selfie
time, its shares travel to the point of service, reconstruction puts it in
front of an operator, and accepted purchases accumulate in per-pair batches
until a threshold triggers one money transfer for the lot. A declined
payment blacklists the buyer; blacklisted parties cannot open new purchases.

Pure functions carry the rules; `Ledger` adds in-memory aggregate storage
with per-aggregate serialization for concurrent callers.
"""

from __future__ import annotations

import enum
import statistics
import threading
from collections import defaultdict
from dataclasses import dataclass, replace
from datetime import datetime, timezone
from typing import Callable, Sequence

from .errors import (
    BlacklistedPartyError,
    IllegalTransitionError,
    NotFoundError,
    ValidationError,
)


class Role(str, enum.Enum):
    BUYER = "Buyer"
    SELLER = "Seller"
    BROKER = "Broker"
    BANK_OPERATOR = "BankOperator"


@dataclass(frozen=True)
class PartyId:
    identifier: str
    role: Role

    def __post_init__(self) -> None:
        if not self.identifier:
            raise ValidationError("party identifier must be non-empty")


class BusinessModel(str, enum.Enum):
    #: goods and shares handed over at selfie time, money settles later
    CARRY_THEN_CASH = "carry-then-cash"
    #: selfie records a seller commitment; goods move after payment clears
    CASH_THEN_CARRY = "cash-then-carry"


class GoodsRelease(str, enum.Enum):
    AT_SELFIE_TIME = "AtSelfieTime"
    AFTER_PAYMENT = "AfterPayment"


class TransactionState(str, enum.Enum):
    CREATED = "Created"
    SHARE_EXCHANGED = "ShareExchanged"
    INCOMPLETE = "Incomplete"
    TO_APPROVE = "ToApprove"
    ACCEPTED = "Accepted"
    REJECTED = "Rejected"
    QUEUED = "Queued"
    SETTLED = "Settled"
    DECLINED = "Declined"


#: no event ever leaves these states
ABSORBING_STATES = frozenset(
    {TransactionState.SETTLED, TransactionState.REJECTED, TransactionState.DECLINED}
)


class EventType(str, enum.Enum):
    SHARES_EXCHANGED_LOCALLY = "SharesExchangedLocally"
    FIRST_SHARE_DELIVERED = "FirstShareDelivered"
    SECOND_SHARE_DELIVERED = "SecondShareDelivered"
    OPERATOR_APPROVE = "OperatorApprove"
    OPERATOR_REJECT = "OperatorReject"
    BATCH_TRIGGERED = "BatchTriggered"
    PAYMENT_OK = "PaymentOk"
    PAYMENT_DECLINED = "PaymentDeclined"


@dataclass(frozen=True)
class Event:
    type: EventType
    #: meaningful only for SECOND_SHARE_DELIVERED: did stacking reproduce a
    #: clean selfie inside the capture window?
    reconstruction_ok: bool = True
    note: str = ""

    @classmethod
    def second_share_delivered(cls, reconstruction_ok: bool, note: str = "") -> "Event":
        return cls(EventType.SECOND_SHARE_DELIVERED, reconstruction_ok, note)


_TRANSITIONS: dict[tuple[TransactionState, EventType], TransactionState] = {
    (TransactionState.CREATED, EventType.SHARES_EXCHANGED_LOCALLY): TransactionState.SHARE_EXCHANGED,
    (TransactionState.SHARE_EXCHANGED, EventType.FIRST_SHARE_DELIVERED): TransactionState.INCOMPLETE,
    (TransactionState.INCOMPLETE, EventType.SECOND_SHARE_DELIVERED): TransactionState.TO_APPROVE,
    (TransactionState.TO_APPROVE, EventType.OPERATOR_APPROVE): TransactionState.ACCEPTED,
    (TransactionState.TO_APPROVE, EventType.OPERATOR_REJECT): TransactionState.REJECTED,
    (TransactionState.ACCEPTED, EventType.BATCH_TRIGGERED): TransactionState.QUEUED,
    (TransactionState.QUEUED, EventType.PAYMENT_OK): TransactionState.SETTLED,
    (TransactionState.QUEUED, EventType.PAYMENT_DECLINED): TransactionState.DECLINED,
}


@dataclass(frozen=True)
class Transaction:
    id: int
    seller: PartyId
    buyer: PartyId
    amount: int
    currency: str
    business_model: BusinessModel
    state: TransactionState
    created_at: datetime
    updated_at: datetime
    captcha_nonce: str = ""
    note: str = ""

    def __post_init__(self) -> None:
        if self.amount < 0:
            raise ValidationError("amount must be non-negative")


def transition(txn: Transaction, event: Event, *, now: datetime | None = None) -> Transaction:
    """Apply one lifecycle event; anything off the graph raises."""
    target = _TRANSITIONS.get((txn.state, event.type))
    if target is None:
        raise IllegalTransitionError(
            f"event {event.type.value} is not applicable in state {txn.state.value}"
        )
    if event.type is EventType.SECOND_SHARE_DELIVERED and not event.reconstruction_ok:
        target = TransactionState.REJECTED
    stamp = now if now is not None else datetime.now(timezone.utc)
    note = event.note if event.note else txn.note
    return replace(txn, state=target, updated_at=stamp, note=note)


def apply_business_model(txn: Transaction) -> GoodsRelease:
    """When may the seller hand over the goods?"""
    if txn.business_model is BusinessModel.CARRY_THEN_CASH:
        return GoodsRelease.AT_SELFIE_TIME
    return GoodsRelease.AFTER_PAYMENT


class BlacklistReason(str, enum.Enum):
    PAYMENT_DECLINED = "PaymentDeclined"
    SHARE_WITHHELD = "ShareWithheld"
    TAMPER_EVIDENCE = "TamperEvidence"


@dataclass(frozen=True)
class BlacklistEntry:
    party: PartyId
    reason: BlacklistReason
    since: datetime


class Blacklist:
    """At most one active entry per party; removal is an operator action."""

    def __init__(self) -> None:
        self._entries: dict[str, BlacklistEntry] = {}

    def add(
        self,
        party: PartyId,
        reason: BlacklistReason,
        *,
        since: datetime | None = None,
    ) -> BlacklistEntry:
        existing = self._entries.get(party.identifier)
        if existing is not None:
            return existing
        entry = BlacklistEntry(
            party, reason, since if since is not None else datetime.now(timezone.utc)
        )
        self._entries[party.identifier] = entry
        return entry

    def remove(self, identifier: str) -> None:
        self._entries.pop(identifier, None)

    def contains(self, identifier: str) -> bool:
        return identifier in self._entries

    def entries(self) -> list[BlacklistEntry]:
        return sorted(self._entries.values(), key=lambda e: e.party.identifier)


def create_transaction(
    txn_id: int,
    seller: PartyId,
    buyer: PartyId,
    amount: int,
    currency: str,
    business_model: BusinessModel,
    *,
    blacklist: Blacklist | None = None,
    captcha_nonce: str = "",
    created_at: datetime | None = None,
) -> Transaction:
    """Open a purchase record; blacklisted parties are turned away."""
    if amount <= 0:
        raise ValidationError(f"purchase amount must be positive, got {amount}")
    if seller.role is not Role.SELLER or buyer.role is not Role.BUYER:
        raise ValidationError("parties must carry the Seller and Buyer roles")
    if blacklist is not None:
        for party in (seller, buyer):
            if blacklist.contains(party.identifier):
                raise BlacklistedPartyError(f"party {party.identifier} is blacklisted")
    stamp = created_at if created_at is not None else datetime.now(timezone.utc)
    return Transaction(
        id=txn_id,
        seller=seller,
        buyer=buyer,
        amount=amount,
        currency=currency,
        business_model=business_model,
        state=TransactionState.CREATED,
        created_at=stamp,
        updated_at=stamp,
        captcha_nonce=captcha_nonce,
    )


class BatchState(str, enum.Enum):
    OPEN = "Open"
    TRIGGERED = "Triggered"
    SETTLED = "Settled"
    DECLINED = "Declined"


@dataclass(frozen=True)
class SettlementBatch:
    id: int
    seller: PartyId
    buyer: PartyId
    transaction_ids: tuple[int, ...] = ()
    total_amount: int = 0
    threshold_at_creation: int = 0
    state: BatchState = BatchState.OPEN
    transfer_reference: str = ""


def accrue_to_batch(
    batch: SettlementBatch, txn: Transaction, threshold: int
) -> SettlementBatch:
    """Append an accepted purchase; trigger once the total reaches threshold."""
    if batch.state is not BatchState.OPEN:
        raise ValidationError(f"batch {batch.id} is {batch.state.value}, not Open")
    if txn.state is not TransactionState.ACCEPTED:
        raise ValidationError(
            f"only Accepted transactions may join a batch, got {txn.state.value}"
        )
    if (txn.seller.identifier, txn.buyer.identifier) != (
        batch.seller.identifier,
        batch.buyer.identifier,
    ):
        raise ValidationError(
            f"transaction parties ({txn.seller.identifier}, {txn.buyer.identifier}) "
            f"do not match batch parties ({batch.seller.identifier}, {batch.buyer.identifier})"
        )
    total = batch.total_amount + txn.amount
    state = BatchState.TRIGGERED if total >= threshold else BatchState.OPEN
    return replace(
        batch,
        transaction_ids=batch.transaction_ids + (txn.id,),
        total_amount=total,
        state=state,
    )


def default_threshold(
    pair_history: Sequence[int], fallback: int, multiplier: int = 10
) -> int:
    """Threshold policy: multiplier x median past purchase, else fallback."""
    if not pair_history:
        return fallback
    return int(round(multiplier * statistics.median(pair_history)))


class Ledger:
    """In-memory aggregate store with per-aggregate serialization.

    Mutations on one transaction or batch are totally ordered via a lock per
    aggregate id; distinct aggregates proceed in parallel. An optional
    observer is invoked (inside the lock) after every mutation so callers can
    persist write-through.
    """

    def __init__(
        self,
        observer: Callable[[str, object], None] | None = None,
    ) -> None:
        self.transactions: dict[int, Transaction] = {}
        self.batches: dict[int, SettlementBatch] = {}
        self.blacklist = Blacklist()
        self._observer = observer
        self._txn_locks: defaultdict[int, threading.Lock] = defaultdict(threading.Lock)
        self._batch_locks: defaultdict[int, threading.Lock] = defaultdict(threading.Lock)
        self._id_lock = threading.Lock()
        self._next_txn_id = 1
        self._next_batch_id = 1

    # -- id allocation -------------------------------------------------

    def allocate_transaction_id(self) -> int:
        with self._id_lock:
            txn_id = self._next_txn_id
            self._next_txn_id += 1
            return txn_id

    def _allocate_batch_id(self) -> int:
        with self._id_lock:
            batch_id = self._next_batch_id
            self._next_batch_id += 1
            return batch_id

    def adopt(self, txn: Transaction) -> None:
        """Load a pre-existing transaction (e.g. from persistence)."""
        self.transactions[txn.id] = txn
        with self._id_lock:
            self._next_txn_id = max(self._next_txn_id, txn.id + 1)

    def adopt_batch(self, batch: SettlementBatch) -> None:
        self.batches[batch.id] = batch
        with self._id_lock:
            self._next_batch_id = max(self._next_batch_id, batch.id + 1)

    # -- transactions ----------------------------------------------------

    def create_transaction(
        self,
        seller: PartyId,
        buyer: PartyId,
        amount: int,
        currency: str,
        business_model: BusinessModel,
        *,
        captcha_nonce: str = "",
        created_at: datetime | None = None,
    ) -> Transaction:
        txn = create_transaction(
            self.allocate_transaction_id(),
            seller,
            buyer,
            amount,
            currency,
            business_model,
            blacklist=self.blacklist,
            captcha_nonce=captcha_nonce,
            created_at=created_at,
        )
        self.transactions[txn.id] = txn
        self._notify("transaction", txn)
        return txn

    def get(self, txn_id: int) -> Transaction:
        try:
            return self.transactions[txn_id]
        except KeyError:
            raise NotFoundError(f"no transaction {txn_id}") from None

    def apply(self, txn_id: int, event: Event, *, now: datetime | None = None) -> Transaction:
        """Serialized transition; a declined payment blacklists the buyer."""
        with self._txn_locks[txn_id]:
            txn = transition(self.get(txn_id), event, now=now)
            self.transactions[txn_id] = txn
            self._notify("transaction", txn)
            if event.type is EventType.PAYMENT_DECLINED:
                entry = self.blacklist.add(
                    txn.buyer, BlacklistReason.PAYMENT_DECLINED, since=now
                )
                self._notify("blacklist", entry)
            return txn

    # -- blacklist -------------------------------------------------------

    def blacklist_party(
        self, party: PartyId, reason: BlacklistReason, *, since: datetime | None = None
    ) -> BlacklistEntry:
        entry = self.blacklist.add(party, reason, since=since)
        self._notify("blacklist", entry)
        return entry

    def unblacklist(self, identifier: str) -> None:
        self.blacklist.remove(identifier)
        self._notify("blacklist_removed", identifier)

    # -- batches ---------------------------------------------------------

    def open_batch(
        self, seller: PartyId, buyer: PartyId, threshold: int
    ) -> SettlementBatch:
        batch = SettlementBatch(
            id=self._allocate_batch_id(),
            seller=seller,
            buyer=buyer,
            threshold_at_creation=threshold,
        )
        self.batches[batch.id] = batch
        self._notify("batch", batch)
        return batch

    def get_batch(self, batch_id: int) -> SettlementBatch:
        try:
            return self.batches[batch_id]
        except KeyError:
            raise NotFoundError(f"no settlement batch {batch_id}") from None

    def open_batch_for_pair(
        self, seller: PartyId, buyer: PartyId, threshold: int
    ) -> SettlementBatch:
        """The pair's current Open batch, created on demand."""
        for batch in self.batches.values():
            if (
                batch.state is BatchState.OPEN
                and batch.seller.identifier == seller.identifier
                and batch.buyer.identifier == buyer.identifier
            ):
                return batch
        return self.open_batch(seller, buyer, threshold)

    def accrue(
        self, batch_id: int, txn_id: int, threshold: int | None = None
    ) -> SettlementBatch:
        """Serialized accrual; a trigger queues every member transaction."""
        with self._batch_locks[batch_id]:
            batch = self.get_batch(batch_id)
            limit = threshold if threshold is not None else batch.threshold_at_creation
            batch = accrue_to_batch(batch, self.get(txn_id), limit)
            self.batches[batch_id] = batch
            self._notify("batch", batch)
            if batch.state is BatchState.TRIGGERED:
                for member_id in batch.transaction_ids:
                    self.apply(member_id, Event(EventType.BATCH_TRIGGERED))
            return batch

    def resolve_batch(
        self, batch_id: int, *, settled: bool, reference: str = "", note: str = ""
    ) -> SettlementBatch:
        """Settle or decline a Triggered batch, updating every member."""
        with self._batch_locks[batch_id]:
            batch = self.get_batch(batch_id)
            if batch.state is not BatchState.TRIGGERED:
                raise ValidationError(
                    f"batch {batch_id} is {batch.state.value}, expected Triggered"
                )
            state = BatchState.SETTLED if settled else BatchState.DECLINED
            batch = replace(batch, state=state, transfer_reference=reference)
            self.batches[batch_id] = batch
            self._notify("batch", batch)
            event_type = EventType.PAYMENT_OK if settled else EventType.PAYMENT_DECLINED
            for member_id in batch.transaction_ids:
                self.apply(member_id, Event(event_type, note=note))
            return batch

    def check_conservation(self, batch_id: int) -> bool:
        batch = self.get_batch(batch_id)
        return batch.total_amount == sum(
            self.get(txn_id).amount for txn_id in batch.transaction_ids
        )

    def _notify(self, kind: str, value: object) -> None:
        if self._observer is not None:
            self._observer(kind, value)
