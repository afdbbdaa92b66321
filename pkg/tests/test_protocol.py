"""Lifecycle, batching and blacklist rules, including the exhaustive
state-machine sweep and the per-aggregate serialization contract."""

import threading

import pytest

from vcpay.errors import (
    BlacklistedPartyError,
    IllegalTransitionError,
    ValidationError,
)
from vcpay.protocol import (
    ABSORBING_STATES,
    BatchState,
    Blacklist,
    BlacklistReason,
    BusinessModel,
    Event,
    EventType,
    GoodsRelease,
    Ledger,
    PartyId,
    Role,
    SettlementBatch,
    Transaction,
    TransactionState,
    accrue_to_batch,
    apply_business_model,
    create_transaction,
    default_threshold,
    transition,
)
from vcpay.timefmt import utcnow

SELLER = PartyId("seller2@alphaplus.com", Role.SELLER)
BUYER = PartyId("buyer1@alphaplus.com", Role.BUYER)


def make_txn(txn_id=1, amount=500, state=TransactionState.CREATED, model=BusinessModel.CARRY_THEN_CASH):
    txn = create_transaction(txn_id, SELLER, BUYER, amount, "XOF", model)
    if state is not TransactionState.CREATED:
        object.__setattr__(txn, "state", state)
    return txn


ALL_EVENTS = [
    Event(EventType.SHARES_EXCHANGED_LOCALLY),
    Event(EventType.FIRST_SHARE_DELIVERED),
    Event.second_share_delivered(True),
    Event.second_share_delivered(False),
    Event(EventType.OPERATOR_APPROVE),
    Event(EventType.OPERATOR_REJECT),
    Event(EventType.BATCH_TRIGGERED),
    Event(EventType.PAYMENT_OK),
    Event(EventType.PAYMENT_DECLINED),
]


# --- creation --------------------------------------------------------------


def test_create_valid():
    txn = create_transaction(1, SELLER, BUYER, 500, "XOF", BusinessModel.CARRY_THEN_CASH)
    assert txn.state is TransactionState.CREATED
    assert txn.amount == 500


def test_create_blacklisted_buyer_rejected():
    blacklist = Blacklist()
    blacklist.add(BUYER, BlacklistReason.PAYMENT_DECLINED)
    with pytest.raises(BlacklistedPartyError):
        create_transaction(
            1, SELLER, BUYER, 500, "XOF", BusinessModel.CARRY_THEN_CASH, blacklist=blacklist
        )


def test_create_zero_amount_rejected():
    with pytest.raises(ValidationError):
        create_transaction(1, SELLER, BUYER, 0, "XOF", BusinessModel.CARRY_THEN_CASH)


def test_create_role_mixup_rejected():
    with pytest.raises(ValidationError):
        create_transaction(1, BUYER, SELLER, 10, "XOF", BusinessModel.CARRY_THEN_CASH)


# --- transitions ---------------------------------------------------------------


def test_happy_path_to_settled():
    txn = make_txn()
    for event, expected in [
        (Event(EventType.SHARES_EXCHANGED_LOCALLY), TransactionState.SHARE_EXCHANGED),
        (Event(EventType.FIRST_SHARE_DELIVERED), TransactionState.INCOMPLETE),
        (Event.second_share_delivered(True), TransactionState.TO_APPROVE),
        (Event(EventType.OPERATOR_APPROVE), TransactionState.ACCEPTED),
        (Event(EventType.BATCH_TRIGGERED), TransactionState.QUEUED),
        (Event(EventType.PAYMENT_OK), TransactionState.SETTLED),
    ]:
        txn = transition(txn, event)
        assert txn.state is expected


def test_second_share_with_failed_reconstruction_rejects():
    txn = make_txn(state=TransactionState.INCOMPLETE)
    txn = transition(txn, Event.second_share_delivered(False, note="tampered"))
    assert txn.state is TransactionState.REJECTED
    assert txn.note == "tampered"


def test_rejected_is_terminal():
    txn = make_txn(state=TransactionState.REJECTED)
    with pytest.raises(IllegalTransitionError):
        transition(txn, Event(EventType.OPERATOR_APPROVE))


def test_illegal_transition_names_state_and_event():
    txn = make_txn()
    with pytest.raises(IllegalTransitionError) as excinfo:
        transition(txn, Event(EventType.PAYMENT_OK))
    message = str(excinfo.value)
    assert "Created" in message and "PaymentOk" in message


def test_state_machine_exhaustive_depth_8():
    """DFS over every event sequence of length <= 8 starting from Created."""
    defined = set(TransactionState)
    legal_paths = 0
    illegal_applications = 0

    def explore(txn, depth):
        nonlocal legal_paths, illegal_applications
        if depth == 8:
            return
        for event in ALL_EVENTS:
            try:
                nxt = transition(txn, event)
            except IllegalTransitionError:
                illegal_applications += 1
                continue
            assert nxt.state in defined
            if txn.state in ABSORBING_STATES:
                pytest.fail(f"absorbing state {txn.state} allowed {event.type}")
            legal_paths += 1
            explore(nxt, depth + 1)

    explore(make_txn(), 0)
    assert legal_paths > 0
    assert illegal_applications > 0


def test_absorbing_states_allow_no_event():
    for state in ABSORBING_STATES:
        txn = make_txn(state=state)
        for event in ALL_EVENTS:
            with pytest.raises(IllegalTransitionError):
                transition(txn, event)


def test_amount_immutable():
    txn = make_txn()
    with pytest.raises(Exception):
        txn.amount = 9999  # frozen dataclass


# --- business models --------------------------------------------------------------


def test_business_model_mapping():
    carry = make_txn(model=BusinessModel.CARRY_THEN_CASH)
    cash = make_txn(model=BusinessModel.CASH_THEN_CARRY)
    assert apply_business_model(carry) is GoodsRelease.AT_SELFIE_TIME
    assert apply_business_model(cash) is GoodsRelease.AFTER_PAYMENT


def test_business_model_independent_of_amount():
    for model, expected in [
        (BusinessModel.CARRY_THEN_CASH, GoodsRelease.AT_SELFIE_TIME),
        (BusinessModel.CASH_THEN_CARRY, GoodsRelease.AFTER_PAYMENT),
    ]:
        for amount in (1, 500, 10**9):
            assert apply_business_model(make_txn(amount=amount, model=model)) is expected


def test_cash_then_carry_goods_wait_for_settled():
    txn = make_txn(model=BusinessModel.CASH_THEN_CARRY)
    for state in TransactionState:
        if state is TransactionState.SETTLED:
            continue
        object.__setattr__(txn, "state", state)
        assert apply_business_model(txn) is GoodsRelease.AFTER_PAYMENT


# --- batching -------------------------------------------------------------------------


def batch(threshold=100):
    return SettlementBatch(id=1, seller=SELLER, buyer=BUYER, threshold_at_creation=threshold)


def accepted(txn_id, amount):
    return make_txn(txn_id=txn_id, amount=amount, state=TransactionState.ACCEPTED)


def test_accrue_30_30_50_triggers_at_third():
    b = batch()
    b = accrue_to_batch(b, accepted(1, 30), 100)
    assert b.state is BatchState.OPEN and b.total_amount == 30
    b = accrue_to_batch(b, accepted(2, 30), 100)
    assert b.state is BatchState.OPEN and b.total_amount == 60
    b = accrue_to_batch(b, accepted(3, 50), 100)
    assert b.state is BatchState.TRIGGERED
    assert b.total_amount == 110
    assert b.transaction_ids == (1, 2, 3)


def test_accrue_boundary_inclusive():
    b = accrue_to_batch(batch(), accepted(1, 100), 100)
    assert b.state is BatchState.TRIGGERED


def test_accrue_party_mismatch():
    other = Transaction(
        id=9,
        seller=SELLER,
        buyer=PartyId("someone-else@x", Role.BUYER),
        amount=10,
        currency="XOF",
        business_model=BusinessModel.CARRY_THEN_CASH,
        state=TransactionState.ACCEPTED,
        created_at=utcnow(),
        updated_at=utcnow(),
    )
    with pytest.raises(ValidationError) as excinfo:
        accrue_to_batch(batch(), other, 100)
    assert "parties" in str(excinfo.value)


def test_accrue_requires_accepted():
    with pytest.raises(ValidationError):
        accrue_to_batch(batch(), make_txn(state=TransactionState.TO_APPROVE), 100)


def test_accrue_requires_open_batch():
    b = accrue_to_batch(batch(), accepted(1, 100), 100)  # now Triggered
    with pytest.raises(ValidationError):
        accrue_to_batch(b, accepted(2, 10), 100)


def test_default_threshold_policy():
    assert default_threshold([], fallback=500) == 500
    assert default_threshold([30, 50, 40], fallback=500) == 400
    assert default_threshold([10], fallback=500, multiplier=10) == 100


# --- ledger ---------------------------------------------------------------------------


def advance_to_queued(ledger, txn_id, threshold=100):
    ledger.apply(txn_id, Event(EventType.SHARES_EXCHANGED_LOCALLY))
    ledger.apply(txn_id, Event(EventType.FIRST_SHARE_DELIVERED))
    ledger.apply(txn_id, Event.second_share_delivered(True))
    ledger.apply(txn_id, Event(EventType.OPERATOR_APPROVE))
    b = ledger.open_batch_for_pair(SELLER, BUYER, threshold)
    return ledger.accrue(b.id, txn_id)


def test_ledger_decline_blacklists_buyer():
    ledger = Ledger()
    txn = ledger.create_transaction(SELLER, BUYER, 500, "XOF", BusinessModel.CARRY_THEN_CASH)
    b = advance_to_queued(ledger, txn.id)
    assert b.state is BatchState.TRIGGERED
    assert ledger.get(txn.id).state is TransactionState.QUEUED
    ledger.resolve_batch(b.id, settled=False, note="card declined")
    assert ledger.get(txn.id).state is TransactionState.DECLINED
    assert ledger.blacklist.contains(BUYER.identifier)
    with pytest.raises(BlacklistedPartyError):
        ledger.create_transaction(SELLER, BUYER, 10, "XOF", BusinessModel.CARRY_THEN_CASH)


def test_blacklist_monotonic_until_removed():
    ledger = Ledger()
    ledger.blacklist_party(BUYER, BlacklistReason.TAMPER_EVIDENCE)
    for _ in range(3):
        with pytest.raises(BlacklistedPartyError):
            ledger.create_transaction(SELLER, BUYER, 10, "XOF", BusinessModel.CARRY_THEN_CASH)
    ledger.unblacklist(BUYER.identifier)
    txn = ledger.create_transaction(SELLER, BUYER, 10, "XOF", BusinessModel.CARRY_THEN_CASH)
    assert txn.state is TransactionState.CREATED


def test_blacklist_single_entry_per_party():
    blacklist = Blacklist()
    first = blacklist.add(BUYER, BlacklistReason.PAYMENT_DECLINED)
    second = blacklist.add(BUYER, BlacklistReason.TAMPER_EVIDENCE)
    assert first is second
    assert len(blacklist.entries()) == 1


def test_ledger_batch_conservation_after_every_mutation():
    ledger = Ledger()
    b = ledger.open_batch(SELLER, BUYER, threshold=1000)
    for amount in (30, 30, 50, 200):
        txn = ledger.create_transaction(SELLER, BUYER, amount, "XOF", BusinessModel.CARRY_THEN_CASH)
        ledger.apply(txn.id, Event(EventType.SHARES_EXCHANGED_LOCALLY))
        ledger.apply(txn.id, Event(EventType.FIRST_SHARE_DELIVERED))
        ledger.apply(txn.id, Event.second_share_delivered(True))
        ledger.apply(txn.id, Event(EventType.OPERATOR_APPROVE))
        ledger.accrue(b.id, txn.id)
        assert ledger.check_conservation(b.id)


def test_ledger_settlement_path():
    ledger = Ledger()
    txn = ledger.create_transaction(SELLER, BUYER, 500, "XOF", BusinessModel.CARRY_THEN_CASH)
    b = advance_to_queued(ledger, txn.id)
    ledger.resolve_batch(b.id, settled=True, reference="xfer-1")
    assert ledger.get(txn.id).state is TransactionState.SETTLED
    assert ledger.get_batch(b.id).transfer_reference == "xfer-1"
    assert not ledger.blacklist.contains(BUYER.identifier)


def test_concurrent_transitions_observe_total_order():
    """Racing the same event on one aggregate: exactly one wins."""
    ledger = Ledger()
    txn = ledger.create_transaction(SELLER, BUYER, 500, "XOF", BusinessModel.CARRY_THEN_CASH)
    ledger.apply(txn.id, Event(EventType.SHARES_EXCHANGED_LOCALLY))
    ledger.apply(txn.id, Event(EventType.FIRST_SHARE_DELIVERED))
    ledger.apply(txn.id, Event.second_share_delivered(True))

    outcomes = []
    barrier = threading.Barrier(8)

    def racer(event_type):
        barrier.wait()
        try:
            ledger.apply(txn.id, Event(event_type))
            outcomes.append(("ok", event_type))
        except IllegalTransitionError:
            outcomes.append(("illegal", event_type))

    threads = [
        threading.Thread(target=racer, args=(et,))
        for et in [EventType.OPERATOR_APPROVE, EventType.OPERATOR_REJECT] * 4
    ]
    for thread in threads:
        thread.start()
    for thread in threads:
        thread.join()

    wins = [event for status, event in outcomes if status == "ok"]
    assert len(wins) == 1
    final = ledger.get(txn.id).state
    assert final in (TransactionState.ACCEPTED, TransactionState.REJECTED)
