"""SQLite persistence for the point of service.

Write-through store: every domain mutation is committed here before the
service makes it visible, so a restart replays to the exact pre-crash state.
One connection behind one lock is plenty at desk scale.
"""

from __future__ import annotations

import json
import sqlite3
import threading
from dataclasses import dataclass
from pathlib import Path

from ..broker import ShareEnvelope
from ..protocol import (
    BatchState,
    BlacklistEntry,
    BlacklistReason,
    BusinessModel,
    PartyId,
    Role,
    SettlementBatch,
    Transaction,
    TransactionState,
)
from ..timefmt import parse_rfc3339, rfc3339

_SCHEMA = """
CREATE TABLE IF NOT EXISTS transactions (
    id INTEGER PRIMARY KEY,
    external_ref TEXT UNIQUE NOT NULL,
    seller TEXT NOT NULL,
    buyer TEXT NOT NULL,
    amount INTEGER NOT NULL,
    currency TEXT NOT NULL,
    business_model TEXT NOT NULL,
    state TEXT NOT NULL,
    created_at TEXT NOT NULL,
    updated_at TEXT NOT NULL,
    captcha_nonce TEXT NOT NULL DEFAULT '',
    note TEXT NOT NULL DEFAULT '',
    tamper_evidence INTEGER NOT NULL DEFAULT 0,
    reject_reason TEXT NOT NULL DEFAULT ''
);
CREATE TABLE IF NOT EXISTS envelopes (
    transaction_id INTEGER NOT NULL,
    sender_role TEXT NOT NULL,
    external_ref TEXT NOT NULL,
    payload BLOB NOT NULL,
    checksum TEXT NOT NULL,
    captcha_issued_at TEXT NOT NULL,
    share_generated_at TEXT NOT NULL,
    created_at TEXT NOT NULL,
    PRIMARY KEY (transaction_id, sender_role)
);
CREATE TABLE IF NOT EXISTS reconstructions (
    transaction_id INTEGER PRIMARY KEY,
    stacked_path TEXT NOT NULL,
    decoded_path TEXT NOT NULL,
    weight0 INTEGER NOT NULL,
    weight1 INTEGER NOT NULL,
    weight2 INTEGER NOT NULL,
    outcome TEXT NOT NULL,
    captcha_window TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS batches (
    id INTEGER PRIMARY KEY,
    seller TEXT NOT NULL,
    buyer TEXT NOT NULL,
    transaction_ids TEXT NOT NULL,
    total_amount INTEGER NOT NULL,
    threshold INTEGER NOT NULL,
    state TEXT NOT NULL,
    transfer_reference TEXT NOT NULL DEFAULT ''
);
CREATE TABLE IF NOT EXISTS blacklist (
    party TEXT PRIMARY KEY,
    role TEXT NOT NULL,
    reason TEXT NOT NULL,
    since TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS tokens (
    token TEXT PRIMARY KEY,
    client_id TEXT NOT NULL,
    role TEXT NOT NULL,
    party TEXT,
    expires_at TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS notifications (
    id INTEGER PRIMARY KEY AUTOINCREMENT,
    party TEXT NOT NULL,
    message TEXT NOT NULL,
    created_at TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS pairing_jobs (
    transaction_id INTEGER PRIMARY KEY,
    status TEXT NOT NULL
);
"""


@dataclass
class TransactionMeta:
    """Bank-side bookkeeping that rides along a lifecycle record."""

    external_ref: str
    tamper_evidence: bool = False
    reject_reason: str = ""


class BankStore:
    def __init__(self, db_path: str | Path) -> None:
        self._lock = threading.RLock()
        self._conn = sqlite3.connect(str(db_path), check_same_thread=False)
        self._conn.execute("PRAGMA journal_mode=WAL")
        with self._lock, self._conn:
            self._conn.executescript(_SCHEMA)

    def close(self) -> None:
        self._conn.close()

    # -- transactions ----------------------------------------------------

    def save_transaction(self, txn: Transaction, meta: TransactionMeta) -> None:
        with self._lock, self._conn:
            self._conn.execute(
                """INSERT INTO transactions
                   (id, external_ref, seller, buyer, amount, currency, business_model,
                    state, created_at, updated_at, captcha_nonce, note,
                    tamper_evidence, reject_reason)
                   VALUES (?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?)
                   ON CONFLICT(id) DO UPDATE SET
                    state=excluded.state, updated_at=excluded.updated_at,
                    note=excluded.note, tamper_evidence=excluded.tamper_evidence,
                    reject_reason=excluded.reject_reason""",
                (
                    txn.id,
                    meta.external_ref,
                    txn.seller.identifier,
                    txn.buyer.identifier,
                    txn.amount,
                    txn.currency,
                    txn.business_model.value,
                    txn.state.value,
                    rfc3339(txn.created_at),
                    rfc3339(txn.updated_at),
                    txn.captcha_nonce,
                    txn.note,
                    int(meta.tamper_evidence),
                    meta.reject_reason,
                ),
            )

    def load_transactions(self) -> list[tuple[Transaction, TransactionMeta]]:
        with self._lock:
            rows = self._conn.execute(
                """SELECT id, external_ref, seller, buyer, amount, currency,
                          business_model, state, created_at, updated_at,
                          captcha_nonce, note, tamper_evidence, reject_reason
                   FROM transactions ORDER BY id"""
            ).fetchall()
        out = []
        for row in rows:
            txn = Transaction(
                id=row[0],
                seller=PartyId(row[2], Role.SELLER),
                buyer=PartyId(row[3], Role.BUYER),
                amount=row[4],
                currency=row[5],
                business_model=BusinessModel(row[6]),
                state=TransactionState(row[7]),
                created_at=parse_rfc3339(row[8]),
                updated_at=parse_rfc3339(row[9]),
                captcha_nonce=row[10],
                note=row[11],
            )
            out.append((txn, TransactionMeta(row[1], bool(row[12]), row[13])))
        return out

    # -- envelopes ---------------------------------------------------------

    def save_envelope(self, transaction_id: int, envelope: ShareEnvelope) -> None:
        with self._lock, self._conn:
            self._conn.execute(
                """INSERT OR REPLACE INTO envelopes
                   (transaction_id, sender_role, external_ref, payload, checksum,
                    captcha_issued_at, share_generated_at, created_at)
                   VALUES (?, ?, ?, ?, ?, ?, ?, ?)""",
                (
                    transaction_id,
                    envelope.sender_role.value,
                    envelope.transaction_id,
                    envelope.share_payload,
                    envelope.checksum,
                    rfc3339(envelope.captcha_issued_at),
                    rfc3339(envelope.share_generated_at),
                    rfc3339(envelope.created_at),
                ),
            )

    def load_envelopes(self) -> dict[tuple[int, Role], ShareEnvelope]:
        with self._lock:
            rows = self._conn.execute(
                """SELECT transaction_id, sender_role, external_ref, payload, checksum,
                          captcha_issued_at, share_generated_at, created_at
                   FROM envelopes"""
            ).fetchall()
        out = {}
        for row in rows:
            role = Role(row[1])
            out[(row[0], role)] = ShareEnvelope(
                transaction_id=row[2],
                sender_role=role,
                share_payload=bytes(row[3]),
                checksum=row[4],
                captcha_issued_at=parse_rfc3339(row[5]),
                share_generated_at=parse_rfc3339(row[6]),
                created_at=parse_rfc3339(row[7]),
            )
        return out

    # -- reconstructions ---------------------------------------------------

    def save_reconstruction(
        self,
        transaction_id: int,
        stacked_path: str,
        decoded_path: str,
        weight_histogram: dict[int, int],
        outcome: str,
        captcha_window: str,
    ) -> None:
        with self._lock, self._conn:
            self._conn.execute(
                """INSERT OR REPLACE INTO reconstructions
                   (transaction_id, stacked_path, decoded_path,
                    weight0, weight1, weight2, outcome, captcha_window)
                   VALUES (?, ?, ?, ?, ?, ?, ?, ?)""",
                (
                    transaction_id,
                    stacked_path,
                    decoded_path,
                    weight_histogram.get(0, 0),
                    weight_histogram.get(1, 0),
                    weight_histogram.get(2, 0),
                    outcome,
                    captcha_window,
                ),
            )

    def load_reconstructions(self) -> dict[int, dict]:
        with self._lock:
            rows = self._conn.execute(
                """SELECT transaction_id, stacked_path, decoded_path,
                          weight0, weight1, weight2, outcome, captcha_window
                   FROM reconstructions"""
            ).fetchall()
        return {
            row[0]: {
                "stacked_path": row[1],
                "decoded_path": row[2],
                "weight_histogram": {0: row[3], 1: row[4], 2: row[5]},
                "outcome": row[6],
                "captcha_window": row[7],
            }
            for row in rows
        }

    # -- batches -------------------------------------------------------------

    def save_batch(self, batch: SettlementBatch) -> None:
        with self._lock, self._conn:
            self._conn.execute(
                """INSERT OR REPLACE INTO batches
                   (id, seller, buyer, transaction_ids, total_amount,
                    threshold, state, transfer_reference)
                   VALUES (?, ?, ?, ?, ?, ?, ?, ?)""",
                (
                    batch.id,
                    batch.seller.identifier,
                    batch.buyer.identifier,
                    json.dumps(list(batch.transaction_ids)),
                    batch.total_amount,
                    batch.threshold_at_creation,
                    batch.state.value,
                    batch.transfer_reference,
                ),
            )

    def load_batches(self) -> list[SettlementBatch]:
        with self._lock:
            rows = self._conn.execute(
                """SELECT id, seller, buyer, transaction_ids, total_amount,
                          threshold, state, transfer_reference
                   FROM batches ORDER BY id"""
            ).fetchall()
        return [
            SettlementBatch(
                id=row[0],
                seller=PartyId(row[1], Role.SELLER),
                buyer=PartyId(row[2], Role.BUYER),
                transaction_ids=tuple(json.loads(row[3])),
                total_amount=row[4],
                threshold_at_creation=row[5],
                state=BatchState(row[6]),
                transfer_reference=row[7],
            )
            for row in rows
        ]

    # -- blacklist -------------------------------------------------------------

    def save_blacklist_entry(self, entry: BlacklistEntry) -> None:
        with self._lock, self._conn:
            self._conn.execute(
                """INSERT OR REPLACE INTO blacklist (party, role, reason, since)
                   VALUES (?, ?, ?, ?)""",
                (
                    entry.party.identifier,
                    entry.party.role.value,
                    entry.reason.value,
                    rfc3339(entry.since),
                ),
            )

    def delete_blacklist_entry(self, identifier: str) -> None:
        with self._lock, self._conn:
            self._conn.execute("DELETE FROM blacklist WHERE party = ?", (identifier,))

    def load_blacklist(self) -> list[BlacklistEntry]:
        with self._lock:
            rows = self._conn.execute(
                "SELECT party, role, reason, since FROM blacklist"
            ).fetchall()
        return [
            BlacklistEntry(
                PartyId(row[0], Role(row[1])),
                BlacklistReason(row[2]),
                parse_rfc3339(row[3]),
            )
            for row in rows
        ]

    # -- tokens ----------------------------------------------------------------

    def save_token(
        self, token: str, client_id: str, role: str, party: str | None, expires_at: str
    ) -> None:
        with self._lock, self._conn:
            self._conn.execute(
                "INSERT OR REPLACE INTO tokens VALUES (?, ?, ?, ?, ?)",
                (token, client_id, role, party, expires_at),
            )

    def load_tokens(self) -> list[tuple[str, str, str, str | None, str]]:
        with self._lock:
            return self._conn.execute(
                "SELECT token, client_id, role, party, expires_at FROM tokens"
            ).fetchall()

    # -- notifications -----------------------------------------------------------

    def add_notification(self, party: str, message: str, created_at: str) -> None:
        with self._lock, self._conn:
            self._conn.execute(
                "INSERT INTO notifications (party, message, created_at) VALUES (?, ?, ?)",
                (party, message, created_at),
            )

    def list_notifications(self) -> list[dict]:
        with self._lock:
            rows = self._conn.execute(
                "SELECT id, party, message, created_at FROM notifications ORDER BY id"
            ).fetchall()
        return [
            {"id": row[0], "party": row[1], "message": row[2], "createdAt": row[3]}
            for row in rows
        ]

    # -- pairing jobs ---------------------------------------------------------------

    def set_job_status(self, transaction_id: int, status: str) -> None:
        with self._lock, self._conn:
            self._conn.execute(
                "INSERT OR REPLACE INTO pairing_jobs VALUES (?, ?)",
                (transaction_id, status),
            )

    def job_status(self, transaction_id: int) -> str | None:
        with self._lock:
            row = self._conn.execute(
                "SELECT status FROM pairing_jobs WHERE transaction_id = ?",
                (transaction_id,),
            ).fetchone()
        return row[0] if row else None

    def pending_jobs(self) -> list[int]:
        with self._lock:
            rows = self._conn.execute(
                "SELECT transaction_id FROM pairing_jobs WHERE status = 'queued' ORDER BY transaction_id"
            ).fetchall()
        return [row[0] for row in rows]
