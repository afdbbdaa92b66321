"""Payment provider adapters.

Real mobile-money providers plug in behind `PaymentAdapter`; the package
ships only a scriptable mock. `submit_transfer` must be idempotent per batch
id so a settlement retried after a timeout never pays twice.
"""

from __future__ import annotations

import threading
import uuid
from dataclasses import dataclass
from typing import Protocol, runtime_checkable

from ..errors import AdapterTimeoutError
from ..protocol import SettlementBatch


@dataclass(frozen=True)
class TransferResult:
    status: str  # "success" | "declined"
    reference: str | None = None
    reason: str | None = None

    @property
    def success(self) -> bool:
        return self.status == "success"


@runtime_checkable
class PaymentAdapter(Protocol):
    name: str

    def submit_transfer(self, batch: SettlementBatch) -> TransferResult: ...


class MockPaymentAdapter:
    """Deterministic stand-in for a provider.

    Outcomes are scripted per batch id (``set_outcome``, ``fail_times``);
    unscripted batches succeed. Repeated submissions for one batch id return
    the first result and are counted, which lets tests pin idempotency.
    """

    name = "mock"

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._results: dict[int, TransferResult] = {}
        self._scripted: dict[int, TransferResult] = {}
        self._timeouts_left: dict[int, int] = {}
        self.submissions: dict[int, int] = {}

    def set_outcome(self, batch_id: int, status: str, reason: str | None = None) -> None:
        if status == "declined":
            self._scripted[batch_id] = TransferResult("declined", reason=reason or "declined")
        else:
            self._scripted.pop(batch_id, None)

    def fail_times(self, batch_id: int, times: int) -> None:
        self._timeouts_left[batch_id] = times

    def submit_transfer(self, batch: SettlementBatch) -> TransferResult:
        with self._lock:
            self.submissions[batch.id] = self.submissions.get(batch.id, 0) + 1
            done = self._results.get(batch.id)
            if done is not None:
                return done
            if self._timeouts_left.get(batch.id, 0) > 0:
                self._timeouts_left[batch.id] -= 1
                raise AdapterTimeoutError(f"provider timed out for batch {batch.id}")
            result = self._scripted.get(
                batch.id,
                TransferResult("success", reference=f"mock-xfer-{batch.id}-{uuid.uuid4().hex[:8]}"),
            )
            self._results[batch.id] = result
            return result

    def transfer_references(self, batch_id: int) -> list[str]:
        result = self._results.get(batch_id)
        return [result.reference] if result is not None and result.reference else []
