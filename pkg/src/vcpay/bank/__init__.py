"""Point-of-service: share upload, pairing, validation, settlement, export."""

from .adapters import MockPaymentAdapter, PaymentAdapter, TransferResult
from .config import BankConfig, TokenClient
from .service import BankService

__all__ = [
    "BankConfig",
    "BankService",
    "MockPaymentAdapter",
    "PaymentAdapter",
    "TokenClient",
    "TransferResult",
]
