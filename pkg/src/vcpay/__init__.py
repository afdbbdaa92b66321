"""vcpay: offline-tolerant selfie micro-payments.

A purchase is photographed, the price is stamped on as distorted text, the
image is split into two visual-cryptography shares held by buyer and seller
(like the halves of a ripped banknote), a broker carries the shares to the
bank when connectivity allows, and the bank stacks them back together for a
human operator to validate before batched settlement.
"""

from .errors import (
    ConflictError,
    DimensionMismatchError,
    IllegalTransitionError,
    ImageTooLargeError,
    IntegrityError,
    TamperDetectedError,
    ValidationError,
    VcpayError,
)
from .vc import (
    BinaryImage,
    DistributionTables,
    Share,
    StackedImage,
    decode,
    encode_pixel,
    generate_shares,
    reconstruct,
    stack,
    verify_share,
)

__version__ = "0.1.0"

__all__ = [
    "BinaryImage",
    "ConflictError",
    "DimensionMismatchError",
    "DistributionTables",
    "IllegalTransitionError",
    "ImageTooLargeError",
    "IntegrityError",
    "Share",
    "StackedImage",
    "TamperDetectedError",
    "ValidationError",
    "VcpayError",
    "decode",
    "encode_pixel",
    "generate_shares",
    "reconstruct",
    "stack",
    "verify_share",
]
