"""Exception hierarchy shared across the package.

Every error carries a stable machine-readable ``code`` so the HTTP layer
can map it onto a JSON problem object without string matching.
"""

from __future__ import annotations


class VcpayError(Exception):
    """Base class for all package errors."""

    code = "error"
    http_status = 500


class ValidationError(VcpayError):
    code = "validation"
    http_status = 422


class ImageTooLargeError(ValidationError):
    code = "image_too_large"


class DimensionMismatchError(VcpayError):
    code = "dimension_mismatch"
    http_status = 422


class TamperDetectedError(VcpayError):
    """A stacked block carried no black subpixel; impossible for honest shares."""

    code = "tamper_detected"
    http_status = 422


class ClockSkewError(VcpayError):
    code = "clock_skew"
    http_status = 422


class BlacklistedPartyError(VcpayError):
    code = "blacklisted_party"
    http_status = 403


class IllegalTransitionError(VcpayError):
    code = "illegal_transition"
    http_status = 409


class IntegrityError(VcpayError):
    """Checksum of a share payload does not match its envelope."""

    code = "integrity"
    http_status = 422


class ConflictError(VcpayError):
    """A different payload already exists for the same envelope key."""

    code = "conflict"
    http_status = 409


class NotConnectedError(VcpayError):
    code = "not_connected"
    http_status = 409


class PreconditionError(VcpayError):
    code = "precondition"
    http_status = 409


class NotFoundError(VcpayError):
    code = "not_found"
    http_status = 404


class AuthError(VcpayError):
    """Missing, malformed, unknown or expired bearer token."""

    code = "auth_invalid_token"
    http_status = 401


class ForbiddenError(VcpayError):
    """Authenticated principal lacks the role for the operation."""

    code = "forbidden"
    http_status = 403


class AdapterTimeoutError(VcpayError):
    """Payment adapter did not answer; safe to retry the settlement."""

    code = "adapter_timeout"
    http_status = 503
