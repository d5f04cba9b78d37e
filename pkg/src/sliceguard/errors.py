"""Exception hierarchy shared by every service."""

from __future__ import annotations


class SliceguardError(Exception):
    """Base class. ``code`` is the stable wire name used by the HTTP layer."""

    code = "error"
    http_status = 500


class NotFound(SliceguardError, KeyError):
    code = "not_found"
    http_status = 404

    def __str__(self) -> str:
        return Exception.__str__(self)


class Conflict(SliceguardError):
    code = "conflict"
    http_status = 409


class ValidationError(SliceguardError, ValueError):
    code = "validation"
    http_status = 400


class CapacityError(SliceguardError):
    code = "capacity"
    http_status = 507


class Unavailable(SliceguardError):
    """A dependency could not be reached (service down, connection refused)."""

    code = "unavailable"
    http_status = 503


class AdapterError(SliceguardError):
    code = "adapter"
    http_status = 502


class LedgerError(SliceguardError):
    """Transaction rejected before execution; no block is sealed."""

    code = "ledger"
    http_status = 400


class AlreadyExists(LedgerError):
    code = "already_exists"
    http_status = 409


class BadNonce(LedgerError):
    code = "bad_nonce"


class InsufficientBalance(LedgerError):
    code = "insufficient_balance"


class UnknownAccount(LedgerError, NotFound):
    code = "unknown_account"
    http_status = 404


class UnknownCode(LedgerError):
    code = "unknown_code"


ERRORS_BY_CODE: dict[str, type[SliceguardError]] = {
    cls.code: cls
    for cls in (
        SliceguardError,
        NotFound,
        Conflict,
        ValidationError,
        CapacityError,
        Unavailable,
        AdapterError,
        LedgerError,
        AlreadyExists,
        BadNonce,
        InsufficientBalance,
        UnknownAccount,
        UnknownCode,
    )
}
