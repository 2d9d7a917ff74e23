"""Exception hierarchy shared by every layer.

Each error carries a stable ``kind`` string used on the wire (REST error bodies)
and an ``exit_code`` used by the command line:

    1  validation
    2  transport
    3  not found
    4  integrity
"""
from __future__ import annotations

from typing import Any


class MMLError(Exception):
    kind = "error"
    exit_code = 1
    http_status = 422

    def __init__(self, message: str = "", **extra: Any) -> None:
        super().__init__(message or self.kind)
        self.message = message or self.kind
        self.extra = extra

    def to_dict(self) -> dict[str, Any]:
        body: dict[str, Any] = {"error": self.kind, "detail": self.message}
        body.update(self.extra)
        return body


class ValidationError(MMLError):
    kind = "validation-error"

    def __init__(self, message: str = "", field: str | None = None, **extra: Any) -> None:
        if field is not None:
            extra["field"] = field
        super().__init__(message, **extra)
        self.field = field


class CanonicalizationError(ValidationError):
    kind = "canonicalization-error"


class ParseError(ValidationError):
    kind = "parse-error"


class NamespaceError(ValidationError):
    kind = "namespace-error"


class SigningKeyError(ValidationError):
    kind = "key-error"


class FileError(MMLError):
    kind = "file-error"
    exit_code = 3
    http_status = 404


class ProvenanceError(MMLError):
    kind = "provenance-error"
    exit_code = 4


class RevisionError(ValidationError):
    kind = "revision-error"


class CycleError(MMLError):
    kind = "cycle-error"
    exit_code = 4


class InvariantViolation(MMLError):
    kind = "invariant-violation"
    exit_code = 4


class TransportError(MMLError):
    kind = "transport-error"
    exit_code = 2
    http_status = 502


class NotFound(MMLError):
    kind = "not-found"
    exit_code = 3
    http_status = 404


# repository


class DuplicateIdentifier(MMLError):
    """Raised when an identifier is already stored.

    ``receipt`` is the original receipt; ``identical`` tells whether the offered
    unit was byte-identical to the stored one (a harmless re-put).
    """

    kind = "duplicate-identifier"
    http_status = 409

    def __init__(self, message: str = "", receipt: Any = None, identical: bool = False) -> None:
        extra: dict[str, Any] = {"identical": identical}
        if receipt is not None:
            extra["receipt"] = receipt.to_dict()
        super().__init__(message, **extra)
        self.receipt = receipt
        self.identical = identical


class TamperedUnit(MMLError):
    kind = "tampered-unit"
    exit_code = 4


class MalformedUnit(ValidationError):
    kind = "malformed-unit"


class RightsContentRejected(ValidationError):
    kind = "rights-content-rejected"


class PayloadTooLarge(ValidationError):
    kind = "payload-too-large"


# ledger


class RejectedPayload(MMLError):
    kind = "rejected-payload"
    exit_code = 4


class RecipientRuleViolation(ValidationError):
    kind = "recipient-rule-violation"


class InvalidTransaction(MMLError):
    kind = "invalid-transaction"
    exit_code = 4


# search


class EmptyTermsError(ValidationError):
    kind = "empty-after-normalization"


def _all_subclasses(cls: type) -> list[type]:
    out = []
    for sub in cls.__subclasses__():
        out.append(sub)
        out.extend(_all_subclasses(sub))
    return out


ERRORS_BY_KIND: dict[str, type[MMLError]] = {c.kind: c for c in [MMLError, *_all_subclasses(MMLError)]}


def error_from_dict(body: dict[str, Any]) -> MMLError:
    """Rebuild an exception from a REST error body (client side)."""
    kind = body.get("error", "error")
    detail = body.get("detail", kind)
    cls = ERRORS_BY_KIND.get(kind, MMLError)
    if cls is DuplicateIdentifier:
        from mml.repository import Receipt

        receipt = Receipt.from_dict(body["receipt"]) if body.get("receipt") else None
        return DuplicateIdentifier(detail, receipt=receipt, identical=bool(body.get("identical")))
    extra = {k: v for k, v in body.items() if k not in ("error", "detail")}
    if issubclass(cls, ValidationError):
        field = extra.pop("field", None)
        return cls(detail, field=field, **extra)
    return cls(detail, **extra)
