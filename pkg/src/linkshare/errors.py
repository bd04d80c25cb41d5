"""Exception hierarchy shared by every linkshare module.

Each exception exposes a stable ``code`` (the class name) which the CLI
prints verbatim.
"""

from __future__ import annotations


class LinkShareError(Exception):
    """Base class for all domain errors."""

    @property
    def code(self) -> str:
        return type(self).__name__


# -- ontology ---------------------------------------------------------------


class PolicyDocumentError(LinkShareError):
    """Raised while ingesting a policy document.

    ``line`` and ``element`` locate the offending construct when known.
    """

    def __init__(self, message: str, *, line: int | None = None, element: str | None = None):
        self.line = line
        self.element = element
        where = []
        if line is not None:
            where.append(f"line {line}")
        if element is not None:
            where.append(f"<{element}>")
        suffix = f" ({', '.join(where)})" if where else ""
        super().__init__(message + suffix)


class MalformedDocument(PolicyDocumentError):
    pass


class UnsupportedConstruct(PolicyDocumentError):
    pass


class InvariantViolation(PolicyDocumentError):
    pass


class DuplicateName(LinkShareError):
    pass


class UnknownParent(LinkShareError):
    pass


class UnknownClass(LinkShareError):
    pass


class CycleDetected(LinkShareError):
    pass


class InvalidIdentifier(LinkShareError):
    pass


class UnknownEntity(LinkShareError):
    pass


class DomainRangeViolation(LinkShareError):
    pass


class NotAuthorized(LinkShareError):
    pass


class DuplicateTriple(LinkShareError):
    pass


class UnknownTriple(LinkShareError):
    pass


# -- ledger -----------------------------------------------------------------


class InvalidRequest(LinkShareError):
    pass


class DuplicateTransaction(LinkShareError):
    pass


class NonMonotoneTimestamp(LinkShareError):
    pass


class ChainCorrupted(LinkShareError):
    def __init__(self, message: str, height: int | None = None):
        self.height = height
        super().__init__(message)


# -- userbase ---------------------------------------------------------------


class UnknownParticipant(LinkShareError):
    pass


class DuplicateParticipant(LinkShareError):
    pass


class OwnerGatedChange(LinkShareError):
    pass


class AlreadyVoted(LinkShareError):
    pass


class ProposalClosed(LinkShareError):
    pass


# -- simulator --------------------------------------------------------------


class InvalidConfig(LinkShareError):
    pass
