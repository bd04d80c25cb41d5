"""Consistency checking and per-transaction verification."""

from __future__ import annotations

import enum
import json
from collections.abc import Mapping
from dataclasses import dataclass, field
from types import MappingProxyType

from linkshare.errors import InvalidRequest, UnknownClass
from linkshare.ontology import (
    ACCESS_CONTROL,
    AFFIRMED,
    DATA_PROTECTION,
    HAS_ACCESS_CONTROL,
    HAS_CONSENT_FOR_USE,
    HAS_CONSENT_TO_SHARE,
    HAS_DATA_PROTECTION,
    IS_SENSITIVE,
    IS_SHARABLE,
    PII_CLASS,
    PolicyTree,
    data_point,
    is_identifier,
)

UNIT_SEPARATOR = "\x1f"


class ReasonerError(str, enum.Enum):
    MISSING_FIELD = "MissingField"
    NO_CONSENT_FOR_USE = "NoConsentForUse"
    NO_CONSENT_TO_SHARE = "NoConsentToShare"
    NOT_SHARABLE = "NotSharable"
    SENSITIVE_WITHOUT_EXPLICIT_CONSENT = "SensitiveWithoutExplicitConsent"
    NO_PURPOSE_CHAIN = "NoPurposeChain"
    DOMAIN_RANGE_VIOLATION = "DomainRangeViolation"
    INCONSISTENT_ONTOLOGY = "InconsistentOntology"

    def __str__(self) -> str:
        return self.value


class Status(str, enum.Enum):
    PASS = "PASS"
    FAIL = "FAIL"

    def __str__(self) -> str:
        return self.value


_REQUEST_KEYS = ("fields", "owner", "purpose", "recipient", "requester", "tx_id")


@dataclass(frozen=True)
class TransactionRequest:
    """One attempt by ``requester`` to share ``owner``'s PII with ``recipient``."""

    tx_id: str
    requester: str
    owner: str
    recipient: str
    purpose: str
    fields: Mapping[str, str]

    def __post_init__(self) -> None:
        for key in ("tx_id", "requester", "owner", "recipient", "purpose"):
            if not is_identifier(getattr(self, key)):
                raise InvalidRequest(f"{key} is not a valid identifier: {getattr(self, key)!r}")
        if not isinstance(self.fields, Mapping) or not self.fields:
            raise InvalidRequest("fields must be a non-empty map")
        for name, value in self.fields.items():
            if not is_identifier(name):
                raise InvalidRequest(f"invalid field name {name!r}")
            if not isinstance(value, str):
                raise InvalidRequest(f"value of {name!r} must be a string")
            if UNIT_SEPARATOR in value:
                raise InvalidRequest(f"value of {name!r} contains the 0x1F separator")
        object.__setattr__(self, "fields", MappingProxyType(dict(sorted(self.fields.items()))))

    @property
    def third_party(self) -> bool:
        return self.recipient != self.requester

    def to_dict(self) -> dict:
        return {
            "fields": dict(self.fields),
            "owner": self.owner,
            "purpose": self.purpose,
            "recipient": self.recipient,
            "requester": self.requester,
            "tx_id": self.tx_id,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_dict(cls, data: object) -> TransactionRequest:
        if not isinstance(data, dict) or sorted(data) != list(_REQUEST_KEYS):
            raise InvalidRequest(f"request must be an object with keys {', '.join(_REQUEST_KEYS)}")
        return cls(**data)

    @classmethod
    def from_json(cls, text: str | bytes) -> TransactionRequest:
        try:
            data = json.loads(text)
        except (ValueError, UnicodeDecodeError) as exc:
            raise InvalidRequest(f"request is not valid JSON: {exc}") from None
        return cls.from_dict(data)


@dataclass(frozen=True)
class Verdict:
    status: Status
    error: ReasonerError | None = None
    failing_field: str | None = None

    def __post_init__(self) -> None:
        if (self.status is Status.PASS) != (self.error is None):
            raise ValueError("a verdict passes exactly when it carries no error")

    @property
    def passed(self) -> bool:
        return self.status is Status.PASS

    def to_dict(self) -> dict:
        return {
            "error": None if self.error is None else self.error.value,
            "failing_field": self.failing_field,
            "status": self.status.value,
        }


PASS = Verdict(Status.PASS)


def fail(error: ReasonerError, failing_field: str | None = None) -> Verdict:
    return Verdict(Status.FAIL, error, failing_field)


@dataclass(frozen=True)
class ConsistencyReport:
    violations: tuple[tuple[str, str], ...] = field(default_factory=tuple)

    @property
    def consistent(self) -> bool:
        return not self.violations


def check_consistency(tree: PolicyTree) -> ConsistencyReport:
    """List every cycle, dangling reference and mistyped triple in ``tree``.

    Violation kinds: ``SubclassCycle``, ``DanglingReference``,
    ``DomainRangeViolation``.
    """
    violations: list[tuple[str, str]] = []
    closure = tree.closure

    for name in sorted(tree.classes):
        cls = tree.classes[name]
        if cls.parent is not None and cls.parent not in tree.classes:
            violations.append(("DanglingReference", f"class {name} -> parent {cls.parent}"))
    # a class sits on a cycle iff walking up from its parent returns to it
    for name in sorted(tree.classes):
        parent = tree.classes[name].parent
        if parent is not None and parent in tree.classes and name in closure[parent]:
            violations.append(("SubclassCycle", f"class {name}"))

    for name in sorted(tree.properties):
        prop = tree.properties[name]
        for role, cls in (("domain", prop.domain), ("range", prop.range)):
            if cls not in tree.classes:
                violations.append(("DanglingReference", f"property {name} -> {role} {cls}"))
    for name in sorted(tree.individuals):
        ind = tree.individuals[name]
        if ind.class_name not in tree.classes:
            violations.append(("DanglingReference", f"individual {name} -> class {ind.class_name}"))

    for t in sorted(tree.triples):
        missing = [n for n in (t.subject, t.object) if n not in tree.individuals]
        prop = tree.properties.get(t.property)
        if prop is None:
            missing.append(t.property)
        if missing:
            violations.append(("DanglingReference", f"triple {t} -> {', '.join(missing)}"))
            continue
        if not (tree.is_instance_of(t.subject, prop.domain) and tree.is_instance_of(t.object, prop.range)):
            violations.append(("DomainRangeViolation", f"triple {t}"))
    return ConsistencyReport(tuple(violations))


def subsumes(tree: PolicyTree, ancestor: str, descendant: str) -> bool:
    for name in (ancestor, descendant):
        if name not in tree.classes:
            raise UnknownClass(f"class {name!r} does not exist")
    return ancestor in tree.closure[descendant]


def has_purpose_chain(tree: PolicyTree, purpose: str) -> bool:
    for protection in tree.objects(purpose, HAS_DATA_PROTECTION):
        if not tree.is_instance_of(protection, DATA_PROTECTION):
            continue
        for control in tree.objects(protection, HAS_ACCESS_CONTROL):
            if tree.is_instance_of(control, ACCESS_CONTROL):
                return True
    return False


def _check_field(tree: PolicyTree, request: TransactionRequest, name: str) -> ReasonerError | None:
    point = data_point(request.owner, name)
    if not tree.is_instance_of(point, PII_CLASS):
        return ReasonerError.MISSING_FIELD
    use = bool(tree.objects(point, HAS_CONSENT_FOR_USE))
    share = bool(tree.objects(point, HAS_CONSENT_TO_SHARE))
    if not use:
        return ReasonerError.NO_CONSENT_FOR_USE
    if request.third_party and not share:
        return ReasonerError.NO_CONSENT_TO_SHARE
    if not tree.has_triple(point, IS_SHARABLE, AFFIRMED):
        return ReasonerError.NOT_SHARABLE
    if tree.has_triple(point, IS_SENSITIVE, AFFIRMED) and not share:
        return ReasonerError.SENSITIVE_WITHOUT_EXPLICIT_CONSENT
    if not has_purpose_chain(tree, request.purpose):
        return ReasonerError.NO_PURPOSE_CHAIN
    return None


def verify_transaction(tree: PolicyTree, request: TransactionRequest) -> Verdict:
    """Decide whether ``request`` may proceed under ``tree``.

    An inconsistent tree fails closed. Otherwise fields are checked in
    lexicographic order and the first failing rule is reported.
    """
    if not check_consistency(tree).consistent:
        return fail(ReasonerError.INCONSISTENT_ONTOLOGY)
    for name in sorted(request.fields):
        error = _check_field(tree, request, name)
        if error is not None:
            return fail(error, name)
    return PASS
