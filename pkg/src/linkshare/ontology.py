"""PolicyTree: the privacy-policy ontology and its validated mutation API.

A tree is an immutable snapshot. Every mutation returns a new tree whose
``version`` is one higher; a rejected mutation raises and leaves the
original untouched, so snapshots can be shared freely between threads.

Only a small OWL/XML subset is read and written: declarations of classes,
object properties and named individuals, ``SubClassOf`` between named
classes, property domain/range axioms, ``ClassAssertion`` and
``ObjectPropertyAssertion``.
"""

from __future__ import annotations

import dataclasses
import re
import xml.parsers.expat
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field
from functools import cached_property
from types import MappingProxyType
from xml.sax.saxutils import quoteattr

from linkshare.errors import (
    CycleDetected,
    DomainRangeViolation,
    DuplicateName,
    DuplicateTriple,
    InvalidIdentifier,
    InvariantViolation,
    MalformedDocument,
    NotAuthorized,
    UnknownClass,
    UnknownEntity,
    UnknownParent,
    UnknownTriple,
    UnsupportedConstruct,
)

OWL_NS = "http://www.w3.org/2002/07/owl#"
ONTOLOGY_IRI = "urn:linkshare:policy"

# reserved boolean-flag vocabulary
FLAG_CLASS = "Flag"
AFFIRMED = "Affirmed"

# class vocabulary the reasoner and query modules rely on
PII_CLASS = "Personally_Identifiable_Information"
COLLECTION_PURPOSE = "Collection_Purpose"
DATA_PROTECTION = "Data_Protection"
ACCESS_CONTROL = "Access_Control"
CONSUMER_CONSENT = "Consumer_Consent"
SERVICE_PROVIDER_CLASS = "Service_Provider"
END_USER_CLASS = "End_User"
TRUSTED_THIRD_PARTY_CLASS = "Trusted_Third_Party"

# property vocabulary
HAS_DATA_PROTECTION = "has_Data_Protection"
HAS_ACCESS_CONTROL = "has_Access_Control"
HAS_CONSENT_FOR_USE = "has_Consent_for_Use"
HAS_CONSENT_TO_SHARE = "has_Consent_to_share_PII"
IS_SHARABLE = "IsSharable"
IS_SENSITIVE = "IsSensitiveData"
IS_DATA_OWNER = "IsDataOwner"
IS_DATA_CONTROLLER = "IsDataController"

#: Relations over a PII data point that only its owner may set or reset.
OWNER_GATED_PROPERTIES = frozenset(
    {
        IS_SHARABLE,
        IS_SENSITIVE,
        HAS_CONSENT_FOR_USE,
        HAS_CONSENT_TO_SHARE,
        IS_DATA_OWNER,
        IS_DATA_CONTROLLER,
    }
)

_IDENTIFIER = re.compile(r"[A-Za-z0-9_.\-]+")


def is_identifier(value: object) -> bool:
    return isinstance(value, str) and _IDENTIFIER.fullmatch(value) is not None


def check_identifier(value: object, what: str = "identifier") -> str:
    if not is_identifier(value):
        raise InvalidIdentifier(f"invalid {what}: {value!r}")
    return value  # type: ignore[return-value]


def data_point(owner: str, field_name: str) -> str:
    """Name of the individual holding ``owner``'s ``field_name`` data point."""
    return f"{owner}.{field_name}"


@dataclass(frozen=True, order=True)
class PolicyClass:
    name: str
    parent: str | None = None


@dataclass(frozen=True, order=True)
class PolicyProperty:
    name: str
    domain: str
    range: str


@dataclass(frozen=True, order=True)
class Individual:
    name: str
    class_name: str


@dataclass(frozen=True, order=True)
class RelationTriple:
    subject: str
    property: str
    object: str

    def __str__(self) -> str:
        return f"({self.subject}, {self.property}, {self.object})"


def _frozen_map(items: Mapping | Iterable) -> Mapping:
    if isinstance(items, Mapping):
        return MappingProxyType(dict(items))
    return MappingProxyType({item.name: item for item in items})


@dataclass(frozen=True, eq=False)
class PolicyTree:
    """Immutable policy snapshot.

    The constructor performs no validation, which lets tests and the
    consistency checker work with deliberately broken trees. Use
    :func:`empty_tree`, :func:`parse_policy_document` and the mutation
    functions to obtain trees that satisfy every invariant.
    """

    classes: Mapping[str, PolicyClass] = field(default_factory=dict)
    properties: Mapping[str, PolicyProperty] = field(default_factory=dict)
    individuals: Mapping[str, Individual] = field(default_factory=dict)
    triples: frozenset[RelationTriple] = frozenset()
    version: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "classes", _frozen_map(self.classes))
        object.__setattr__(self, "properties", _frozen_map(self.properties))
        object.__setattr__(self, "individuals", _frozen_map(self.individuals))
        object.__setattr__(self, "triples", frozenset(self.triples))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, PolicyTree):
            return NotImplemented
        return self.version == other.version and self.same_structure(other)

    __hash__ = None  # type: ignore[assignment]

    def same_structure(self, other: PolicyTree) -> bool:
        """Equality ignoring ``version``."""
        return (
            dict(self.classes) == dict(other.classes)
            and dict(self.properties) == dict(other.properties)
            and dict(self.individuals) == dict(other.individuals)
            and self.triples == other.triples
        )

    @cached_property
    def closure(self) -> Mapping[str, frozenset[str]]:
        """Reflexive-transitive ancestors of every class.

        Safe on broken trees: the walk stops at a missing parent or at a
        class already visited.
        """
        out = {}
        for name in self.classes:
            seen = [name]
            current = self.classes[name].parent
            while current is not None and current not in seen:
                seen.append(current)
                node = self.classes.get(current)
                current = node.parent if node is not None else None
            out[name] = frozenset(seen)
        return MappingProxyType(out)

    @cached_property
    def _objects(self) -> Mapping[tuple[str, str], frozenset[str]]:
        index: dict[tuple[str, str], set[str]] = {}
        for t in self.triples:
            index.setdefault((t.subject, t.property), set()).add(t.object)
        return MappingProxyType({k: frozenset(v) for k, v in index.items()})

    def objects(self, subject: str, prop: str) -> frozenset[str]:
        """Objects ``o`` with ``(subject, prop, o)`` in the tree."""
        return self._objects.get((subject, prop), frozenset())

    def has_triple(self, subject: str, prop: str, obj: str) -> bool:
        return obj in self.objects(subject, prop)

    def is_instance_of(self, individual: str, class_name: str) -> bool:
        # a class missing from the tree has no members, even via a dangling parent link
        ind = self.individuals.get(individual)
        if ind is None or class_name not in self.classes:
            return False
        return class_name in self.closure.get(ind.class_name, frozenset())

    def owners_of(self, subject: str) -> frozenset[str]:
        return self.objects(subject, IS_DATA_OWNER)

    def summary(self) -> dict[str, int]:
        return {
            "classes": len(self.classes),
            "individuals": len(self.individuals),
            "properties": len(self.properties),
            "triples": len(self.triples),
            "version": self.version,
        }


def empty_tree() -> PolicyTree:
    """Tree holding only the reserved ``Flag`` class and ``Affirmed`` individual."""
    return PolicyTree(
        classes=[PolicyClass(FLAG_CLASS)],
        individuals=[Individual(AFFIRMED, FLAG_CLASS)],
    )


def subclass_closure(tree: PolicyTree) -> dict[str, frozenset[str]]:
    """Map each class to the set of its ancestors, itself included."""
    return dict(tree.closure)


def _bump(tree: PolicyTree, **changes) -> PolicyTree:
    return dataclasses.replace(tree, version=tree.version + 1, **changes)


def add_class(tree: PolicyTree, name: str, parent: str | None = None) -> PolicyTree:
    check_identifier(name, "class name")
    if name in tree.classes:
        raise DuplicateName(f"class {name!r} already exists")
    if parent is not None:
        if parent not in tree.classes:
            raise UnknownParent(f"parent class {parent!r} does not exist")
        if name in tree.closure[parent]:
            raise CycleDetected(f"{name!r} is already an ancestor of {parent!r}")
    classes = dict(tree.classes)
    classes[name] = PolicyClass(name, parent)
    return _bump(tree, classes=classes)


def add_property(tree: PolicyTree, name: str, domain: str, range: str) -> PolicyTree:
    check_identifier(name, "property name")
    if name in tree.properties:
        raise DuplicateName(f"property {name!r} already exists")
    for cls in (domain, range):
        if cls not in tree.classes:
            raise UnknownClass(f"class {cls!r} does not exist")
    properties = dict(tree.properties)
    properties[name] = PolicyProperty(name, domain, range)
    return _bump(tree, properties=properties)


def add_individual(tree: PolicyTree, name: str, class_name: str) -> PolicyTree:
    check_identifier(name, "individual name")
    if name in tree.individuals:
        raise DuplicateName(f"individual {name!r} already exists")
    if class_name not in tree.classes:
        raise UnknownClass(f"class {class_name!r} does not exist")
    individuals = dict(tree.individuals)
    individuals[name] = Individual(name, class_name)
    return _bump(tree, individuals=individuals)


def _check_typing(tree: PolicyTree, triple: RelationTriple) -> PolicyProperty:
    for name in (triple.subject, triple.object):
        if name not in tree.individuals:
            raise UnknownEntity(f"individual {name!r} does not exist")
    prop = tree.properties.get(triple.property)
    if prop is None:
        raise UnknownEntity(f"property {triple.property!r} does not exist")
    if not tree.is_instance_of(triple.subject, prop.domain):
        raise DomainRangeViolation(
            f"{triple.subject!r} is not an instance of {prop.domain!r} (domain of {prop.name})"
        )
    if not tree.is_instance_of(triple.object, prop.range):
        raise DomainRangeViolation(
            f"{triple.object!r} is not an instance of {prop.range!r} (range of {prop.name})"
        )
    return prop


def may_edit(tree: PolicyTree, actor: str, triple: RelationTriple, *, bootstrap: bool = False) -> bool:
    """Owner gate for consent and ownership relations.

    Relations outside :data:`OWNER_GATED_PROPERTIES` are open to any actor.
    A gated relation needs ``actor`` to own the subject data point. The
    first ``IsDataOwner`` assertion on an unowned data point is allowed
    only as a registration ``bootstrap``.
    """
    if triple.property not in OWNER_GATED_PROPERTIES:
        return True
    owners = tree.owners_of(triple.subject)
    if owners:
        return actor in owners
    return bootstrap and triple.property == IS_DATA_OWNER


def assert_relation(
    tree: PolicyTree,
    actor: str,
    subject: str,
    property: str,
    object: str,
    *,
    bootstrap: bool = False,
) -> PolicyTree:
    triple = RelationTriple(subject, property, object)
    _check_typing(tree, triple)
    if not may_edit(tree, actor, triple, bootstrap=bootstrap):
        raise NotAuthorized(f"{actor!r} may not assert {triple}")
    if triple in tree.triples:
        raise DuplicateTriple(f"{triple} already present")
    return _bump(tree, triples=tree.triples | {triple})


def retract_relation(tree: PolicyTree, actor: str, triple: RelationTriple) -> PolicyTree:
    if triple not in tree.triples:
        raise UnknownTriple(f"{triple} not present")
    if not may_edit(tree, actor, triple):
        raise NotAuthorized(f"{actor!r} may not retract {triple}")
    return _bump(tree, triples=tree.triples - {triple})


# -- OWL/XML ------------------------------------------------------------------


@dataclass
class _Element:
    tag: str
    line: int
    attrs: dict[str, str]
    children: list[_Element] = field(default_factory=list)
    text: str = ""


def _read_xml(doc: bytes) -> _Element:
    parser = xml.parsers.expat.ParserCreate("UTF-8", namespace_separator=" ")
    stack: list[_Element] = []
    root: list[_Element] = []

    def start(name: str, attrs: dict[str, str]) -> None:
        ns, _, local = name.rpartition(" ")
        line = parser.CurrentLineNumber
        if ns != OWL_NS:
            raise UnsupportedConstruct(f"element outside the OWL namespace: {name!r}", line=line)
        el = _Element(local, line, attrs)
        if stack:
            stack[-1].children.append(el)
        else:
            root.append(el)
        stack.append(el)

    def end(name: str) -> None:
        stack.pop()

    def chars(data: str) -> None:
        if stack:
            stack[-1].text += data

    parser.StartElementHandler = start
    parser.EndElementHandler = end
    parser.CharacterDataHandler = chars
    try:
        parser.Parse(doc, True)
    except xml.parsers.expat.ExpatError as exc:
        raise MalformedDocument(xml.parsers.expat.ErrorString(exc.code), line=exc.lineno) from None
    return root[0]


_ENTITY_KINDS = ("Class", "ObjectProperty", "NamedIndividual")

# axiom -> expected entity kinds of its children
_AXIOMS = {
    "SubClassOf": ("Class", "Class"),
    "ObjectPropertyDomain": ("ObjectProperty", "Class"),
    "ObjectPropertyRange": ("ObjectProperty", "Class"),
    "ClassAssertion": ("Class", "NamedIndividual"),
    "ObjectPropertyAssertion": ("ObjectProperty", "NamedIndividual", "NamedIndividual"),
}


def _entity_name(el: _Element) -> str:
    iri = el.attrs.get("IRI")
    if iri is None:
        iri = el.attrs.get("abbreviatedIRI")
        if iri is None:
            raise UnsupportedConstruct("entity without IRI", line=el.line, element=el.tag)
        local = iri.partition(":")[2]
    elif "#" in iri:
        local = iri.rpartition("#")[2]
    else:
        local = iri.rpartition("/")[2]
    if not is_identifier(local):
        raise InvariantViolation(f"invalid identifier {local!r}", line=el.line, element=el.tag)
    return local


def _entities(axiom: _Element, kinds: tuple[str, ...]) -> list[str]:
    if tuple(c.tag for c in axiom.children) != kinds:
        raise UnsupportedConstruct(
            f"expected {', '.join(kinds)} operands", line=axiom.line, element=axiom.tag
        )
    for child in axiom.children:
        if child.children or child.text.strip():
            raise UnsupportedConstruct("unexpected content", line=child.line, element=child.tag)
    return [_entity_name(c) for c in axiom.children]


def parse_policy_document(doc: bytes) -> PolicyTree:
    """Build a version-0 PolicyTree from an OWL/XML document.

    Triples are loaded without domain/range checks so that a hand-edited
    document can still be inspected by the consistency checker. Structural
    defects (dangling references, cycles, multiple parents) are rejected.
    """
    if isinstance(doc, str):
        doc = doc.encode("utf-8")
    try:
        doc.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise MalformedDocument(f"not UTF-8: {exc.reason}") from None
    root = _read_xml(doc)
    if root.tag != "Ontology":
        raise UnsupportedConstruct("root element must be Ontology", line=root.line, element=root.tag)
    if root.text.strip():
        raise UnsupportedConstruct("stray text in Ontology", line=root.line, element=root.tag)

    declared: dict[str, dict[str, int]] = {kind: {} for kind in _ENTITY_KINDS}
    axioms: dict[str, list[tuple[list[str], int]]] = {tag: [] for tag in _AXIOMS}
    for el in root.children:
        if el.text.strip():
            raise UnsupportedConstruct("stray text", line=el.line, element=el.tag)
        if el.tag == "Prefix":
            continue
        if el.tag == "Declaration":
            if len(el.children) != 1 or el.children[0].tag not in _ENTITY_KINDS:
                raise UnsupportedConstruct("unsupported declaration", line=el.line, element=el.tag)
            kind = el.children[0].tag
            (name,) = _entities(el, (kind,))
            declared[kind].setdefault(name, el.line)
        elif el.tag in _AXIOMS:
            axioms[el.tag].append((_entities(el, _AXIOMS[el.tag]), el.line))
        else:
            raise UnsupportedConstruct("construct outside the supported subset", line=el.line, element=el.tag)

    def need(kind: str, name: str, line: int, axiom: str) -> None:
        if name not in declared[kind]:
            raise InvariantViolation(f"undeclared {kind} {name!r}", line=line, element=axiom)

    def single(axiom: str, key_kind: str, value_kind: str) -> dict[str, str]:
        out: dict[str, str] = {}
        for (key, value), line in axioms[axiom]:
            need(key_kind, key, line, axiom)
            need(value_kind, value, line, axiom)
            if out.setdefault(key, value) != value:
                raise InvariantViolation(f"{key!r} has more than one {axiom} target", line=line, element=axiom)
        return out

    parents = single("SubClassOf", "Class", "Class")
    domains = single("ObjectPropertyDomain", "ObjectProperty", "Class")
    ranges = single("ObjectPropertyRange", "ObjectProperty", "Class")
    # ClassAssertion operands are ordered (class, individual)
    memberships: dict[str, str] = {}
    for (cls, ind), line in axioms["ClassAssertion"]:
        need("Class", cls, line, "ClassAssertion")
        need("NamedIndividual", ind, line, "ClassAssertion")
        if memberships.setdefault(ind, cls) != cls:
            raise InvariantViolation(f"individual {ind!r} asserted in two classes", line=line, element="ClassAssertion")

    classes = {name: PolicyClass(name, parents.get(name)) for name in declared["Class"]}
    for name in classes:
        seen = {name}
        current = parents.get(name)
        while current is not None:
            if current in seen:
                raise InvariantViolation(
                    f"subclass cycle through {name!r}", line=declared["Class"][name], element="SubClassOf"
                )
            seen.add(current)
            current = parents.get(current)

    properties = {}
    for name, line in declared["ObjectProperty"].items():
        if name not in domains or name not in ranges:
            raise InvariantViolation(f"property {name!r} lacks a domain or range", line=line, element="ObjectProperty")
        properties[name] = PolicyProperty(name, domains[name], ranges[name])

    individuals = {}
    for name, line in declared["NamedIndividual"].items():
        if name not in memberships:
            raise InvariantViolation(f"individual {name!r} has no class", line=line, element="NamedIndividual")
        individuals[name] = Individual(name, memberships[name])

    triples = set()
    for (prop, subj, obj), line in axioms["ObjectPropertyAssertion"]:
        need("ObjectProperty", prop, line, "ObjectPropertyAssertion")
        need("NamedIndividual", subj, line, "ObjectPropertyAssertion")
        need("NamedIndividual", obj, line, "ObjectPropertyAssertion")
        triples.add(RelationTriple(subj, prop, obj))

    classes.setdefault(FLAG_CLASS, PolicyClass(FLAG_CLASS))
    affirmed = individuals.setdefault(AFFIRMED, Individual(AFFIRMED, FLAG_CLASS))
    if affirmed.class_name != FLAG_CLASS:
        raise InvariantViolation(f"reserved individual {AFFIRMED!r} must belong to {FLAG_CLASS!r}")
    return PolicyTree(classes, properties, individuals, triples, version=0)


def _ref(kind: str, name: str) -> str:
    return f"<{kind} IRI={quoteattr('#' + name)}/>"


def serialize_policy(tree: PolicyTree) -> bytes:
    """Deterministic OWL/XML rendering of ``tree`` (version is not stored)."""
    lines = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<Ontology xmlns="{OWL_NS}" ontologyIRI="{ONTOLOGY_IRI}">',
    ]
    for cls in sorted(tree.classes.values()):
        lines.append(f"    <Declaration>{_ref('Class', cls.name)}</Declaration>")
        if cls.parent is not None:
            lines.append(f"    <SubClassOf>{_ref('Class', cls.name)}{_ref('Class', cls.parent)}</SubClassOf>")
    for prop in sorted(tree.properties.values()):
        p = _ref("ObjectProperty", prop.name)
        lines.append(f"    <Declaration>{p}</Declaration>")
        lines.append(f"    <ObjectPropertyDomain>{p}{_ref('Class', prop.domain)}</ObjectPropertyDomain>")
        lines.append(f"    <ObjectPropertyRange>{p}{_ref('Class', prop.range)}</ObjectPropertyRange>")
    for ind in sorted(tree.individuals.values()):
        i = _ref("NamedIndividual", ind.name)
        lines.append(f"    <Declaration>{i}</Declaration>")
        lines.append(f"    <ClassAssertion>{_ref('Class', ind.class_name)}{i}</ClassAssertion>")
    for t in sorted(tree.triples):
        lines.append(
            "    <ObjectPropertyAssertion>"
            f"{_ref('ObjectProperty', t.property)}"
            f"{_ref('NamedIndividual', t.subject)}"
            f"{_ref('NamedIndividual', t.object)}"
            "</ObjectPropertyAssertion>"
        )
    lines.append("</Ontology>")
    return ("\n".join(lines) + "\n").encode("utf-8")
