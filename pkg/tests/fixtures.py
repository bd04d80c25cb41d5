"""Scenario builders and seeded random generators shared by the tests."""

from __future__ import annotations

import random

from linkshare import ontology
from linkshare.ontology import (
    AFFIRMED,
    Individual,
    PolicyClass,
    PolicyProperty,
    PolicyTree,
    RelationTriple,
    parse_policy_document,
)
from linkshare.policies import base_policy_document
from linkshare.reasoner import TransactionRequest
from linkshare.userbase import Role, UserBase, onboard_end_user, register_participant

CONSENT = "Consent_Granted"
PURPOSE = "Purpose_Service_Delivery"
SCENARIO_FIELDS = {"Name": "Alice", "ZIP": "21250", "CreditCard": "4111111111111111"}


def base_tree() -> PolicyTree:
    return parse_policy_document(base_policy_document())


def grant_all(tree: PolicyTree, user: str, field: str) -> PolicyTree:
    point = ontology.data_point(user, field)
    tree = ontology.assert_relation(tree, user, point, ontology.HAS_CONSENT_FOR_USE, CONSENT)
    tree = ontology.assert_relation(tree, user, point, ontology.HAS_CONSENT_TO_SHARE, CONSENT)
    return ontology.assert_relation(tree, user, point, ontology.IS_SHARABLE, AFFIRMED)


def scenario() -> tuple[PolicyTree, UserBase]:
    """Netflix, Amazon, an auditor, User1 and an unrelated end user.

    User1 (onboarded by Netflix) fully consents to sharing Name, ZIP and
    CreditCard; CreditCard is flagged sensitive and Netflix controls all
    three data points.
    """
    users = UserBase()
    for pid, role in [
        ("Netflix", Role.SERVICE_PROVIDER),
        ("Amazon", Role.SERVICE_PROVIDER),
        ("Auditor1", Role.TRUSTED_THIRD_PARTY),
        ("User1", Role.END_USER),
        ("Stranger", Role.END_USER),
    ]:
        users = register_participant(users, pid, role)
    tree = base_tree()
    tree = ontology.add_individual(tree, "Netflix", ontology.SERVICE_PROVIDER_CLASS)
    tree = ontology.add_individual(tree, "Amazon", ontology.SERVICE_PROVIDER_CLASS)
    tree = ontology.add_individual(tree, "Auditor1", ontology.TRUSTED_THIRD_PARTY_CLASS)
    tree = onboard_end_user(users, tree, "Netflix", "User1", sorted(SCENARIO_FIELDS))
    tree = onboard_end_user(users, tree, "Amazon", "Stranger", ["Name"])
    for field in SCENARIO_FIELDS:
        tree = grant_all(tree, "User1", field)
        tree = ontology.assert_relation(tree, "User1", f"User1.{field}", ontology.IS_DATA_CONTROLLER, "Netflix")
    tree = ontology.assert_relation(tree, "User1", "User1.CreditCard", ontology.IS_SENSITIVE, AFFIRMED)
    tree = grant_all(tree, "Stranger", "Name")
    return tree, users


def scenario_request(tx_id: str = "T1", **overrides) -> TransactionRequest:
    values = dict(
        tx_id=tx_id,
        requester="Netflix",
        owner="User1",
        recipient="Amazon",
        purpose=PURPOSE,
        fields=dict(SCENARIO_FIELDS),
    )
    values.update(overrides)
    return TransactionRequest(**values)


# -- random structures ----------------------------------------------------------


def random_forest(rng: random.Random, max_classes: int = 50) -> dict[str, str | None]:
    """Single-parent class hierarchy: class i may hang under any earlier class."""
    n = rng.randrange(1, max_classes + 1)
    names = [f"C{i}" for i in range(n)]
    rng.shuffle(names)
    parents: dict[str, str | None] = {}
    for i, name in enumerate(names):
        parents[name] = names[rng.randrange(i)] if i and rng.random() < 0.8 else None
    return parents


def forest_tree(parents: dict[str, str | None]) -> PolicyTree:
    tree = ontology.empty_tree()
    pending = dict(parents)
    while pending:
        for name, parent in list(pending.items()):
            if parent is None or parent in tree.classes:
                tree = ontology.add_class(tree, name, parent)
                del pending[name]
    return tree


_RULE_PROPERTIES = [
    ("has_Consent_for_Use", "Personally_Identifiable_Information", "Consumer_Consent"),
    ("has_Consent_to_share_PII", "Personally_Identifiable_Information", "Consumer_Consent"),
    ("IsSharable", "Personally_Identifiable_Information", "Flag"),
    ("IsSensitiveData", "Personally_Identifiable_Information", "Flag"),
    ("has_Data_Protection", "Collection_Purpose", "Data_Protection"),
    ("has_Access_Control", "Data_Protection", "Access_Control"),
    ("IsDataController", "Personally_Identifiable_Information", "Flag"),
]
_OPTIONAL_CLASSES = [
    "PII_Name",
    "PII_ZIP",
    "PII_Email",
    "Collection_Purpose",
    "Data_Protection",
    "Access_Control",
    "Consumer_Consent",
]


def random_reasoner_case(rng: random.Random) -> tuple[PolicyTree, TransactionRequest]:
    """Small random policy (<=8 classes, <=7 properties, <=20 triples) and request (<=4 fields).

    The tree is assembled directly, so about one case in ten carries an
    ill-typed triple and is inconsistent.
    """
    # rule-relevant classes are usually present so that passing cases are common
    chosen = [c for c in _OPTIONAL_CLASSES if rng.random() < 0.95]
    if len(chosen) > 6:
        # stay within 8 classes by dropping one PII subclass
        chosen.remove(rng.choice([c for c in chosen if c.startswith("PII_")]))
    classes = [PolicyClass("Personally_Identifiable_Information"), PolicyClass("Flag")]
    for name in chosen:
        parent = None
        if name.startswith("PII_") and rng.random() < 0.85:
            parent = "Personally_Identifiable_Information"
        classes.append(PolicyClass(name, parent))
    class_names = {c.name for c in classes}

    properties = [
        PolicyProperty(*sig)
        for sig in _RULE_PROPERTIES
        if sig[1] in class_names and sig[2] in class_names and rng.random() < 0.95
    ]

    individuals = [Individual("Affirmed", "Flag")]
    for owner in ("U1", "U2"):
        for field in ("Name", "ZIP", "Email"):
            if f"PII_{field}" in class_names and rng.random() < 0.95:
                individuals.append(Individual(f"{owner}.{field}", f"PII_{field}"))
    for name, cls in [("C1", "Consumer_Consent"), ("P1", "Collection_Purpose"), ("P2", "Collection_Purpose"),
                      ("D1", "Data_Protection"), ("A1", "Access_Control")]:
        if cls in class_names:
            individuals.append(Individual(name, cls))
    if rng.random() < 0.2:
        # untyped PII-like individual under the root class
        individuals.append(Individual("U1.Phone", "Personally_Identifiable_Information"))

    by_class: dict[str, list[str]] = {}
    for ind in individuals:
        by_class.setdefault(ind.class_name, []).append(ind.name)

    def members(cls: str) -> list[str]:
        out = []
        for c in classes:
            cur, seen = c.name, set()
            while cur is not None and cur not in seen:
                if cur == cls:
                    out.extend(by_class.get(c.name, []))
                    break
                seen.add(cur)
                cur = next((k.parent for k in classes if k.name == cur), None)
        return out

    candidates = [
        RelationTriple(s, p.name, o)
        for p in properties
        for s in members(p.domain)
        for o in members(p.range)
    ]
    # each data point is either generous (all grants, rarely sensitive) or random
    generous = {i.name: rng.random() < 0.75 for i in individuals}

    def keep(t: RelationTriple) -> bool:
        if not generous.get(t.subject, True):
            return rng.random() < 0.5
        if t.property in ("IsSensitiveData", "IsDataController"):
            return rng.random() < 0.25
        return rng.random() < 0.97

    triples = [t for t in candidates if keep(t)]
    rng.shuffle(triples)
    triples.sort(key=lambda t: not t.subject.startswith("U1.") and t.subject not in ("P1", "D1"))
    triples = triples[:20]
    if properties and rng.random() < 0.1:
        names = [i.name for i in individuals]
        bad = RelationTriple(rng.choice(names), rng.choice(properties).name, rng.choice(names))
        triples = triples[:19] + [bad]

    tree = PolicyTree(classes, properties, individuals, triples)
    owner = "U1" if rng.random() < 0.9 else "U2"
    pool = ["Name", "ZIP", "Email", "Phone"]
    if rng.random() < 0.8:
        pool = [f for f in pool if f"{owner}.{f}" in {i.name for i in individuals}] or pool
    fields = rng.sample(pool, rng.randrange(1, min(4, len(pool)) + 1))
    request = TransactionRequest(
        tx_id="TX",
        requester="S1",
        owner=owner,
        recipient=rng.choice(["S1", "S2"]),
        purpose=rng.choice(["P1", "P1", "P1", "P1", "P2", "P9"]),
        fields={f: f"v{rng.randrange(100)}" for f in fields},
    )
    return tree, request


def valid_random_tree(rng: random.Random) -> PolicyTree:
    """Random tree built only through the validated mutation API."""
    tree = forest_tree(random_forest(rng, 12))
    names = sorted(tree.classes)
    for i in range(rng.randrange(0, 5)):
        tree = ontology.add_property(tree, f"p{i}", rng.choice(names), rng.choice(names))
    for i in range(rng.randrange(0, 10)):
        tree = ontology.add_individual(tree, f"i{i}", rng.choice(names))
    inds = sorted(tree.individuals)
    for _ in range(rng.randrange(0, 25)):
        if not tree.properties:
            break
        prop = tree.properties[rng.choice(sorted(tree.properties))]
        s, o = rng.choice(inds), rng.choice(inds)
        try:
            tree = ontology.assert_relation(tree, "anyone", s, prop.name, o)
        except Exception:
            pass
    return tree


def perturb(rng: random.Random, tree: PolicyTree) -> PolicyTree:
    """Apply 0-3 raw edits that may break any invariant."""
    classes = dict(tree.classes)
    properties = dict(tree.properties)
    individuals = dict(tree.individuals)
    triples = set(tree.triples)
    for _ in range(rng.randrange(0, 4)):
        kind = rng.randrange(6)
        class_names = sorted(classes)
        if kind == 0 and class_names:
            name = rng.choice(class_names)
            classes[name] = PolicyClass(name, rng.choice(class_names + ["Ghost"]))
        elif kind == 1 and class_names:
            del classes[rng.choice(class_names)]
        elif kind == 2 and properties:
            name = rng.choice(sorted(properties))
            p = properties[name]
            properties[name] = PolicyProperty(name, rng.choice(class_names + ["Ghost"]), p.range)
        elif kind == 3 and individuals and class_names:
            name = rng.choice(sorted(individuals))
            individuals[name] = Individual(name, rng.choice(class_names))
        elif kind == 4 and individuals:
            names = sorted(individuals) + ["nobody"]
            props = sorted(properties) + ["no_such_property"]
            triples.add(RelationTriple(rng.choice(names), rng.choice(props), rng.choice(names)))
        elif kind == 5 and individuals:
            del individuals[rng.choice(sorted(individuals))]
    return PolicyTree(classes, properties, individuals, triples)
