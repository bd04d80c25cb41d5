"""Seeded discrete-event reproduction of the small-network experiment.

Time is logical. At t=0 the policy is ingested and every service
provider onboards one end user with randomized consent relations. For
t = 1..duration each service provider submits its requests, and every
``query_period`` seconds each end user looks up one earlier transaction.

All randomness comes from one ``random.Random`` seeded with the config
seed and consumed in a fixed order, so the report and the persisted
chain are pure functions of the config.
"""

from __future__ import annotations

import json
import os
import random
from dataclasses import asdict, dataclass, field

from linkshare import ontology
from linkshare.errors import InvalidConfig, LinkShareError
from linkshare.ledger import BlockStatus, Chain, execute_transaction, init_chain, verify_chain
from linkshare.ontology import PolicyTree, RelationTriple, data_point
from linkshare.policies import base_policy_document
from linkshare.query import Outcome, query_transaction
from linkshare.reasoner import ReasonerError, TransactionRequest
from linkshare.userbase import Role, UserBase, onboard_end_user, register_participant

#: Changing the generator or the order of draws invalidates the golden chain.
RNG_IDENTITY = "cpython-random.Random/MT19937/seed-v2"

CATEGORIES = ("ConsumePolicy", "AddRemoveRelations", "Reasoner", "WriteBlockchain", "QueryBlockchain")

PII_FIELDS = ("Name", "Address", "DOB", "Email", "PhoneNumber", "ZIP", "CreditCard")
GOOD_PURPOSE = "Purpose_Service_Delivery"
UNLINKED_PURPOSE = "Purpose_Marketing"
CONSENT = "Consent_Granted"

# consent profile -> (consent for use, consent to share, sharable, sensitive)
PROFILES = {
    "open": (True, True, True, False),
    "sensitive_open": (True, True, True, True),
    "no_use": (False, True, True, False),
    "no_share": (True, False, True, False),
    "not_sharable": (True, True, False, False),
    "sensitive_no_share": (True, False, True, True),
}
_PROFILE_WEIGHTS = (("open", 50), ("sensitive_open", 15), ("no_use", 9), ("no_share", 9), ("not_sharable", 9), ("sensitive_no_share", 8))

_VIOLATIONS = (
    ReasonerError.MISSING_FIELD,
    ReasonerError.NO_CONSENT_FOR_USE,
    ReasonerError.NO_CONSENT_TO_SHARE,
    ReasonerError.NOT_SHARABLE,
    ReasonerError.SENSITIVE_WITHOUT_EXPLICIT_CONSENT,
    ReasonerError.NO_PURPOSE_CHAIN,
)

_FIRST_NAMES = ("Alice", "Bob", "Carol", "Dmitri", "Eun-ji", "Farah", "Gustavo", "Hana", "Ivan", "Jamal")
_STREETS = ("Hilltop Cir", "Maple Ave", "Oak St", "Elm Rd", "Pine Ln")


@dataclass(frozen=True)
class ExperimentConfig:
    node_count: int = 10
    sp_eu_ratio: tuple[int, int] = (1, 1)
    duration: int = 100
    query_period: int = 10
    writes_per_sp_per_second: int = 1
    seed: int = 42
    violation_share: float = 0.3
    replay_share: float = 0.05

    def validate(self) -> None:
        sp, eu = self.sp_eu_ratio
        if sp <= 0 or eu <= 0:
            raise InvalidConfig("ratio terms must be positive")
        if self.node_count <= 0 or self.node_count % (sp + eu):
            raise InvalidConfig(f"{self.node_count} nodes cannot be split {sp}:{eu}")
        if self.duration < 0:
            raise InvalidConfig("duration must be non-negative")
        if self.query_period <= 0 or self.writes_per_sp_per_second <= 0:
            raise InvalidConfig("query_period and writes_per_sp_per_second must be positive")
        if not (0 <= self.seed < 2**64):
            raise InvalidConfig("seed must be a 64-bit unsigned integer")
        for name in ("violation_share", "replay_share"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise InvalidConfig(f"{name} must lie in [0, 1]")

    @property
    def service_providers(self) -> int:
        sp, eu = self.sp_eu_ratio
        return self.node_count * sp // (sp + eu)

    @property
    def end_users(self) -> int:
        return self.node_count - self.service_providers


@dataclass
class Tally:
    passed: int = 0
    failed: int = 0

    def record(self, ok: bool) -> None:
        if ok:
            self.passed += 1
        else:
            self.failed += 1

    @property
    def attempts(self) -> int:
        return self.passed + self.failed


@dataclass
class ExperimentReport:
    config: ExperimentConfig
    categories: dict[str, Tally] = field(default_factory=lambda: {c: Tally() for c in CATEGORIES})
    chain_height: int = 0
    integrity_ok: bool = False

    def to_dict(self) -> dict:
        config = asdict(self.config)
        config["sp_eu_ratio"] = list(self.config.sp_eu_ratio)
        return {
            "categories": {c: {"fail": t.failed, "pass": t.passed} for c, t in self.categories.items()},
            "chain_height": self.chain_height,
            "config": config,
            "integrity_ok": self.integrity_ok,
            "rng": RNG_IDENTITY,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def to_table(self) -> str:
        rows = [("category", "pass", "fail", "attempts")]
        rows += [(c, str(t.passed), str(t.failed), str(t.attempts)) for c, t in self.categories.items()]
        widths = [max(len(r[i]) for r in rows) for i in range(4)]
        lines = [
            "  ".join(cell.ljust(w) if i == 0 else cell.rjust(w) for i, (cell, w) in enumerate(zip(row, widths)))
            for row in rows
        ]
        lines.insert(1, "  ".join("-" * w for w in widths))
        lines.append(f"chain height: {self.chain_height}   integrity: {'ok' if self.integrity_ok else 'BROKEN'}")
        return "\n".join(lines)


def _hostile_documents(doc: bytes) -> list[bytes]:
    close = b"</Ontology>"
    return [
        doc[: len(doc) // 2],
        doc.replace(close, b"    <EquivalentClasses><Class IRI=\"#PII_Name\"/><Class IRI=\"#PII_DOB\"/></EquivalentClasses>\n" + close),
        doc.replace(
            close,
            b'    <SubClassOf><Class IRI="#Personally_Identifiable_Information"/><Class IRI="#PII_Name"/></SubClassOf>\n'
            + close,
        ),
    ]


def _field_value(rng: random.Random, name: str) -> str:
    if name == "Name":
        return rng.choice(_FIRST_NAMES)
    if name == "Address":
        return f"{rng.randrange(1, 9999)} {rng.choice(_STREETS)}"
    if name == "DOB":
        return f"{rng.randrange(1940, 2006)}-{rng.randrange(1, 13):02d}-{rng.randrange(1, 29):02d}"
    if name == "Email":
        return f"user{rng.randrange(10**6)}@example.org"
    if name == "PhoneNumber":
        return f"+1-410-555-{rng.randrange(10**4):04d}"
    if name == "ZIP":
        return f"{rng.randrange(10**5):05d}"
    return "".join(str(rng.randrange(10)) for _ in range(16))


def _weighted(rng: random.Random, weighted: tuple[tuple[str, int], ...]) -> str:
    total = sum(w for _, w in weighted)
    pick = rng.randrange(total)
    for name, w in weighted:
        if pick < w:
            return name
        pick -= w
    raise AssertionError("unreachable")


class _Run:
    def __init__(self, config: ExperimentConfig, chain_path: str | os.PathLike | None):
        self.config = config
        self.rng = random.Random(config.seed)
        self.report = ExperimentReport(config)
        self.tree: PolicyTree = ontology.empty_tree()
        self.userbase = UserBase()
        self.chain: Chain = init_chain(chain_path)
        self.sps: list[str] = []
        self.eus: list[str] = []
        self.user_of: dict[str, str] = {}
        self.profiles: dict[str, dict[str, str]] = {}
        self.written: dict[str, dict[str, str]] = {}
        self.tx_ids: list[str] = []

    def tally(self, category: str, ok: bool) -> None:
        self.report.categories[category].record(ok)

    # -- t = 0 --------------------------------------------------------------

    def ingest(self) -> None:
        doc = base_policy_document()
        for candidate in [doc] + _hostile_documents(doc):
            try:
                tree = ontology.parse_policy_document(candidate)
            except LinkShareError:
                self.tally("ConsumePolicy", False)
                continue
            self.tally("ConsumePolicy", True)
            if candidate is doc:
                self.tree = tree

    def relation(self, actor: str, subject: str, prop: str, obj: str, retract: bool = False) -> bool:
        try:
            if retract:
                self.tree = ontology.retract_relation(self.tree, actor, RelationTriple(subject, prop, obj))
            else:
                self.tree = ontology.assert_relation(self.tree, actor, subject, prop, obj)
        except LinkShareError:
            self.tally("AddRemoveRelations", False)
            return False
        self.tally("AddRemoveRelations", True)
        return True

    def register(self) -> None:
        rng = self.rng
        for i in range(self.config.service_providers):
            sp = f"SP{i}"
            self.userbase = register_participant(self.userbase, sp, Role.SERVICE_PROVIDER)
            self.tree = ontology.add_individual(self.tree, sp, ontology.SERVICE_PROVIDER_CLASS)
            self.sps.append(sp)
        for j in range(self.config.end_users):
            eu = f"EU{rng.randrange(16**6):06x}"
            while eu in self.userbase:
                eu = f"EU{rng.randrange(16**6):06x}"
            registrar = self.sps[j % len(self.sps)]
            fields = sorted(rng.sample(PII_FIELDS, rng.randrange(3, len(PII_FIELDS) + 1)))
            self.userbase = register_participant(self.userbase, eu, Role.END_USER)
            self.tree = onboard_end_user(self.userbase, self.tree, registrar, eu, fields)
            self.eus.append(eu)
            self.user_of.setdefault(registrar, eu)
            self.consent(eu, registrar, fields)

    def consent(self, eu: str, registrar: str, fields: list[str]) -> None:
        rng = self.rng
        profiles = {name: _weighted(rng, _PROFILE_WEIGHTS) for name in fields}
        if not any(p in ("open", "sensitive_open") for p in profiles.values()):
            profiles[fields[0]] = "open"
        self.profiles[eu] = profiles
        props = (ontology.HAS_CONSENT_FOR_USE, ontology.HAS_CONSENT_TO_SHARE, ontology.IS_SHARABLE, ontology.IS_SENSITIVE)
        for name in fields:
            point = data_point(eu, name)
            for prop, wanted in zip(props, PROFILES[profiles[name]]):
                if wanted:
                    obj = CONSENT if prop.startswith("has_") else ontology.AFFIRMED
                    self.relation(eu, point, prop, obj)
            if rng.random() < 0.5:
                self.relation(eu, point, ontology.IS_DATA_CONTROLLER, registrar)
            if profiles[name] == "open" and rng.random() < 0.2:
                # viable add followed by its removal
                self.relation(eu, point, ontology.IS_SENSITIVE, ontology.AFFIRMED)
                self.relation(eu, point, ontology.IS_SENSITIVE, ontology.AFFIRMED, retract=True)
        # conflicting edits, all expected to be rejected
        for _ in range(rng.randrange(1, 4)):
            point = data_point(eu, rng.choice(fields))
            kind = rng.randrange(3)
            if kind == 0:
                self.relation(registrar, point, ontology.IS_SHARABLE, ontology.AFFIRMED)
            elif kind == 1:
                self.relation(eu, point, ontology.IS_DATA_OWNER, eu)
            else:
                self.relation(eu, point, ontology.HAS_ACCESS_CONTROL, ontology.AFFIRMED)

    # -- t >= 1 -------------------------------------------------------------

    def make_request(self, sp: str, tx_id: str) -> TransactionRequest:
        rng = self.rng
        owner = self.user_of.get(sp) or self.eus[self.sps.index(sp) % len(self.eus)]
        others = [s for s in self.sps if s != sp]
        recipient = sp if not others or rng.random() < 0.5 else rng.choice(others)
        third_party = recipient != sp
        profiles = self.profiles[owner]
        eligible = sorted(
            f for f, p in profiles.items() if p in ("open", "sensitive_open") or (p == "no_share" and not third_party)
        )
        chosen = rng.sample(eligible, rng.randrange(1, min(4, len(eligible)) + 1))
        purpose = GOOD_PURPOSE

        if rng.random() < self.config.violation_share:
            rule = rng.choice(_VIOLATIONS)
            wanted = {
                ReasonerError.NO_CONSENT_FOR_USE: ("no_use",),
                ReasonerError.NO_CONSENT_TO_SHARE: ("no_share", "sensitive_no_share") if third_party else (),
                ReasonerError.NOT_SHARABLE: ("not_sharable",),
                ReasonerError.SENSITIVE_WITHOUT_EXPLICIT_CONSENT: () if third_party else ("sensitive_no_share",),
            }.get(rule, ())
            candidates = sorted(f for f, p in profiles.items() if p in wanted)
            if rule is ReasonerError.NO_PURPOSE_CHAIN:
                purpose = UNLINKED_PURPOSE
            elif candidates:
                chosen = chosen[:2] + [rng.choice(candidates)]
            else:
                missing = [f for f in PII_FIELDS if f not in profiles] or ["SSN"]
                chosen = chosen[:2] + [rng.choice(missing)]

        fields = {name: _field_value(rng, name) for name in sorted(set(chosen))}
        return TransactionRequest(tx_id, sp, owner, recipient, purpose, fields)

    def write(self, t: int) -> None:
        rng = self.rng
        for sp in self.sps:
            for k in range(self.config.writes_per_sp_per_second):
                tx_id = f"T{t:04d}-{sp}-{k}"
                if self.tx_ids and rng.random() < self.config.replay_share:
                    tx_id = rng.choice(self.tx_ids)
                request = self.make_request(sp, tx_id)
                try:
                    verdict, block = execute_transaction(self.tree, self.chain, request, t)
                except LinkShareError:
                    self.tally("WriteBlockchain", False)
                    continue
                self.tally("WriteBlockchain", True)
                self.tally("Reasoner", verdict.passed)
                self.tx_ids.append(tx_id)
                if block.status is BlockStatus.PASS:
                    self.written[tx_id] = dict(request.fields)

    def query(self) -> None:
        for eu in self.eus:
            tx_id = self.rng.choice(self.tx_ids) if self.tx_ids else "T-unwritten"
            result = query_transaction(self.chain, self.tree, self.userbase, eu, tx_id)
            if result.outcome is Outcome.FULL and result.fields is not None:
                if dict(result.fields) != self.written.get(tx_id):
                    raise AssertionError(f"query for {tx_id} returned values that were never written")
            self.tally("QueryBlockchain", result.outcome in (Outcome.FULL, Outcome.METADATA_ONLY))

    def run(self) -> ExperimentReport:
        self.ingest()
        self.register()
        for t in range(1, self.config.duration + 1):
            self.write(t)
            if t % self.config.query_period == 0:
                self.query()
        self.report.chain_height = len(self.chain)
        self.report.integrity_ok = verify_chain(self.chain).ok
        return self.report


def run_experiment(config: ExperimentConfig, chain_path: str | os.PathLike | None = None) -> ExperimentReport:
    """Run one seeded experiment; ``chain_path`` persists the resulting chain."""
    config.validate()
    return _Run(config, chain_path).run()


def run_experiment_with_chain(
    config: ExperimentConfig, chain_path: str | os.PathLike | None = None
) -> tuple[ExperimentReport, Chain]:
    config.validate()
    run = _Run(config, chain_path)
    return run.run(), run.chain
