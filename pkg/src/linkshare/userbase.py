"""Participant registry and majority-vote policy amendments."""

from __future__ import annotations

import dataclasses
import enum
import hashlib
import json
import os
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field
from pathlib import Path
from types import MappingProxyType

from linkshare import ontology
from linkshare.errors import (
    AlreadyVoted,
    DuplicateParticipant,
    InvalidRequest,
    LinkShareError,
    OwnerGatedChange,
    ProposalClosed,
    UnknownParticipant,
)
from linkshare.ontology import PolicyTree, RelationTriple, check_identifier


class Role(str, enum.Enum):
    SERVICE_PROVIDER = "ServiceProvider"
    END_USER = "EndUser"
    TRUSTED_THIRD_PARTY = "TrustedThirdParty"

    def __str__(self) -> str:
        return self.value


#: ontology class backing each role's individuals
ROLE_CLASSES = {
    Role.SERVICE_PROVIDER: ontology.SERVICE_PROVIDER_CLASS,
    Role.END_USER: ontology.END_USER_CLASS,
    Role.TRUSTED_THIRD_PARTY: ontology.TRUSTED_THIRD_PARTY_CLASS,
}


@dataclass(frozen=True)
class Participant:
    id: str
    role: Role

    def to_dict(self) -> dict:
        return {"id": self.id, "role": self.role.value}


@dataclass(frozen=True)
class UserBase:
    participants: Mapping[str, Participant] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "participants", MappingProxyType(dict(self.participants)))

    def __len__(self) -> int:
        return len(self.participants)

    def __contains__(self, participant_id: object) -> bool:
        return participant_id in self.participants

    def role_of(self, participant_id: str) -> Role:
        try:
            return self.participants[participant_id].role
        except KeyError:
            raise UnknownParticipant(f"participant {participant_id!r} is not registered") from None

    def require(self, *participant_ids: str) -> None:
        for pid in participant_ids:
            self.role_of(pid)


def register_participant(userbase: UserBase, participant_id: str, role: Role | str) -> UserBase:
    check_identifier(participant_id, "participant id")
    role = Role(role)
    if participant_id in userbase:
        raise DuplicateParticipant(f"participant {participant_id!r} already registered")
    participants = dict(userbase.participants)
    participants[participant_id] = Participant(participant_id, role)
    return UserBase(participants)


def onboard_end_user(
    userbase: UserBase, tree: PolicyTree, registrar: str, user_id: str, fields: Iterable[str]
) -> PolicyTree:
    """Create ``user_id``'s data points and bootstrap their ownership.

    ``registrar`` must be a registered service provider and ``user_id`` a
    registered end user. Each field ``F`` becomes an individual
    ``<user_id>.F`` of class ``PII_F``.
    """
    if userbase.role_of(registrar) is not Role.SERVICE_PROVIDER:
        raise InvalidRequest(f"{registrar!r} is not a service provider")
    if userbase.role_of(user_id) is not Role.END_USER:
        raise InvalidRequest(f"{user_id!r} is not an end user")
    if user_id not in tree.individuals:
        tree = ontology.add_individual(tree, user_id, ontology.END_USER_CLASS)
    for name in fields:
        point = ontology.data_point(user_id, name)
        tree = ontology.add_individual(tree, point, f"PII_{name}")
        tree = ontology.assert_relation(tree, registrar, point, ontology.IS_DATA_OWNER, user_id, bootstrap=True)
    return tree


# -- registry persistence -------------------------------------------------------


def append_participant(path: str | os.PathLike, participant: Participant) -> None:
    line = json.dumps(participant.to_dict(), sort_keys=True, separators=(",", ":"))
    with open(path, "a", encoding="utf-8") as fh:
        fh.write(line + "\n")


def load_registry(path: str | os.PathLike) -> UserBase:
    userbase = UserBase()
    p = Path(path)
    if not p.exists():
        return userbase
    for line in p.read_text(encoding="utf-8").splitlines():
        if line.strip():
            obj = json.loads(line)
            userbase = register_participant(userbase, obj["id"], obj["role"])
    return userbase


# -- amendments -----------------------------------------------------------------

_CHANGE_PARAMS = {
    "add_class": ("name", "parent"),
    "add_property": ("name", "domain", "range"),
    "add_individual": ("name", "class_name"),
    "assert_relation": ("subject", "property", "object"),
    "retract_relation": ("subject", "property", "object"),
}


@dataclass(frozen=True)
class PolicyChange:
    """A single structural mutation awaiting consensus."""

    kind: str
    params: Mapping[str, str | None]

    def __post_init__(self) -> None:
        expected = _CHANGE_PARAMS.get(self.kind)
        if expected is None:
            raise InvalidRequest(f"unknown change kind {self.kind!r}")
        params = dict(self.params)
        if self.kind == "add_class":
            params.setdefault("parent", None)
        if sorted(params) != sorted(expected):
            raise InvalidRequest(f"{self.kind} takes {', '.join(expected)}")
        object.__setattr__(self, "params", MappingProxyType(params))

    @property
    def owner_gated(self) -> bool:
        return self.kind in ("assert_relation", "retract_relation") and (
            self.params["property"] in ontology.OWNER_GATED_PROPERTIES
        )

    def apply(self, tree: PolicyTree, actor: str) -> PolicyTree:
        p = self.params
        if self.kind == "add_class":
            return ontology.add_class(tree, p["name"], p["parent"])
        if self.kind == "add_property":
            return ontology.add_property(tree, p["name"], p["domain"], p["range"])
        if self.kind == "add_individual":
            return ontology.add_individual(tree, p["name"], p["class_name"])
        triple = RelationTriple(p["subject"], p["property"], p["object"])
        if self.kind == "assert_relation":
            return ontology.assert_relation(tree, actor, triple.subject, triple.property, triple.object)
        return ontology.retract_relation(tree, actor, triple)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "params": dict(self.params)}

    @classmethod
    def from_dict(cls, data: Mapping) -> PolicyChange:
        try:
            return cls(data["kind"], data["params"])
        except (KeyError, TypeError):
            raise InvalidRequest("change must be an object with 'kind' and 'params'") from None


class ProposalState(str, enum.Enum):
    OPEN = "Open"
    APPLIED = "Applied"
    REJECTED = "Rejected"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class PolicyProposal:
    proposal_id: str
    change: PolicyChange
    proposer: str
    votes: Mapping[str, bool] = field(default_factory=dict)
    state: ProposalState = ProposalState.OPEN
    reason: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "votes", MappingProxyType(dict(self.votes)))

    @property
    def yes(self) -> int:
        return sum(1 for v in self.votes.values() if v)

    @property
    def no(self) -> int:
        return sum(1 for v in self.votes.values() if not v)

    def to_dict(self) -> dict:
        return {
            "change": self.change.to_dict(),
            "proposal_id": self.proposal_id,
            "proposer": self.proposer,
            "reason": self.reason,
            "state": self.state.value,
            "votes": {k: ("yes" if v else "no") for k, v in sorted(self.votes.items())},
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> PolicyProposal:
        return cls(
            proposal_id=data["proposal_id"],
            change=PolicyChange.from_dict(data["change"]),
            proposer=data["proposer"],
            votes={k: v == "yes" for k, v in data["votes"].items()},
            state=ProposalState(data["state"]),
            reason=data.get("reason", ""),
        )


def propose_policy_change(
    userbase: UserBase, proposer: str, change: PolicyChange, proposal_id: str | None = None
) -> PolicyProposal:
    userbase.require(proposer)
    if change.owner_gated:
        raise OwnerGatedChange(
            f"{change.params['property']} can only be set or reset by the data point's owner"
        )
    if proposal_id is None:
        blob = json.dumps([proposer, change.to_dict()], sort_keys=True).encode("utf-8")
        proposal_id = "P-" + hashlib.sha256(blob).hexdigest()[:12]
    check_identifier(proposal_id, "proposal id")
    return PolicyProposal(proposal_id, change, proposer)


def cast_vote(userbase: UserBase, proposal: PolicyProposal, voter: str, decision: bool) -> PolicyProposal:
    if proposal.state is not ProposalState.OPEN:
        raise ProposalClosed(f"proposal {proposal.proposal_id} is {proposal.state.value}")
    userbase.require(voter)
    if voter in proposal.votes:
        raise AlreadyVoted(f"{voter!r} already voted on {proposal.proposal_id}")
    return dataclasses.replace(proposal, votes={**proposal.votes, voter: bool(decision)})


def tally_and_apply(
    userbase: UserBase, proposal: PolicyProposal, tree: PolicyTree
) -> tuple[PolicyProposal, PolicyTree]:
    """Settle ``proposal`` against the current registry size.

    Applied when yes-votes are a strict majority of all registered
    participants, rejected once no-votes reach half; otherwise it stays
    open. A change that no longer validates is rejected with its error
    code as the reason.
    """
    if proposal.state is not ProposalState.OPEN:
        raise ProposalClosed(f"proposal {proposal.proposal_id} is {proposal.state.value}")
    n = len(userbase)
    counted = {v: d for v, d in proposal.votes.items() if v in userbase}
    yes = sum(counted.values())
    no = len(counted) - yes
    if yes > n // 2:
        try:
            new_tree = proposal.change.apply(tree, proposal.proposer)
        except LinkShareError as exc:
            return dataclasses.replace(proposal, state=ProposalState.REJECTED, reason=exc.code), tree
        return dataclasses.replace(proposal, state=ProposalState.APPLIED), new_tree
    if 2 * no >= n:
        return dataclasses.replace(proposal, state=ProposalState.REJECTED, reason="vote"), tree
    return proposal, tree
