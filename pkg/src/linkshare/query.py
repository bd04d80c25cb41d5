"""Transaction lookup gated by the policy tree."""

from __future__ import annotations

import enum
import json
from collections.abc import Mapping
from dataclasses import dataclass

from linkshare.ledger import BlockStatus, Chain, MainBlock
from linkshare.ontology import IS_DATA_CONTROLLER, PolicyTree, data_point
from linkshare.userbase import Role, UserBase


class Outcome(str, enum.Enum):
    FULL = "FULL"
    METADATA_ONLY = "METADATA_ONLY"
    DENIED = "DENIED"
    NOT_FOUND = "NOT_FOUND"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class QueryResult:
    outcome: Outcome
    tx_id: str
    status: str | None = None
    fields: Mapping[str, str] | None = None
    field_digests: tuple[str, ...] | None = None
    branch_hash: str | None = None
    error_code: str | None = None

    def to_dict(self) -> dict:
        out: dict = {"outcome": self.outcome.value, "tx_id": self.tx_id}
        if self.status is not None:
            out["status"] = self.status
        if self.fields is not None:
            out["fields"] = dict(self.fields)
        if self.field_digests is not None:
            out["field_digests"] = list(self.field_digests)
        if self.branch_hash is not None:
            out["branch_hash"] = self.branch_hash
        if self.error_code is not None:
            out["error_code"] = self.error_code
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))


def _controls_all(tree: PolicyTree, requester: str, owner: str, block: MainBlock) -> bool:
    if block.branch is None:
        return False
    return all(
        tree.has_triple(data_point(owner, name), IS_DATA_CONTROLLER, requester)
        for name in block.branch.entries
    )


def query_transaction(
    chain: Chain, tree: PolicyTree, userbase: UserBase, requester: str, tx_id: str
) -> QueryResult:
    """Fetch ``tx_id`` on behalf of ``requester``.

    Parties to the transaction and controllers of every shared data point
    see everything; trusted third parties get digests only; anyone else
    is denied.
    """
    role = userbase.role_of(requester)
    block = chain.block(tx_id)
    if block is None:
        return QueryResult(Outcome.NOT_FOUND, tx_id)

    parties = chain.parties.get(tx_id)
    authorized = parties is not None and (
        parties.involves(requester) or _controls_all(tree, requester, parties.owner, block)
    )
    status = block.status.value
    if authorized:
        if block.status is BlockStatus.PASS:
            return QueryResult(Outcome.FULL, tx_id, status, fields=dict(block.branch.entries))
        return QueryResult(Outcome.FULL, tx_id, status, error_code=block.error_code)
    if role is Role.TRUSTED_THIRD_PARTY:
        return QueryResult(
            Outcome.METADATA_ONLY,
            tx_id,
            status,
            field_digests=block.field_digests,
            branch_hash=block.branch_hash,
        )
    return QueryResult(Outcome.DENIED, tx_id)
