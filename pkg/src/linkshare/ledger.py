"""Append-only, hash-linked transaction ledger.

Every transaction verdict becomes one main block. A passing transaction
also carries a branch block with the shared field values; the main block
only stores SHA-256 digests of the field names plus the branch hash.

The persisted form is JSON lines, one main block per line in height
order, with sorted keys and no insignificant whitespace. Those bytes are
the source of truth for :func:`verify_chain`.

Parties of each transaction (owner, requester, recipient) are kept in an
append-only sidecar next to the chain file. They drive the per-data-point
index and query authorization but are not part of the hashed records.
"""

from __future__ import annotations

import dataclasses
import enum
import hashlib
import json
import os
from collections.abc import Mapping
from dataclasses import dataclass, field
from pathlib import Path
from types import MappingProxyType

from linkshare.errors import ChainCorrupted, DuplicateTransaction, InvalidRequest, NonMonotoneTimestamp
from linkshare.ontology import PolicyTree, is_identifier
from linkshare.reasoner import (
    UNIT_SEPARATOR,
    ReasonerError,
    TransactionRequest,
    Verdict,
    verify_transaction,
)

ZERO_HASH = "0" * 64
GENESIS_TX = "GENESIS"

_MAIN_KEYS = (
    "block_hash",
    "branch_hash",
    "error_code",
    "field_digests",
    "height",
    "prev_hash",
    "status",
    "timestamp",
    "tx_id",
)
_PASS_KEYS = tuple(sorted(_MAIN_KEYS + ("branch",)))


class BlockStatus(str, enum.Enum):
    GENESIS = "GENESIS"
    PASS = "PASS"
    FAIL = "FAIL"

    def __str__(self) -> str:
        return self.value


def sha256_hex(data: str | bytes) -> str:
    if isinstance(data, str):
        data = data.encode("utf-8")
    return hashlib.sha256(data).hexdigest()


def canonical_json(obj: object) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def _is_hex64(value: object) -> bool:
    return (
        isinstance(value, str)
        and len(value) == 64
        and all(c in "0123456789abcdef" for c in value)
    )


@dataclass(frozen=True)
class BranchBlock:
    tx_id: str
    entries: Mapping[str, str]

    def __post_init__(self) -> None:
        object.__setattr__(self, "entries", MappingProxyType(dict(sorted(self.entries.items()))))

    def canonical(self) -> str:
        parts = [self.tx_id] + [f"{name}={value}" for name, value in self.entries.items()]
        return UNIT_SEPARATOR.join(parts)

    def digest(self) -> str:
        return sha256_hex(self.canonical())


@dataclass(frozen=True)
class MainBlock:
    height: int
    prev_hash: str
    tx_id: str
    status: BlockStatus
    field_digests: tuple[str, ...]
    branch_hash: str
    error_code: str
    timestamp: int
    block_hash: str = ""
    branch: BranchBlock | None = field(default=None, compare=False)

    def canonical(self) -> str:
        return "|".join(
            [
                str(self.height),
                self.prev_hash,
                self.tx_id,
                self.status.value,
                ",".join(self.field_digests),
                self.branch_hash,
                self.error_code,
                str(self.timestamp),
            ]
        )

    def compute_hash(self) -> str:
        return sha256_hex(self.canonical())

    def to_dict(self) -> dict:
        out = {
            "block_hash": self.block_hash,
            "branch_hash": self.branch_hash,
            "error_code": self.error_code,
            "field_digests": list(self.field_digests),
            "height": self.height,
            "prev_hash": self.prev_hash,
            "status": self.status.value,
            "timestamp": self.timestamp,
            "tx_id": self.tx_id,
        }
        if self.branch is not None:
            out["branch"] = dict(self.branch.entries)
        return out

    def record(self) -> bytes:
        """Persisted line for this block, without the trailing newline."""
        return canonical_json(self.to_dict()).encode("utf-8")


def _seal(block: MainBlock) -> MainBlock:
    return dataclasses.replace(block, block_hash=block.compute_hash())


def genesis_block() -> MainBlock:
    return _seal(MainBlock(0, ZERO_HASH, GENESIS_TX, BlockStatus.GENESIS, (), ZERO_HASH, "", 0))


@dataclass(frozen=True)
class TxParties:
    tx_id: str
    owner: str
    requester: str
    recipient: str

    def involves(self, participant: str) -> bool:
        return participant in (self.owner, self.requester, self.recipient)

    def to_dict(self) -> dict:
        return {"owner": self.owner, "recipient": self.recipient, "requester": self.requester, "tx_id": self.tx_id}


@dataclass(frozen=True)
class IntegrityReport:
    ok: bool
    first_bad_height: int | None = None
    reason: str = ""

    def to_dict(self) -> dict:
        return {"first_bad_height": self.first_bad_height, "ok": self.ok, "reason": self.reason}


def parties_path(chain_path: str | os.PathLike) -> Path:
    p = Path(chain_path)
    return p.with_name(p.name + ".parties")


class Chain:
    """In-memory view of the ledger, optionally mirrored to a file.

    Writers must be serialized by the caller. With a ``path`` every append
    is written through to disk before the call returns.
    """

    def __init__(self, path: str | os.PathLike | None = None):
        self.path = None if path is None else Path(path)
        self.blocks: list[MainBlock] = []
        self.records: list[bytes] = []
        self.tx_index: dict[str, int] = {}
        self.datapoint_index: dict[tuple[str, str], list[str]] = {}
        self.parties: dict[str, TxParties] = {}

    def __len__(self) -> int:
        return len(self.blocks)

    @property
    def tip(self) -> MainBlock:
        return self.blocks[-1]

    def block(self, tx_id: str) -> MainBlock | None:
        height = self.tx_index.get(tx_id)
        return None if height is None else self.blocks[height]

    def to_bytes(self) -> bytes:
        return b"".join(r + b"\n" for r in self.records)

    def _append(self, block: MainBlock, parties: TxParties | None) -> None:
        record = block.record()
        if self.path is not None:
            with open(self.path, "ab") as fh:
                fh.write(record + b"\n")
            if parties is not None:
                with open(parties_path(self.path), "ab") as fh:
                    fh.write(canonical_json(parties.to_dict()).encode("utf-8") + b"\n")
        self._index(block, record, parties)

    def _index(self, block: MainBlock, record: bytes, parties: TxParties | None) -> None:
        self.blocks.append(block)
        self.records.append(record)
        self.tx_index[block.tx_id] = block.height
        if parties is not None:
            self.parties[block.tx_id] = parties
            if block.branch is not None:
                for name in block.branch.entries:
                    self.datapoint_index.setdefault((parties.owner, name), []).append(block.tx_id)

    def _check_append(self, tx_id: str, now: int) -> None:
        if not is_identifier(tx_id):
            raise InvalidRequest(f"invalid transaction id {tx_id!r}")
        if tx_id in self.tx_index:
            raise DuplicateTransaction(f"transaction {tx_id!r} already recorded")
        if not isinstance(now, int) or now < self.tip.timestamp:
            raise NonMonotoneTimestamp(f"timestamp {now!r} precedes chain tip {self.tip.timestamp}")

    @classmethod
    def load(cls, path: str | os.PathLike) -> Chain:
        """Open an existing chain file; raises :class:`ChainCorrupted` if it does not verify."""
        path = Path(path)
        data = path.read_bytes()
        report = verify_chain_bytes(data)
        if not report.ok:
            raise ChainCorrupted(report.reason, report.first_bad_height)
        chain = cls(path)
        side = parties_path(path)
        parties = {}
        if side.exists():
            for line in side.read_bytes().splitlines():
                p = TxParties(**json.loads(line))
                parties[p.tx_id] = p
        for raw in data.split(b"\n")[:-1]:
            block = _block_from_record(json.loads(raw))
            chain._index(block, raw, parties.get(block.tx_id))
        return chain


def init_chain(path: str | os.PathLike | None = None) -> Chain:
    """New chain holding only the genesis block; with ``path``, a fresh file is created."""
    chain = Chain(path)
    if chain.path is not None:
        chain.path.write_bytes(b"")
        parties_path(chain.path).write_bytes(b"")
    chain._append(genesis_block(), None)
    return chain


def blockchain_branch_write(chain: Chain, request: TransactionRequest, owner: str, now: int) -> MainBlock:
    """Append a PASS block and its branch for ``request``."""
    chain._check_append(request.tx_id, now)
    branch = BranchBlock(request.tx_id, request.fields)
    block = _seal(
        MainBlock(
            height=len(chain),
            prev_hash=chain.tip.block_hash,
            tx_id=request.tx_id,
            status=BlockStatus.PASS,
            field_digests=tuple(sorted(sha256_hex(name) for name in request.fields)),
            branch_hash=branch.digest(),
            error_code="",
            timestamp=now,
            branch=branch,
        )
    )
    parties = TxParties(request.tx_id, owner, request.requester, request.recipient)
    chain._append(block, parties)
    return block


def blockchain_write(
    chain: Chain,
    tx_id: str,
    error: ReasonerError,
    now: int,
    parties: TxParties | None = None,
) -> MainBlock:
    """Append a FAIL block recording ``error``; the data-point index is untouched."""
    chain._check_append(tx_id, now)
    block = _seal(
        MainBlock(
            height=len(chain),
            prev_hash=chain.tip.block_hash,
            tx_id=tx_id,
            status=BlockStatus.FAIL,
            field_digests=(),
            branch_hash=ZERO_HASH,
            error_code=ReasonerError(error).value,
            timestamp=now,
        )
    )
    chain._append(block, parties)
    return block


def datapoint_chain(chain: Chain, owner: str, field_name: str) -> list[str]:
    return list(chain.datapoint_index.get((owner, field_name), ()))


def execute_transaction(
    tree: PolicyTree, chain: Chain, request: TransactionRequest, now: int
) -> tuple[Verdict, MainBlock]:
    """Verify ``request`` and record the outcome as exactly one block.

    Duplicate ids and stale timestamps are rejected before the reasoner
    runs, so a rejected call appends nothing.
    """
    chain._check_append(request.tx_id, now)
    verdict = verify_transaction(tree, request)
    if verdict.passed:
        block = blockchain_branch_write(chain, request, request.owner, now)
    else:
        parties = TxParties(request.tx_id, request.owner, request.requester, request.recipient)
        block = blockchain_write(chain, request.tx_id, verdict.error, now, parties)
    return verdict, block


# -- audit --------------------------------------------------------------------


class _Bad(Exception):
    pass


def _block_from_record(obj: dict) -> MainBlock:
    branch = obj.get("branch")
    return MainBlock(
        height=obj["height"],
        prev_hash=obj["prev_hash"],
        tx_id=obj["tx_id"],
        status=BlockStatus(obj["status"]),
        field_digests=tuple(obj["field_digests"]),
        branch_hash=obj["branch_hash"],
        error_code=obj["error_code"],
        timestamp=obj["timestamp"],
        block_hash=obj["block_hash"],
        branch=None if branch is None else BranchBlock(obj["tx_id"], branch),
    )


def _check_record(raw: bytes, height: int, prev: MainBlock | None, seen: set[str]) -> MainBlock:
    try:
        obj = json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, ValueError):
        raise _Bad("record is not valid UTF-8 JSON") from None
    if not isinstance(obj, dict):
        raise _Bad("record is not an object")
    if canonical_json(obj).encode("utf-8") != raw:
        raise _Bad("record is not in canonical form")
    status = obj.get("status")
    expected = _PASS_KEYS if status == "PASS" else tuple(sorted(_MAIN_KEYS))
    if tuple(obj) != expected:
        raise _Bad("record keys do not match its status")
    if obj["height"] != height or type(obj["height"]) is not int:
        raise _Bad(f"height {obj['height']!r} at line {height}")
    ts = obj["timestamp"]
    if type(ts) is not int or ts < 0:
        raise _Bad("bad timestamp")
    tx_id = obj["tx_id"]
    if not is_identifier(tx_id):
        raise _Bad("bad transaction id")
    if tx_id in seen:
        raise _Bad(f"duplicate transaction {tx_id}")
    for key in ("prev_hash", "branch_hash", "block_hash"):
        if not _is_hex64(obj[key]):
            raise _Bad(f"{key} is not 64 lowercase hex characters")
    digests = obj["field_digests"]
    if not isinstance(digests, list) or not all(_is_hex64(d) for d in digests):
        raise _Bad("bad field digests")
    if not isinstance(obj["error_code"], str):
        raise _Bad("bad error code")

    if prev is None:
        if (status, tx_id, obj["prev_hash"], ts) != ("GENESIS", GENESIS_TX, ZERO_HASH, 0):
            raise _Bad("malformed genesis block")
        if digests or obj["branch_hash"] != ZERO_HASH or obj["error_code"]:
            raise _Bad("malformed genesis block")
    else:
        if obj["prev_hash"] != prev.block_hash:
            raise _Bad("prev_hash does not link to the previous block")
        if ts < prev.timestamp:
            raise _Bad("timestamp went backwards")
        if status == "PASS":
            branch = obj["branch"]
            if not isinstance(branch, dict) or not branch:
                raise _Bad("missing branch entries")
            if not all(is_identifier(k) and isinstance(v, str) and UNIT_SEPARATOR not in v for k, v in branch.items()):
                raise _Bad("bad branch entries")
            if digests != sorted(sha256_hex(name) for name in branch):
                raise _Bad("field digests do not match branch")
            if obj["error_code"] or BranchBlock(tx_id, branch).digest() != obj["branch_hash"]:
                raise _Bad("branch hash mismatch")
        elif status == "FAIL":
            if digests or obj["branch_hash"] != ZERO_HASH:
                raise _Bad("FAIL block carries branch data")
            if obj["error_code"] not in {e.value for e in ReasonerError}:
                raise _Bad("unknown error code")
        else:
            raise _Bad(f"bad status {status!r}")

    block = _block_from_record(obj)
    if block.compute_hash() != block.block_hash:
        raise _Bad("block hash mismatch")
    return block


def verify_chain_bytes(data: bytes) -> IntegrityReport:
    """Audit persisted chain bytes; reports the lowest inconsistent height."""
    if not data:
        return IntegrityReport(False, 0, "empty chain")
    lines = data.split(b"\n")
    terminated = lines[-1] == b""
    if terminated:
        lines.pop()
    prev = None
    seen: set[str] = set()
    for height, raw in enumerate(lines):
        try:
            block = _check_record(raw, height, prev, seen)
        except _Bad as exc:
            return IntegrityReport(False, height, str(exc))
        seen.add(block.tx_id)
        prev = block
    if not terminated:
        return IntegrityReport(False, len(lines) - 1, "last record is not newline-terminated")
    return IntegrityReport(True)


def verify_chain(chain: Chain) -> IntegrityReport:
    return verify_chain_bytes(chain.to_bytes())


def verify_chain_file(path: str | os.PathLike) -> IntegrityReport:
    return verify_chain_bytes(Path(path).read_bytes())
