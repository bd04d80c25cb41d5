import hashlib
import json
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fixtures import scenario_request
from linkshare import ontology
from linkshare.errors import ChainCorrupted, DuplicateTransaction, InvalidRequest, NonMonotoneTimestamp
from linkshare.ledger import (
    GENESIS_TX,
    ZERO_HASH,
    BlockStatus,
    Chain,
    blockchain_branch_write,
    blockchain_write,
    datapoint_chain,
    execute_transaction,
    genesis_block,
    init_chain,
    parties_path,
    verify_chain,
    verify_chain_bytes,
    verify_chain_file,
)
from linkshare.ontology import AFFIRMED, RelationTriple
from linkshare.reasoner import ReasonerError, TransactionRequest

# sha256 values computed with coreutils sha256sum
GENESIS_HASH = "415d51129ae77ff20a5e17daedb47aa4d7fc16a8891042549c7b61e41c0047e1"
T1_BRANCH_HASH = "a92763b12e85880f3ad43c7aaee8782264aa1c45977c9dd3a17fbaefd731cb37"
NAME_DIGEST = "dcd1d5223f73b3a965c07e3ff5dbee3eedcfedb806686a05b9b3868a2c3d6d50"
ZIP_DIGEST = "eaca4b30692888d0183a2b77143637676909413108ce72808d7bf7438679536a"
CARD_DIGEST = "1d1b723c30a88985bfd45ee950697f5105a83586ff3862acac70ebd6be024c72"


def sha(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()


def small_chain(path=None, n=4) -> Chain:
    chain = init_chain(path)
    for i in range(1, n + 1):
        if i % 3 == 0:
            blockchain_write(chain, f"F{i}", ReasonerError.NOT_SHARABLE, i)
        else:
            req = scenario_request(f"T{i}", fields={"Name": f"n{i}", "ZIP": "21250"})
            blockchain_branch_write(chain, req, "User1", i)
    return chain


class TestGenesis:
    def test_golden_hash(self):
        g = genesis_block()
        assert g.canonical() == f"0|{ZERO_HASH}|GENESIS|GENESIS||{ZERO_HASH}||0"
        assert g.block_hash == GENESIS_HASH

    def test_init_chain(self):
        chain = init_chain()
        assert len(chain) == 1 and chain.tip.tx_id == GENESIS_TX
        assert verify_chain(chain).ok


class TestWrites:
    def test_branch_write_example(self):
        chain = init_chain()
        block = blockchain_branch_write(chain, scenario_request(), "User1", 5)
        assert block.height == 1 and block.prev_hash == GENESIS_HASH
        assert block.status is BlockStatus.PASS
        assert block.field_digests == tuple(sorted([NAME_DIGEST, ZIP_DIGEST, CARD_DIGEST]))
        assert block.branch.canonical() == "T1\x1fCreditCard=4111111111111111\x1fName=Alice\x1fZIP=21250"
        assert block.branch_hash == T1_BRANCH_HASH
        assert block.error_code == ""
        assert block.block_hash == sha(block.canonical())
        assert datapoint_chain(chain, "User1", "Name") == ["T1"]

    def test_values_never_in_main_fields(self):
        chain = init_chain()
        block = blockchain_branch_write(chain, scenario_request(), "User1", 1)
        main = {k: v for k, v in block.to_dict().items() if k != "branch"}
        assert "Alice" not in json.dumps(main) and "4111" not in json.dumps(main)

    def test_fail_block(self):
        chain = init_chain()
        block = blockchain_write(chain, "T9", ReasonerError.NOT_SHARABLE, 3)
        assert (block.status, block.error_code, block.field_digests, block.branch_hash) == (
            BlockStatus.FAIL, "NotSharable", (), ZERO_HASH)
        assert block.branch is None
        assert chain.datapoint_index == {}

    def test_duplicate_tx(self):
        chain = init_chain()
        blockchain_branch_write(chain, scenario_request(), "User1", 1)
        with pytest.raises(DuplicateTransaction):
            blockchain_write(chain, "T1", ReasonerError.NOT_SHARABLE, 2)
        with pytest.raises(DuplicateTransaction):
            blockchain_write(chain, GENESIS_TX, ReasonerError.NOT_SHARABLE, 2)
        assert len(chain) == 2

    def test_timestamps(self):
        chain = init_chain()
        blockchain_write(chain, "A", ReasonerError.NOT_SHARABLE, 5)
        blockchain_write(chain, "B", ReasonerError.NOT_SHARABLE, 5)
        with pytest.raises(NonMonotoneTimestamp):
            blockchain_write(chain, "C", ReasonerError.NOT_SHARABLE, 4)

    def test_bad_tx_id(self):
        with pytest.raises(InvalidRequest):
            blockchain_write(init_chain(), "a|b", ReasonerError.NOT_SHARABLE, 1)

    def test_datapoint_chain_order(self):
        chain = small_chain(n=5)
        assert datapoint_chain(chain, "User1", "Name") == ["T1", "T2", "T4", "T5"]
        assert datapoint_chain(chain, "User1", "CreditCard") == []
        assert datapoint_chain(chain, "Nobody", "Name") == []


class TestExecute:
    def test_pass_then_fail(self, world):
        tree, _ = world
        chain = init_chain()
        verdict, block = execute_transaction(tree, chain, scenario_request(), 1)
        assert verdict.passed and block.status is BlockStatus.PASS
        tree = ontology.retract_relation(tree, "User1", RelationTriple("User1.CreditCard", "IsSharable", AFFIRMED))
        verdict, block = execute_transaction(tree, chain, scenario_request("T2"), 2)
        assert block.status is BlockStatus.FAIL and block.error_code == "NotSharable"
        assert chain.parties["T2"].owner == "User1"
        assert datapoint_chain(chain, "User1", "CreditCard") == ["T1"]

    def test_rejections_append_nothing(self, world):
        tree, _ = world
        chain = init_chain()
        execute_transaction(tree, chain, scenario_request(), 5)
        before = chain.to_bytes()
        with pytest.raises(DuplicateTransaction):
            execute_transaction(tree, chain, scenario_request(), 6)
        with pytest.raises(NonMonotoneTimestamp):
            execute_transaction(tree, chain, scenario_request("T2"), 4)
        assert chain.to_bytes() == before


def rehash_oracle(data: bytes) -> bool:
    """Recompute every hash and link from the JSON lines alone."""
    prev = None
    for height, line in enumerate(data.decode().splitlines()):
        b = json.loads(line)
        if b["height"] != height:
            return False
        if prev is not None and b["prev_hash"] != prev:
            return False
        if b["status"] == "PASS":
            branch = "\x1f".join([b["tx_id"]] + [f"{k}={v}" for k, v in sorted(b["branch"].items())])
            if sha(branch) != b["branch_hash"]:
                return False
        canon = "|".join(str(b[k]) if k != "field_digests" else ",".join(b[k]) for k in
                         ("height", "prev_hash", "tx_id", "status", "field_digests", "branch_hash", "error_code", "timestamp"))
        if sha(canon) != b["block_hash"]:
            return False
        prev = b["block_hash"]
    return True


class TestVerify:
    def test_fresh_chain_agrees_with_rehash(self):
        data = small_chain(n=6).to_bytes()
        assert verify_chain_bytes(data).ok and rehash_oracle(data)

    @pytest.mark.parametrize("height", [1, 2, 3, 4])
    def test_tampered_value(self, height):
        chain = small_chain()
        lines = chain.to_bytes().splitlines()
        obj = json.loads(lines[height])
        if "branch" in obj:
            obj["branch"]["Name"] = "Mallory"
        else:
            obj["error_code"] = "NoPurposeChain"
        lines[height] = json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()
        report = verify_chain_bytes(b"\n".join(lines) + b"\n")
        assert not report.ok and report.first_bad_height == height

    def test_rehashed_tamper_breaks_next_link(self):
        chain = small_chain()
        lines = chain.to_bytes().splitlines()
        obj = json.loads(lines[1])
        obj["timestamp"] = 0
        canon = "|".join(str(obj[k]) if k != "field_digests" else ",".join(obj[k]) for k in
                         ("height", "prev_hash", "tx_id", "status", "field_digests", "branch_hash", "error_code", "timestamp"))
        obj["block_hash"] = sha(canon)
        lines[1] = json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()
        report = verify_chain_bytes(b"\n".join(lines) + b"\n")
        assert report.first_bad_height == 2

    def test_structural_defects(self):
        data = small_chain().to_bytes()
        lines = data.splitlines(keepends=True)
        assert verify_chain_bytes(b"").first_bad_height == 0
        assert verify_chain_bytes(data[:-1]).first_bad_height == 4
        assert verify_chain_bytes(b"".join(lines[:2] + lines[3:])).first_bad_height == 2
        assert verify_chain_bytes(b"".join(lines[1:])).first_bad_height == 0
        assert verify_chain_bytes(data.replace(b'"height":2', b'"height": 2')).first_bad_height == 2
        assert verify_chain_bytes(data + lines[1]).first_bad_height == 5

    def test_every_single_bit_flip_detected(self):
        data = small_chain(n=2).to_bytes()
        for i in range(len(data)):
            for bit in range(8):
                flipped = bytearray(data)
                flipped[i] ^= 1 << bit
                report = verify_chain_bytes(bytes(flipped))
                assert not report.ok, (i, bit)
                assert report.first_bad_height <= data[:i].count(b"\n")

    def test_prefix_preserved_by_appends(self):
        chain = small_chain()
        before = chain.to_bytes()
        blockchain_write(chain, "X", ReasonerError.MISSING_FIELD, 99)
        assert chain.to_bytes().startswith(before)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_random_chains_verify_and_detect_tamper(seed):
    rng = random.Random(seed)
    chain = init_chain()
    now = 0
    for i in range(rng.randrange(1, 12)):
        now += rng.randrange(0, 3)
        if rng.random() < 0.6:
            fields = {f: f"v{rng.randrange(1000)}" for f in rng.sample(["Name", "ZIP", "Email"], rng.randrange(1, 4))}
            req = TransactionRequest(f"T{i}", "S", "U", "R", "P", fields)
            blockchain_branch_write(chain, req, "U", now)
        else:
            blockchain_write(chain, f"T{i}", rng.choice(list(ReasonerError)), now)
    data = chain.to_bytes()
    assert verify_chain_bytes(data).ok and rehash_oracle(data)
    pos = rng.randrange(len(data))
    if data[pos] == 10:
        return
    tampered = bytearray(data)
    tampered[pos] = (tampered[pos] + rng.randrange(1, 256)) % 256
    assert not verify_chain_bytes(bytes(tampered)).ok


class TestFiles:
    def test_file_mirrors_memory(self, tmp_path):
        path = tmp_path / "chain.jsonl"
        chain = small_chain(path)
        assert path.read_bytes() == chain.to_bytes()
        assert verify_chain_file(path).ok
        assert parties_path(path).exists()

    def test_load_restores_indexes(self, tmp_path):
        path = tmp_path / "chain.jsonl"
        chain = small_chain(path, n=5)
        loaded = Chain.load(path)
        assert loaded.blocks == chain.blocks
        assert loaded.datapoint_index == chain.datapoint_index
        assert loaded.block("T4").branch.entries["Name"] == "n4"
        blockchain_write(loaded, "Next", ReasonerError.NOT_SHARABLE, 9)
        assert verify_chain_file(path).ok

    def test_load_rejects_tamper(self, tmp_path):
        path = tmp_path / "chain.jsonl"
        small_chain(path)
        path.write_bytes(path.read_bytes().replace(b"n2", b"n7"))
        with pytest.raises(ChainCorrupted) as info:
            Chain.load(path)
        assert info.value.height == 2
