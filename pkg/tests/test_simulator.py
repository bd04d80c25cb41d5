import json
from pathlib import Path

import pytest

from linkshare.errors import InvalidConfig
from linkshare.ledger import BlockStatus, verify_chain_file
from linkshare.simulator import CATEGORIES, RNG_IDENTITY, ExperimentConfig, run_experiment, run_experiment_with_chain

GOLDEN = Path(__file__).parent / "golden" / "chain_seed42.jsonl"
SMALL = ExperimentConfig(node_count=4, duration=20, query_period=5, seed=7)


def test_deterministic_reports_and_chains(tmp_path):
    a = run_experiment(SMALL, tmp_path / "a.jsonl")
    b = run_experiment(SMALL, tmp_path / "b.jsonl")
    assert a.to_json() == b.to_json()
    assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()


def test_seed_changes_outcome():
    assert run_experiment(SMALL).to_json() != run_experiment(ExperimentConfig(node_count=4, duration=20, query_period=5, seed=8)).to_json()


def test_default_shape():
    report = run_experiment(ExperimentConfig(seed=42))
    cats = report.categories
    assert cats["WriteBlockchain"].attempts == 5 * 100 * 1
    assert cats["QueryBlockchain"].attempts == 5 * 10
    assert cats["ConsumePolicy"].attempts == 4
    assert report.integrity_ok
    data = report.to_dict()
    assert data["rng"] == RNG_IDENTITY
    assert list(data["categories"]) == list(CATEGORIES)
    for counts in data["categories"].values():
        assert counts["pass"] > 0 or counts["fail"] > 0


def test_both_reasoner_bars_populated():
    cats = run_experiment(ExperimentConfig(seed=42)).categories
    assert cats["Reasoner"].passed > 0 and cats["Reasoner"].failed > 0


def test_duration_zero():
    report = run_experiment(ExperimentConfig(duration=0))
    for name in ("Reasoner", "WriteBlockchain", "QueryBlockchain"):
        assert report.categories[name].attempts == 0
    assert report.categories["ConsumePolicy"].attempts > 0
    assert report.categories["AddRemoveRelations"].attempts > 0
    assert report.chain_height == 1


@pytest.mark.parametrize(
    "overrides",
    [
        {"node_count": 7},
        {"node_count": 0},
        {"sp_eu_ratio": (0, 1)},
        {"duration": -1},
        {"query_period": 0},
        {"writes_per_sp_per_second": 0},
        {"seed": -1},
        {"seed": 2**64},
        {"violation_share": 1.5},
        {"replay_share": -0.1},
    ],
)
def test_invalid_config(overrides):
    with pytest.raises(InvalidConfig):
        run_experiment(ExperimentConfig(**overrides))


def test_uneven_ratio():
    config = ExperimentConfig(node_count=9, sp_eu_ratio=(2, 1), duration=10)
    assert (config.service_providers, config.end_users) == (6, 3)
    report = run_experiment(config)
    assert report.categories["WriteBlockchain"].attempts == 60
    assert report.categories["QueryBlockchain"].attempts == 3


def test_conservation():
    report, chain = run_experiment_with_chain(ExperimentConfig(seed=3, duration=40))
    assert report.chain_height - 1 == report.categories["Reasoner"].attempts
    assert report.categories["WriteBlockchain"].passed == report.categories["Reasoner"].attempts
    passes = sum(1 for b in chain.blocks if b.status is BlockStatus.PASS)
    assert passes == report.categories["Reasoner"].passed


def test_query_soundness_is_checked_in_run():
    # the run raises if any FULL answer differs from what was written; a clean run proves it held
    for seed in range(5):
        assert run_experiment(ExperimentConfig(seed=seed, duration=30, query_period=3)).integrity_ok


def test_golden_chain(tmp_path):
    run_experiment(ExperimentConfig(seed=42), tmp_path / "chain.jsonl")
    assert (tmp_path / "chain.jsonl").read_bytes() == GOLDEN.read_bytes()
    assert verify_chain_file(GOLDEN).ok


def test_report_table_and_json():
    report = run_experiment(SMALL)
    table = report.to_table().splitlines()
    assert len(table) == 2 + len(CATEGORIES) + 1
    assert json.loads(report.to_json())["config"]["sp_eu_ratio"] == [1, 1]
