"""``linkshare`` command-line front end.

Structured results go to stdout as sorted-key JSON; diagnostics go to
stderr. Exit status is 0 on success, 1 on a domain outcome such as a
failed verdict or a denied query, 2 on usage or I/O problems.

The data directory is taken from ``--home`` or ``$LINKSHARE_HOME``
(default ``./.linkshare``) and holds:

    policy.owx, policy.version   current PolicyTree and its version
    registry.jsonl               registered participants
    chain.jsonl[.parties]        the ledger and its parties sidecar
    proposals.json               pending and settled amendments
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from linkshare import ledger, ontology, userbase as ub
from linkshare.errors import LinkShareError
from linkshare.query import Outcome, query_transaction
from linkshare.reasoner import TransactionRequest
from linkshare.simulator import ExperimentConfig, run_experiment

EXIT_OK, EXIT_DOMAIN, EXIT_USAGE = 0, 1, 2


class Store:
    def __init__(self, home: Path):
        self.home = home

    @property
    def policy_path(self) -> Path:
        return self.home / "policy.owx"

    @property
    def chain_path(self) -> Path:
        return self.home / "chain.jsonl"

    @property
    def registry_path(self) -> Path:
        return self.home / "registry.jsonl"

    @property
    def proposals_path(self) -> Path:
        return self.home / "proposals.json"

    def load_tree(self) -> ontology.PolicyTree:
        if not self.policy_path.exists():
            raise FileNotFoundError(f"no policy ingested yet in {self.home} (run `linkshare ingest`)")
        tree = ontology.parse_policy_document(self.policy_path.read_bytes())
        version_file = self.home / "policy.version"
        version = int(version_file.read_text()) if version_file.exists() else 0
        return ontology.PolicyTree(tree.classes, tree.properties, tree.individuals, tree.triples, version)

    def save_tree(self, tree: ontology.PolicyTree) -> None:
        self.home.mkdir(parents=True, exist_ok=True)
        tmp = self.policy_path.with_suffix(".tmp")
        tmp.write_bytes(ontology.serialize_policy(tree))
        os.replace(tmp, self.policy_path)
        (self.home / "policy.version").write_text(f"{tree.version}\n")

    def load_userbase(self) -> ub.UserBase:
        return ub.load_registry(self.registry_path)

    def load_chain(self) -> ledger.Chain:
        if not self.chain_path.exists():
            self.home.mkdir(parents=True, exist_ok=True)
            return ledger.init_chain(self.chain_path)
        return ledger.Chain.load(self.chain_path)

    def load_proposals(self) -> dict[str, ub.PolicyProposal]:
        if not self.proposals_path.exists():
            return {}
        data = json.loads(self.proposals_path.read_text(encoding="utf-8"))
        return {pid: ub.PolicyProposal.from_dict(p) for pid, p in data.items()}

    def save_proposals(self, proposals: dict[str, ub.PolicyProposal]) -> None:
        data = {pid: p.to_dict() for pid, p in sorted(proposals.items())}
        self.proposals_path.write_text(json.dumps(data, sort_keys=True, indent=1) + "\n", encoding="utf-8")


def emit(obj: object) -> None:
    print(json.dumps(obj, sort_keys=True, separators=(",", ":")))


def cmd_ingest(args, store: Store) -> int:
    tree = ontology.parse_policy_document(Path(args.policy).read_bytes())
    store.save_tree(tree)
    emit(tree.summary())
    return EXIT_OK


def cmd_relation(args, store: Store) -> int:
    tree = store.load_tree()
    if args.action == "add":
        tree = ontology.assert_relation(tree, args.actor, args.subject, args.property, args.object)
    else:
        triple = ontology.RelationTriple(args.subject, args.property, args.object)
        tree = ontology.retract_relation(tree, args.actor, triple)
    store.save_tree(tree)
    emit({"action": args.action, "object": args.object, "property": args.property,
          "subject": args.subject, "version": tree.version})
    return EXIT_OK


def cmd_register(args, store: Store) -> int:
    users = store.load_userbase()
    users = ub.register_participant(users, args.id, args.role)
    participant = users.participants[args.id]
    tree = store.load_tree() if store.policy_path.exists() else None
    if tree is not None:
        cls = ub.ROLE_CLASSES[participant.role]
        if participant.role is ub.Role.END_USER and args.registrar:
            tree = ub.onboard_end_user(users, tree, args.registrar, args.id, args.fields or [])
        elif cls in tree.classes and args.id not in tree.individuals:
            tree = ontology.add_individual(tree, args.id, cls)
    store.home.mkdir(parents=True, exist_ok=True)
    ub.append_participant(store.registry_path, participant)
    out = participant.to_dict()
    if tree is not None:
        store.save_tree(tree)
        out["version"] = tree.version
    emit(out)
    return EXIT_OK


def cmd_transact(args, store: Store) -> int:
    request = TransactionRequest.from_json(Path(args.request).read_bytes())
    users = store.load_userbase()
    users.require(request.requester, request.owner, request.recipient)
    tree = store.load_tree()
    chain = store.load_chain()
    now = chain.tip.timestamp + 1 if args.now is None else args.now
    verdict, block = ledger.execute_transaction(tree, chain, request, now)
    emit({**verdict.to_dict(), "block_hash": block.block_hash, "height": block.height, "tx_id": block.tx_id})
    return EXIT_OK if verdict.passed else EXIT_DOMAIN


def cmd_query(args, store: Store) -> int:
    result = query_transaction(store.load_chain(), store.load_tree(), store.load_userbase(), args.as_, args.tx_id)
    emit(result.to_dict())
    return EXIT_OK if result.outcome in (Outcome.FULL, Outcome.METADATA_ONLY) else EXIT_DOMAIN


def cmd_verify(args, store: Store) -> int:
    path = Path(args.chain) if args.chain else store.chain_path
    report = ledger.verify_chain_file(path)
    emit(report.to_dict())
    if not report.ok:
        print(f"chain corrupted at height {report.first_bad_height}: {report.reason}", file=sys.stderr)
    return EXIT_OK if report.ok else EXIT_DOMAIN


def cmd_datapoints(args, store: Store) -> int:
    tx_ids = ledger.datapoint_chain(store.load_chain(), args.owner, args.field)
    emit({"field": args.field, "owner": args.owner, "tx_ids": tx_ids})
    return EXIT_OK


def cmd_propose(args, store: Store) -> int:
    try:
        change = ub.PolicyChange.from_dict(json.loads(args.change))
    except ValueError as exc:
        raise UsageError(f"--change is not valid JSON: {exc}") from None
    proposals = store.load_proposals()
    proposal = ub.propose_policy_change(store.load_userbase(), args.as_, change, args.id)
    if proposal.proposal_id in proposals:
        raise UsageError(f"proposal {proposal.proposal_id} already exists")
    proposals[proposal.proposal_id] = proposal
    store.save_proposals(proposals)
    emit(proposal.to_dict())
    return EXIT_OK


def _proposal(proposals: dict, pid: str) -> ub.PolicyProposal:
    if pid not in proposals:
        raise UsageError(f"unknown proposal {pid}")
    return proposals[pid]


def cmd_vote(args, store: Store) -> int:
    proposals = store.load_proposals()
    proposal = ub.cast_vote(store.load_userbase(), _proposal(proposals, args.proposal_id), args.as_, args.decision == "yes")
    proposals[proposal.proposal_id] = proposal
    store.save_proposals(proposals)
    emit(proposal.to_dict())
    return EXIT_OK


def cmd_tally(args, store: Store) -> int:
    proposals = store.load_proposals()
    tree = store.load_tree()
    proposal, new_tree = ub.tally_and_apply(store.load_userbase(), _proposal(proposals, args.proposal_id), tree)
    if new_tree is not tree:
        store.save_tree(new_tree)
    proposals[proposal.proposal_id] = proposal
    store.save_proposals(proposals)
    emit({**proposal.to_dict(), "version": new_tree.version})
    return EXIT_OK if proposal.state is not ub.ProposalState.REJECTED else EXIT_DOMAIN


def _ratio(text: str) -> tuple[int, int]:
    try:
        sp, eu = text.split(":")
        return int(sp), int(eu)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected SP:EU, got {text!r}") from None


def cmd_simulate(args, store: Store) -> int:
    config = ExperimentConfig(
        node_count=args.node_count,
        sp_eu_ratio=args.sp_eu_ratio,
        duration=args.duration,
        query_period=args.query_period,
        writes_per_sp_per_second=args.writes_per_sp,
        seed=args.seed,
        violation_share=args.violation_share,
        replay_share=args.replay_share,
    )
    report = run_experiment(config, args.chain_out)
    print(report.to_json())
    print(report.to_table(), file=sys.stderr)
    return EXIT_OK if report.integrity_ok else EXIT_DOMAIN


class UsageError(Exception):
    pass


def build_parser() -> argparse.ArgumentParser:
    defaults = ExperimentConfig()
    parser = argparse.ArgumentParser(prog="linkshare", description="Policy-enforced PII sharing ledger.")
    parser.add_argument("--home", help="data directory (default: $LINKSHARE_HOME or ./.linkshare)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="parse an OWL/XML policy and make it current")
    p.add_argument("policy")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("relation", help="assert or retract a relation triple")
    p.add_argument("action", choices=("add", "rm"))
    p.add_argument("--actor", required=True)
    p.add_argument("subject")
    p.add_argument("property")
    p.add_argument("object")
    p.set_defaults(func=cmd_relation)

    p = sub.add_parser("register", help="register a participant")
    p.add_argument("id")
    p.add_argument("--role", required=True, choices=[r.value for r in ub.Role])
    p.add_argument("--registrar", help="service provider onboarding an end user")
    p.add_argument("--fields", nargs="+", help="PII fields created for an onboarded end user")
    p.set_defaults(func=cmd_register)

    p = sub.add_parser("transact", help="verify a request and record the verdict")
    p.add_argument("--request", required=True)
    p.add_argument("--now", type=int, help="logical timestamp (default: tip + 1)")
    p.set_defaults(func=cmd_transact)

    p = sub.add_parser("query", help="fetch a transaction by id")
    p.add_argument("--as", dest="as_", required=True)
    p.add_argument("tx_id")
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("verify", help="audit the chain file")
    p.add_argument("--chain", help="chain file (default: the data directory's)")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("datapoints", help="transactions that shared one data point")
    p.add_argument("--owner", required=True)
    p.add_argument("field")
    p.set_defaults(func=cmd_datapoints)

    p = sub.add_parser("propose", help="propose a structural policy change")
    p.add_argument("--as", dest="as_", required=True)
    p.add_argument("--change", required=True, help='JSON, e.g. {"kind":"add_class","params":{"name":"X"}}')
    p.add_argument("--id", help="proposal id (default: derived from the change)")
    p.set_defaults(func=cmd_propose)

    p = sub.add_parser("vote", help="vote on an open proposal")
    p.add_argument("--as", dest="as_", required=True)
    p.add_argument("proposal_id")
    p.add_argument("decision", choices=("yes", "no"))
    p.set_defaults(func=cmd_vote)

    p = sub.add_parser("tally", help="settle a proposal")
    p.add_argument("proposal_id")
    p.set_defaults(func=cmd_tally)

    p = sub.add_parser("simulate", help="run the seeded experiment")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--node-count", type=int, default=defaults.node_count)
    p.add_argument("--sp-eu-ratio", type=_ratio, default=defaults.sp_eu_ratio)
    p.add_argument("--duration", type=int, default=defaults.duration)
    p.add_argument("--query-period", type=int, default=defaults.query_period)
    p.add_argument("--writes-per-sp", type=int, default=defaults.writes_per_sp_per_second)
    p.add_argument("--violation-share", type=float, default=defaults.violation_share)
    p.add_argument("--replay-share", type=float, default=defaults.replay_share)
    p.add_argument("--chain-out", help="persist the simulated chain to this path")
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    home = Path(args.home or os.environ.get("LINKSHARE_HOME") or ".linkshare")
    try:
        return args.func(args, Store(home))
    except LinkShareError as exc:
        emit({"error": exc.code, "message": str(exc)})
        print(f"{exc.code}: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
