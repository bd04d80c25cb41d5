"""Policy-enforced permissioned ledger for PII sharing.

A privacy policy ontology (:mod:`linkshare.ontology`) is checked on every
sharing request by :mod:`linkshare.reasoner`; the verdict is recorded in
a hash-linked chain (:mod:`linkshare.ledger`) that :mod:`linkshare.query`
serves back only to authorized participants.
"""

from linkshare.errors import LinkShareError
from linkshare.ledger import (
    Chain,
    IntegrityReport,
    MainBlock,
    datapoint_chain,
    execute_transaction,
    init_chain,
    verify_chain,
    verify_chain_file,
)
from linkshare.ontology import PolicyTree, parse_policy_document, serialize_policy
from linkshare.query import Outcome, QueryResult, query_transaction
from linkshare.reasoner import ReasonerError, TransactionRequest, Verdict, verify_transaction
from linkshare.userbase import Role, UserBase

__version__ = "0.1.0"

__all__ = [
    "Chain",
    "IntegrityReport",
    "LinkShareError",
    "MainBlock",
    "Outcome",
    "PolicyTree",
    "QueryResult",
    "ReasonerError",
    "Role",
    "TransactionRequest",
    "UserBase",
    "Verdict",
    "datapoint_chain",
    "execute_transaction",
    "init_chain",
    "parse_policy_document",
    "query_transaction",
    "serialize_policy",
    "verify_chain",
    "verify_chain_file",
    "verify_transaction",
]
