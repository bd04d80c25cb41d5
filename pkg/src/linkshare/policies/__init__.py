"""Policy documents shipped with the package."""

from importlib import resources


def base_policy_document() -> bytes:
    """OWL/XML policy with the PII, purpose, consent and participant vocabulary."""
    return resources.files(__name__).joinpath("base_policy.owx").read_bytes()
