"""Python access to the dfms core: losses, synthetic corpus, query ledger, statistics and config."""

from ._core import (
    BudgetExhausted,
    IoError,
    QueryLedger,
    ValidationError,
    canonical_config,
    config_keys,
    losses,
    normalized_entropy,
    query_bound,
    sha256,
    synth,
    total_query_cost,
)

__all__ = [
    "BudgetExhausted",
    "IoError",
    "QueryLedger",
    "ValidationError",
    "canonical_config",
    "config_keys",
    "losses",
    "normalized_entropy",
    "query_bound",
    "sha256",
    "synth",
    "total_query_cost",
]
