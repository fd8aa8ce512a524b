"""Generation uncertainty and the retrieval-trigger decision.

Uncertainty is the normalized negative log-likelihood of the generated
answer: u = -(1/T) * sum(logprobs), in nats per token. Retrieval triggers
on strict inequality u > threshold, so a query sitting exactly at the
threshold bypasses retrieval.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ContractError, UncertaintyUndefinedError
from .generator import GenerationResult


@dataclass(frozen=True)
class UncertaintyScore:
    value: float  # nats per token, >= 0
    token_count: int


@dataclass(frozen=True)
class TriggerDecision:
    retrieve: bool
    u: UncertaintyScore
    threshold: float


def uncertainty(result: GenerationResult) -> UncertaintyScore:
    """Normalized negative log-likelihood of a generation.

    Raises UncertaintyUndefinedError for an empty logprob list (backends
    without logprob support); the pipeline maps that to always-retrieve.
    """
    logprobs = result.logprobs()
    if not logprobs:
        raise UncertaintyUndefinedError("generation carries no token logprobs")
    value = -(math.fsum(logprobs) / len(logprobs)) + 0.0  # +0.0 folds -0.0 to 0.0
    return UncertaintyScore(value=value, token_count=len(logprobs))


def decide(u: UncertaintyScore, threshold: float) -> TriggerDecision:
    """Trigger retrieval iff u.value > threshold.

    threshold must be >= 0; float("-inf") is accepted as the documented
    force-trigger sentinel.
    """
    if math.isnan(threshold) or (threshold < 0 and not math.isinf(threshold)):
        raise ContractError("threshold must be >= 0 (or -inf to force retrieval)")
    return TriggerDecision(retrieve=u.value > threshold, u=u, threshold=threshold)
