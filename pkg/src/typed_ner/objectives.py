"""Training objectives: sequence NLL, multi-label type classification, and their mix."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import AbstractSet, Sequence

import numpy as np

from .errors import ConfigurationError, SchemaMismatchError
from .types import ClassifierLogits, TokenLogProbs, TypeSchema


@dataclass(frozen=True)
class LossBreakdown:
    generation: float
    classification: float
    lambda_: float
    total: float

    def __post_init__(self):
        for name in ("generation", "classification", "lambda_", "total"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"loss component {name} is not finite")


def log1p_sum_exp(values: Sequence[float] | np.ndarray) -> float:
    """``log(1 + sum(exp(values)))`` without overflow; 0 for an empty input."""
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        return 0.0
    m = max(float(v.max()), 0.0)
    return m + math.log(math.exp(-m) + float(np.exp(v - m).sum()))


def generation_loss(logprobs: TokenLogProbs) -> float:
    """Negative log-likelihood of the target, summed (not averaged) over tokens."""
    if not isinstance(logprobs, TokenLogProbs):
        logprobs = TokenLogProbs(tuple(logprobs))
    # 0.0 - x rather than -x so certainty yields +0.0, not -0.0
    return 0.0 - math.fsum(logprobs.values)


def classification_loss(logits: ClassifierLogits, positive: AbstractSet[str],
                        negative: AbstractSet[str], schema: TypeSchema,
                        standard_sign: bool = False) -> float:
    """Multiple binary classification loss over type-presence logits.

    The default form is ``log(1 + sum_pos e^{p}) + log(1 + sum_neg e^{-p})``.
    With ``standard_sign`` the exponents are flipped, which gives the usual
    multi-label ranking loss where confident positives are rewarded.
    """
    if not isinstance(logits, ClassifierLogits):
        logits = ClassifierLogits(tuple(logits))
    if len(logits) != schema.k:
        raise ConfigurationError(f"expected {schema.k} logits, got {len(logits)}")
    for tag in set(positive) | set(negative):
        if tag not in schema:
            raise SchemaMismatchError(tag)
    if set(positive) & set(negative) or (set(positive) | set(negative)) != set(schema.tags):
        raise ConfigurationError("positive and negative types must partition the schema")

    p = np.asarray(logits.values, dtype=np.float64)
    pos_idx = [i for i, tag in enumerate(schema.tags) if tag in positive]
    neg_idx = [i for i, tag in enumerate(schema.tags) if tag in negative]
    sign = -1.0 if standard_sign else 1.0
    return log1p_sum_exp(sign * p[pos_idx]) + log1p_sum_exp(-sign * p[neg_idx])


def combined_loss(generation: float, classification: float, lambda_: float) -> LossBreakdown:
    if not (math.isfinite(generation) and math.isfinite(classification) and math.isfinite(lambda_)):
        raise ValueError("loss inputs must be finite")
    if lambda_ < 0:
        raise ConfigurationError(f"lambda must be non-negative, got {lambda_}")
    return LossBreakdown(generation, classification, lambda_, generation + lambda_ * classification)
