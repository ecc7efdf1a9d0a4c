"""Sentence/type matching: pooled embeddings, cosine scores, the contrastive
matching loss, threshold filtering, calibration and the training loop."""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from typing import AbstractSet, Mapping, NamedTuple, Sequence

import numpy as np

from .backends import EncoderBackend
from .errors import ConfigurationError, DegenerateInputError, SchemaMismatchError
from .types import FilteredSchema, MatchScore, TypeSchema

HISTOGRAM_BINS = 50


@dataclass(frozen=True)
class PooledEmbedding:
    vector: np.ndarray
    source_text: str = ""

    def __post_init__(self):
        v = np.asarray(self.vector, dtype=np.float64)
        if v.ndim != 1 or v.size == 0:
            raise DegenerateInputError("pooled embedding must be a nonempty vector")
        if not np.all(np.isfinite(v)):
            raise DegenerateInputError("pooled embedding has non-finite components")
        if not np.any(v):
            raise DegenerateInputError(f"zero pooled embedding for {self.source_text!r}")
        v.setflags(write=False)
        object.__setattr__(self, "vector", v)

    @property
    def dim(self) -> int:
        return self.vector.size


class MatchingPair(NamedTuple):
    sentence: str
    positive: frozenset
    negative: frozenset

    @property
    def flagged(self) -> bool:
        """No gold types: contributes zero matching loss."""
        return not self.positive


def pool_embedding(token_states, mask, source_text: str = "") -> PooledEmbedding:
    """Mean of the unmasked token states."""
    states = np.asarray(token_states, dtype=np.float64)
    keep = np.asarray(mask, dtype=bool)
    if states.ndim != 2 or keep.shape != (states.shape[0],):
        raise ConfigurationError("token states must be (n, d) with a length-n mask")
    if not keep.any():
        raise DegenerateInputError("cannot pool: every token is masked")
    return PooledEmbedding(states[keep].mean(axis=0), source_text)


def match_score(e_x: PooledEmbedding, e_d: PooledEmbedding) -> float:
    if e_x.dim != e_d.dim:
        raise ConfigurationError(f"dimension mismatch: {e_x.dim} vs {e_d.dim}")
    nx, nd = np.linalg.norm(e_x.vector), np.linalg.norm(e_d.vector)
    if nx == 0.0 or nd == 0.0:
        raise DegenerateInputError("cosine similarity is undefined for a zero vector")
    cos = float(np.dot(e_x.vector, e_d.vector) / (nx * nd))
    return min(1.0, max(-1.0, cos))


def embed(encoder: EncoderBackend, text: str) -> PooledEmbedding:
    states, mask = encoder.encode(text)
    return pool_embedding(states, mask, text)


class DescriptionCache:
    """Pooled description embeddings, invalidated whenever the encoder updates."""

    def __init__(self, encoder: EncoderBackend):
        self.encoder = encoder
        self._version = encoder.version
        self._store: dict[str, PooledEmbedding] = {}

    def get(self, text: str) -> PooledEmbedding:
        if self.encoder.version != self._version:
            self._store.clear()
            self._version = self.encoder.version
        if text not in self._store:
            self._store[text] = embed(self.encoder, text)
        return self._store[text]


def score_types(encoder: EncoderBackend, sentence: str, schema: TypeSchema,
                cache: DescriptionCache | None = None) -> list[MatchScore]:
    """One cosine score per schema type, in schema order."""
    e_x = embed(encoder, sentence)
    scores = []
    for t in schema.types:
        e_d = cache.get(t.description) if cache is not None else embed(encoder, t.description)
        scores.append(MatchScore(t.tag, match_score(e_x, e_d)))
    return scores


def matching_loss(scores: Mapping[str, float], positive: AbstractSet[str],
                  negative: AbstractSet[str], tau: float) -> float:
    """Contrastive matching loss for one sentence.

    Every positive type is scored against a softmax (temperature ``tau``) over
    all types, the other positives included. No positives means no terms,
    hence 0.
    """
    if not tau > 0:
        raise ConfigurationError(f"temperature must be positive, got {tau}")
    universe = sorted(set(positive) | set(negative))
    if not universe:
        raise ConfigurationError("matching loss needs at least one type")
    missing = [t for t in universe if t not in scores]
    if missing:
        raise SchemaMismatchError(missing[0], source="score map")
    if not positive:
        return 0.0
    logits = np.array([scores[t] for t in universe], dtype=np.float64) / tau
    m = logits.max()
    log_z = m + math.log(float(np.exp(logits - m).sum()))
    return math.fsum(log_z - scores[t] / tau for t in sorted(positive))


def filter_schema(scores: Sequence[MatchScore], threshold: float,
                  schema: TypeSchema) -> FilteredSchema:
    """Keep types scoring strictly above ``threshold``, best first (ties by schema index)."""
    if not -1.0 <= threshold <= 1.0:
        raise ConfigurationError(f"threshold {threshold} outside [-1, 1]")
    for s in scores:
        if s.type_tag not in schema:
            raise SchemaMismatchError(s.type_tag)
    kept = [s for s in scores if s.score > threshold]
    kept.sort(key=lambda s: (-s.score, schema.index(s.type_tag)))
    return FilteredSchema(tuple(s.type_tag for s in kept), threshold, tuple(scores))


@dataclass
class CalibrationReport:
    grid: list[float]
    precision: list[float]
    recall: list[float]
    f1: list[float]
    counts: list[tuple[int, int, int]]
    chosen: float
    bin_edges: list[float]
    positive_hist: list[int]
    negative_hist: list[int]
    n_pairs: int = 0

    def to_json(self) -> dict:
        return {
            "grid": self.grid,
            "metrics": [
                {"delta": d, "precision": p, "recall": r, "f1": f, "tp": c[0], "fp": c[1], "fn": c[2]}
                for d, p, r, f, c in zip(self.grid, self.precision, self.recall, self.f1, self.counts)
            ],
            "chosen_delta": self.chosen,
            "histogram": {
                "bin_edges": self.bin_edges,
                "positive_counts": self.positive_hist,
                "negative_counts": self.negative_hist,
            },
            "n_pairs": self.n_pairs,
        }


def _prf(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    p = tp / (tp + fp) if tp + fp else 0.0
    r = tp / (tp + fn) if tp + fn else 0.0
    f = 2 * p * r / (p + r) if p + r else 0.0
    return p, r, f


def calibrate_from_scores(scored: Sequence[tuple[Mapping[str, float], AbstractSet[str]]],
                          grid: Sequence[float], bins: int = HISTOGRAM_BINS) -> CalibrationReport:
    """Sweep ``grid`` over precomputed (score map, gold types) rows.

    Each (sentence, type) pair is a binary decision: retained or not. The
    chosen threshold maximises filter F1; ties go to the smaller threshold,
    since a missed hint costs more than an extra one.
    """
    if not grid:
        raise ConfigurationError("calibration grid is empty")
    if not scored:
        raise ConfigurationError("calibration needs at least one dev pair")
    grid = [float(d) for d in grid]
    pos_scores, neg_scores = [], []
    for scores, gold in scored:
        for tag, s in scores.items():
            (pos_scores if tag in gold else neg_scores).append(s)
    pos = np.asarray(pos_scores)
    neg = np.asarray(neg_scores)

    precision, recall, f1, counts = [], [], [], []
    for d in grid:
        tp = int((pos > d).sum())
        fp = int((neg > d).sum())
        fn = int(pos.size - tp)
        p, r, f = _prf(tp, fp, fn)
        precision.append(p)
        recall.append(r)
        f1.append(f)
        counts.append((tp, fp, fn))

    best = max(range(len(grid)), key=lambda i: (f1[i], -grid[i]))
    edges = np.linspace(-1.0, 1.0, bins + 1)
    pos_hist, _ = np.histogram(np.clip(pos, -1.0, 1.0), bins=edges)
    neg_hist, _ = np.histogram(np.clip(neg, -1.0, 1.0), bins=edges)
    return CalibrationReport(grid, precision, recall, f1, counts, grid[best],
                             edges.tolist(), pos_hist.tolist(), neg_hist.tolist(),
                             int(pos.size + neg.size))


def calibrate_threshold(dev_pairs: Sequence[MatchingPair], encoder: EncoderBackend,
                        schema: TypeSchema, grid: Sequence[float],
                        bins: int = HISTOGRAM_BINS) -> CalibrationReport:
    cache = DescriptionCache(encoder)
    scored = []
    for pair in dev_pairs:
        scores = score_types(encoder, pair.sentence, schema, cache)
        scored.append(({s.type_tag: s.score for s in scores}, frozenset(pair.positive)))
    return calibrate_from_scores(scored, grid, bins)


@dataclass
class MatcherTrace:
    epoch_loss: list[float] = field(default_factory=list)
    step_loss: list[float] = field(default_factory=list)


def train_matcher(encoder: EncoderBackend, pairs: Sequence[MatchingPair], schema: TypeSchema,
                  tau: float = 0.05, epochs: int = 1, batch_size: int = 16,
                  seed: int = 0, shuffle: bool = True) -> MatcherTrace:
    """Fit the encoder with the contrastive matching loss.

    ``epoch_loss`` holds the mean per-sentence loss measured before each
    batch's update; ``step_loss`` the batch mean before each update. Pairs
    without gold types add nothing to the loss and are left out of batches.
    """
    if epochs < 0 or batch_size < 1:
        raise ConfigurationError("epochs must be >= 0 and batch_size >= 1")
    trace = MatcherTrace()
    if epochs == 0:
        return trace
    if not encoder.trainable:
        raise ConfigurationError("encoder does not support updates")
    usable = [p for p in pairs if not p.flagged]
    if not usable:
        return trace
    rng = random.Random(seed)
    cache = DescriptionCache(encoder)

    def batch_mean(batch):
        total = 0.0
        for pair in batch:
            scores = {s.type_tag: s.score for s in score_types(encoder, pair.sentence, schema, cache)}
            total += matching_loss(scores, pair.positive, pair.negative, tau)
        return total / len(batch)

    for _ in range(epochs):
        order = list(range(len(usable)))
        if shuffle:
            rng.shuffle(order)
        weighted = 0.0
        for start in range(0, len(order), batch_size):
            batch = [usable[i] for i in order[start:start + batch_size]]
            before = batch_mean(batch)
            trace.step_loss.append(before)
            weighted += before * len(batch)
            encoder.apply_update(lambda b=batch: batch_mean(b))
        trace.epoch_loss.append(weighted / len(usable))
    return trace

