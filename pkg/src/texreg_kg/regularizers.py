"""Text-similarity loss terms and the combined training objective.

Each `reg_*` function scores one entity pair and returns the loss with the
sparse gradients it induces. Pairs lacking the required text resource
contribute exactly zero. The similarity weights themselves are precomputed
constants: gradients flow only into entity vectors, biases, and the
word-to-entity projection.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, NamedTuple

import numpy as np

from .embeddings import (
    EmbeddingTable,
    SparseGrads,
    TrainConfig,
    margin_loss,
    residual_norm,
    transe_gradients,
)
from .errors import ValidationError
from .kg import Triple
from .text import SimilarityCache

_DEGENERATE_NORM = 1e-8


@dataclass
class Projection:
    """Learned linear map from word space (d_w) to entity space (d)."""

    weight: np.ndarray  # (d_w, d)
    bias: np.ndarray  # (d,)

    @property
    def word_dimension(self) -> int:
        return self.weight.shape[0]

    @property
    def dimension(self) -> int:
        return self.weight.shape[1]

    def apply(self, x: np.ndarray) -> np.ndarray:
        return x @ self.weight + self.bias

    def copy(self) -> "Projection":
        return Projection(self.weight.copy(), self.bias.copy())


def init_projection(
    word_dimension: int, dimension: int, rng: np.random.Generator
) -> Projection:
    """Entries uniform in [-1/sqrt(d_w), +1/sqrt(d_w)], bias zero."""
    bound = 1.0 / math.sqrt(word_dimension)
    return Projection(
        weight=rng.uniform(-bound, bound, size=(word_dimension, dimension)),
        bias=np.zeros(dimension),
    )


@dataclass
class RegOutput:
    loss: float
    grads: SparseGrads


def _zero() -> RegOutput:
    return RegOutput(0.0, SparseGrads())


def reg_cosine(
    emb: EmbeddingTable,
    proj: Projection,
    e1: int,
    e2: int,
    word_vecs: Mapping[int, np.ndarray],
) -> RegOutput:
    """Align the entity-space difference with the projected word-space
    difference: loss = 1 - cos(E_e1 - E_e2, proj(w_e1 - w_e2)).

    Zero output when either entity lacks a word embedding or either
    difference vector is degenerate (norm < 1e-8).
    """
    w1 = word_vecs.get(e1)
    w2 = word_vecs.get(e2)
    if w1 is None or w2 is None:
        return _zero()
    u = emb.entity_vectors[e1] - emb.entity_vectors[e2]
    x = w1 - w2
    v = proj.apply(x)
    norm_u = float(np.sqrt(u @ u))
    norm_v = float(np.sqrt(v @ v))
    if norm_u < _DEGENERATE_NORM or norm_v < _DEGENERATE_NORM:
        return _zero()
    cos = float(u @ v) / (norm_u * norm_v)
    grad_u = -(v / (norm_u * norm_v) - cos * u / (norm_u * norm_u))
    grad_v = -(u / (norm_u * norm_v) - cos * v / (norm_v * norm_v))
    grads = SparseGrads()
    grads.add_entity(e1, grad_u)
    grads.add_entity(e2, -grad_u)
    grads.add_projection(np.outer(x, grad_v), grad_v)
    return RegOutput(1.0 - cos, grads)


def reg_cooccurrence(emb: EmbeddingTable, e1: int, e2: int, counts) -> RegOutput:
    """Squared residual (E_e1 . E_e2 + b_e1 + b_e2 - ln(1 + X))^2 against the
    pair's co-occurrence count. `counts` is anything with a symmetric
    get(i, j) returning the count or None."""
    count = counts.get(e1, e2)
    if count is None:
        return _zero()
    v1 = emb.entity_vectors[e1]
    v2 = emb.entity_vectors[e2]
    residual = (
        float(v1 @ v2)
        + emb.entity_bias[e1]
        + emb.entity_bias[e2]
        - math.log1p(count)
    )
    grads = SparseGrads()
    scale = 2.0 * residual
    grads.add_entity(e1, scale * v2)
    grads.add_entity(e2, scale * v1)
    grads.add_bias(e1, scale)
    grads.add_bias(e2, scale)
    return RegOutput(residual * residual, grads)


def _pull_term(emb: EmbeddingTable, e1: int, e2: int, weight: float) -> RegOutput:
    """weight * ||E_e1 - E_e2||^2 with equal-and-opposite gradients."""
    if weight == 0.0:
        return _zero()
    diff = emb.entity_vectors[e1] - emb.entity_vectors[e2]
    grad = 2.0 * weight * diff
    grads = SparseGrads()
    grads.add_entity(e1, grad)
    grads.add_entity(e2, -grad)
    return RegOutput(weight * float(diff @ diff), grads)


def reg_rwmd(
    emb: EmbeddingTable, e1: int, e2: int, gain_cache: SimilarityCache
) -> RegOutput:
    """Pull term weighted by ln(1 + max(0, Gain)); the clamp covers gains
    that dot-product similarities can drive at or below zero."""
    gain = gain_cache.get(e1, e2)
    if gain is None:
        return _zero()
    return _pull_term(emb, e1, e2, math.log1p(max(0.0, gain)))


def reg_tfidf(
    emb: EmbeddingTable, e1: int, e2: int, sim_cache: SimilarityCache
) -> RegOutput:
    """Pull term weighted by the cached tf-idf similarity (in [0, 1] for a
    cosine-normalized index)."""
    sim = sim_cache.get(e1, e2)
    if sim is None:
        return _zero()
    return _pull_term(emb, e1, e2, sim)


def reg_rank(
    emb: EmbeddingTable, e1: int, e2: int, rank_cache: SimilarityCache
) -> RegOutput:
    """Pull term weighted by the cached rank similarity, min-max rescaled to
    [0, 1] over the whole cache. A cache without spread (max == min) carries
    no ranking information and yields zero weight."""
    raw = rank_cache.get(e1, e2)
    if raw is None:
        return _zero()
    low, high = rank_cache.min_value, rank_cache.max_value
    span = high - low
    if span <= 0.0:
        return _zero()
    return _pull_term(emb, e1, e2, (raw - low) / span)


@dataclass
class RegularizerContext:
    """Everything one selected regularizer needs at training time."""

    kind: str
    cache: SimilarityCache | None = None
    word_vecs: Mapping[int, np.ndarray] | None = None
    word_dimension: int | None = None
    projection: Projection | None = None

    def evaluate(self, emb: EmbeddingTable, e1: int, e2: int) -> RegOutput:
        if self.kind == "cosine":
            if self.projection is None or self.word_vecs is None:
                return _zero()
            return reg_cosine(emb, self.projection, e1, e2, self.word_vecs)
        if self.cache is None:
            return _zero()
        if self.kind == "cooccurrence":
            return reg_cooccurrence(emb, e1, e2, self.cache)
        if self.kind == "rwmd":
            return reg_rwmd(emb, e1, e2, self.cache)
        if self.kind == "tfidf":
            return reg_tfidf(emb, e1, e2, self.cache)
        if self.kind == "rank":
            return reg_rank(emb, e1, e2, self.cache)
        raise ValidationError(f"unknown regularizer kind {self.kind!r}")


class CombinedLoss(NamedTuple):
    total: float
    kg_part: float  # unweighted sum of margin losses
    text_part: float  # unweighted sum of regularizer losses
    grads: SparseGrads
    pair_count: int


def combined_loss(
    emb: EmbeddingTable,
    batch: list[tuple[Triple, list[Triple]]],
    context: RegularizerContext | None,
    config: TrainConfig,
) -> CombinedLoss:
    """Joint objective over a batch of positives with presampled negatives:
    total = lambda1 * sum(margin losses) + lambda2 * sum(text losses).

    The text term is evaluated once per positive triple on its (head, tail)
    pair. Gradients from both parts are merged additively, each under its
    own weight; a weight of exactly 0 skips that part's gradients so the
    update stream matches a run without the term.
    """
    kg_part = 0.0
    text_part = 0.0
    grads = SparseGrads()
    pair_count = 0
    for pos, negatives in batch:
        pos_score = residual_norm(
            emb.entity_vectors[pos.head]
            + emb.relation_vectors[pos.relation]
            - emb.entity_vectors[pos.tail],
            config.norm,
        )
        for neg in negatives:
            neg_score = residual_norm(
                emb.entity_vectors[neg.head]
                + emb.relation_vectors[neg.relation]
                - emb.entity_vectors[neg.tail],
                config.norm,
            )
            kg_part += margin_loss(pos_score, neg_score, config.margin)
            if config.lambda1 != 0.0:
                grads.merge(transe_gradients(emb, pos, neg, config), config.lambda1)
            pair_count += 1
        if context is not None:
            output = context.evaluate(emb, pos.head, pos.tail)
            text_part += output.loss
            if config.lambda2 != 0.0:
                grads.merge(output.grads, config.lambda2)
    total = config.lambda1 * kg_part + config.lambda2 * text_part
    return CombinedLoss(total, kg_part, text_part, grads, pair_count)
