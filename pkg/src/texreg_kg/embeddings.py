"""Translation-based embeddings: tables, scoring, margin loss, corruption,
and hand-written gradients."""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .errors import ValidationError
from .kg import Triple, Vocab

NORMS = ("L1", "L2")
REGULARIZER_KINDS = ("none", "cosine", "cooccurrence", "rwmd", "tfidf", "rank")

CHECKPOINT_MAGIC = "texreg-kg v1"


@dataclass
class TrainConfig:
    """Hyperparameters for joint training.

    `lambda1` weighs the margin-ranking part, `lambda2` the text part.
    `norm` selects the distance used by the translation score.
    """

    dimension: int = 50
    margin: float = 1.0
    learning_rate: float = 0.01
    epochs: int = 100
    batch_size: int = 128
    lambda1: float = 1.0
    lambda2: float = 0.1
    negatives: int = 1
    seed: int = 42
    norm: str = "L2"
    regularizer: str = "none"
    filter_negatives: bool = False
    deterministic: bool = True
    workers: int = 1

    def __post_init__(self):
        if self.dimension < 1:
            raise ValidationError("dimension must be >= 1")
        if self.margin < 0:
            raise ValidationError("margin must be >= 0")
        if self.learning_rate <= 0:
            raise ValidationError("learning_rate must be > 0")
        if self.epochs < 0:
            raise ValidationError("epochs must be >= 0")
        if self.batch_size < 1:
            raise ValidationError("batch_size must be >= 1")
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ValidationError("loss weights must be >= 0")
        if self.negatives < 1:
            raise ValidationError("negatives must be >= 1")
        if self.norm not in NORMS:
            raise ValidationError(f"norm must be one of {NORMS}, got {self.norm!r}")
        if self.regularizer not in REGULARIZER_KINDS:
            raise ValidationError(
                f"regularizer must be one of {REGULARIZER_KINDS}, "
                f"got {self.regularizer!r}"
            )
        if self.workers < 1:
            raise ValidationError("workers must be >= 1")


class EmbeddingTable:
    """Dense entity/relation vectors plus per-entity scalar biases.

    The biases are consumed only by the co-occurrence regularizer; they ride
    along in checkpoints either way.
    """

    def __init__(
        self,
        entity_vectors: np.ndarray,
        relation_vectors: np.ndarray,
        entity_bias: np.ndarray,
    ):
        entity_vectors = np.asarray(entity_vectors, dtype=np.float64)
        relation_vectors = np.asarray(relation_vectors, dtype=np.float64)
        entity_bias = np.asarray(entity_bias, dtype=np.float64)
        if entity_vectors.ndim != 2 or relation_vectors.ndim != 2:
            raise ValidationError("embedding matrices must be 2-dimensional")
        if (
            entity_vectors.shape[0] > 0
            and relation_vectors.shape[0] > 0
            and entity_vectors.shape[1] != relation_vectors.shape[1]
        ):
            raise ValidationError("entity and relation dimensions differ")
        if entity_bias.shape != (entity_vectors.shape[0],):
            raise ValidationError("bias length must equal the entity count")
        self.entity_vectors = entity_vectors
        self.relation_vectors = relation_vectors
        self.entity_bias = entity_bias

    @property
    def n_entities(self) -> int:
        return self.entity_vectors.shape[0]

    @property
    def n_relations(self) -> int:
        return self.relation_vectors.shape[0]

    @property
    def dimension(self) -> int:
        return self.entity_vectors.shape[1]

    def normalize_entities(self) -> None:
        """Rescale every entity vector to unit Euclidean norm, in place.
        Zero rows are left untouched."""
        norms = np.linalg.norm(self.entity_vectors, axis=1, keepdims=True)
        np.divide(
            self.entity_vectors,
            norms,
            out=self.entity_vectors,
            where=norms > 0,
        )

    def copy(self) -> "EmbeddingTable":
        return EmbeddingTable(
            self.entity_vectors.copy(),
            self.relation_vectors.copy(),
            self.entity_bias.copy(),
        )


def init_embeddings(
    vocab: Vocab, config: TrainConfig, rng: np.random.Generator | None = None
) -> EmbeddingTable:
    """Draw entries uniformly from [-6/sqrt(d), +6/sqrt(d)], then unit-
    normalize the entity vectors. Biases start at zero. Deterministic for a
    fixed seed."""
    if rng is None:
        rng = np.random.default_rng(config.seed)
    d = config.dimension
    bound = 6.0 / np.sqrt(d)
    table = EmbeddingTable(
        rng.uniform(-bound, bound, size=(vocab.n_entities, d)),
        rng.uniform(-bound, bound, size=(vocab.n_relations, d)),
        np.zeros(vocab.n_entities),
    )
    table.normalize_entities()
    return table


def _check_indices(emb: EmbeddingTable, triple: Triple) -> None:
    if not (0 <= triple.head < emb.n_entities and 0 <= triple.tail < emb.n_entities):
        raise IndexError(f"entity index out of range in {triple}")
    if not 0 <= triple.relation < emb.n_relations:
        raise IndexError(f"relation index out of range in {triple}")


def residual_norm(delta: np.ndarray, norm: str) -> float:
    if norm == "L1":
        return float(np.abs(delta).sum())
    return float(np.sqrt(delta @ delta))


def score_triple(emb: EmbeddingTable, triple: Triple, norm: str = "L2") -> float:
    """Distance ||E_head + r - E_tail|| under the given norm; lower is a
    better fit, 0 means an exact translation."""
    _check_indices(emb, triple)
    delta = (
        emb.entity_vectors[triple.head]
        + emb.relation_vectors[triple.relation]
        - emb.entity_vectors[triple.tail]
    )
    return residual_norm(delta, norm)


def margin_loss(pos: float, neg: float, margin: float) -> float:
    """Hinge max(0, margin + pos - neg) on a positive/negative score pair."""
    return max(0.0, margin + pos - neg)


def sample_negative(
    triple: Triple, n_entities: int, rng: np.random.Generator
) -> Triple:
    """Corrupt the head or the tail (probability 1/2 each) with a uniformly
    drawn entity different from the original. The relation is kept."""
    if n_entities < 2:
        raise ValidationError("negative sampling needs at least 2 entities")
    corrupt_head = rng.random() < 0.5
    original = triple.head if corrupt_head else triple.tail
    # one draw over n-1 values, shifted past the original: uniform over the rest
    replacement = int(rng.integers(n_entities - 1))
    if replacement >= original:
        replacement += 1
    if corrupt_head:
        return Triple(replacement, triple.relation, triple.tail)
    return Triple(triple.head, triple.relation, replacement)


class SparseGrads:
    """Gradient accumulator keyed by the few parameters a sample touches.

    Repeated adds on the same index sum, so samples sharing an entity
    combine their contributions correctly.
    """

    __slots__ = ("entity", "relation", "bias", "proj_weight", "proj_bias")

    def __init__(self):
        self.entity: dict[int, np.ndarray] = {}
        self.relation: dict[int, np.ndarray] = {}
        self.bias: dict[int, float] = {}
        self.proj_weight: np.ndarray | None = None
        self.proj_bias: np.ndarray | None = None

    def add_entity(self, index: int, grad: np.ndarray) -> None:
        if index in self.entity:
            self.entity[index] = self.entity[index] + grad
        else:
            self.entity[index] = np.array(grad, dtype=np.float64)

    def add_relation(self, index: int, grad: np.ndarray) -> None:
        if index in self.relation:
            self.relation[index] = self.relation[index] + grad
        else:
            self.relation[index] = np.array(grad, dtype=np.float64)

    def add_bias(self, index: int, grad: float) -> None:
        self.bias[index] = self.bias.get(index, 0.0) + grad

    def add_projection(self, weight_grad: np.ndarray, bias_grad: np.ndarray) -> None:
        if self.proj_weight is None:
            self.proj_weight = np.array(weight_grad, dtype=np.float64)
            self.proj_bias = np.array(bias_grad, dtype=np.float64)
        else:
            self.proj_weight = self.proj_weight + weight_grad
            self.proj_bias = self.proj_bias + bias_grad

    def merge(self, other: "SparseGrads", scale: float = 1.0) -> None:
        """Accumulate `scale * other` into this record."""
        for index, grad in other.entity.items():
            self.add_entity(index, scale * grad)
        for index, grad in other.relation.items():
            self.add_relation(index, scale * grad)
        for index, grad in other.bias.items():
            self.add_bias(index, scale * grad)
        if other.proj_weight is not None:
            self.add_projection(scale * other.proj_weight, scale * other.proj_bias)

    def is_empty(self) -> bool:
        return (
            not self.entity
            and not self.relation
            and not self.bias
            and self.proj_weight is None
        )


def _distance_gradient(delta: np.ndarray, norm: str) -> np.ndarray:
    """d||delta||/d(delta). L2 uses the normalized residual (zero residual
    gives a zero subgradient); L1 uses the sign vector with ties at 0."""
    if norm == "L1":
        return np.sign(delta)
    length = np.sqrt(delta @ delta)
    if length == 0.0:
        return np.zeros_like(delta)
    return delta / length


def transe_gradients(
    emb: EmbeddingTable, pos: Triple, neg: Triple, config: TrainConfig
) -> SparseGrads:
    """Margin-ranking gradients for one positive/negative pair.

    Returns an empty record when the margin is satisfied. Otherwise the
    positive residual pushes its endpoints together and the negative one
    pushes its endpoints apart; shared parameters accumulate both parts.
    """
    grads = SparseGrads()
    pos_delta = (
        emb.entity_vectors[pos.head]
        + emb.relation_vectors[pos.relation]
        - emb.entity_vectors[pos.tail]
    )
    neg_delta = (
        emb.entity_vectors[neg.head]
        + emb.relation_vectors[neg.relation]
        - emb.entity_vectors[neg.tail]
    )
    loss = margin_loss(
        residual_norm(pos_delta, config.norm),
        residual_norm(neg_delta, config.norm),
        config.margin,
    )
    if loss <= 0.0:
        return grads
    g_pos = _distance_gradient(pos_delta, config.norm)
    g_neg = _distance_gradient(neg_delta, config.norm)
    grads.add_entity(pos.head, g_pos)
    grads.add_entity(pos.tail, -g_pos)
    grads.add_relation(pos.relation, g_pos)
    grads.add_entity(neg.head, -g_neg)
    grads.add_entity(neg.tail, g_neg)
    grads.add_relation(neg.relation, -g_neg)
    return grads


def _format_vector(values: Iterable[float]) -> str:
    # repr() of a Python float is the shortest exact round-trip form
    return " ".join(repr(float(v)) for v in values)


def save_checkpoint(emb: EmbeddingTable, path) -> None:
    """Write the table as text: a header line, then one line per vector
    ('e'/'r'/'b', index, decimal floats). Round-trips bit-exactly."""
    lines = [
        f"{CHECKPOINT_MAGIC} d={emb.dimension} |E|={emb.n_entities} "
        f"|R|={emb.n_relations}"
    ]
    for i in range(emb.n_entities):
        lines.append(f"e {i} {_format_vector(emb.entity_vectors[i])}")
    for j in range(emb.n_relations):
        lines.append(f"r {j} {_format_vector(emb.relation_vectors[j])}")
    for i in range(emb.n_entities):
        lines.append(f"b {i} {repr(float(emb.entity_bias[i]))}")
    with open(path, "w", encoding="utf-8") as handle:
        handle.write("\n".join(lines) + "\n")


_HEADER_RE = re.compile(
    r"^texreg-kg v1 d=(\d+) \|E\|=(\d+) \|R\|=(\d+)$"
)


def load_checkpoint(path) -> EmbeddingTable:
    """Read a checkpoint written by `save_checkpoint`.

    Raises:
        ValidationError: bad header, wrong vector arity, or missing rows.
    """
    with open(path, encoding="utf-8") as handle:
        header = handle.readline().rstrip("\n")
        match = _HEADER_RE.match(header)
        if match is None:
            raise ValidationError(f"{path}: not a texreg-kg v1 checkpoint")
        dim, n_entities, n_relations = (int(g) for g in match.groups())
        entity = np.full((n_entities, dim), np.nan)
        relation = np.full((n_relations, dim), np.nan)
        bias = np.full(n_entities, np.nan)
        seen = {"e": 0, "r": 0, "b": 0}
        for lineno, raw in enumerate(handle, start=2):
            line = raw.rstrip("\n")
            if not line:
                continue
            fields = line.split(" ")
            kind, index, values = fields[0], fields[1], fields[2:]
            if kind not in seen:
                raise ValidationError(f"{path}: line {lineno}: unknown tag {kind!r}")
            idx = int(index)
            expected = 1 if kind == "b" else dim
            if len(values) != expected:
                raise ValidationError(
                    f"{path}: line {lineno}: expected {expected} value(s), "
                    f"got {len(values)}"
                )
            try:
                parsed = [float(v) for v in values]
            except ValueError as exc:
                raise ValidationError(f"{path}: line {lineno}: {exc}") from exc
            try:
                if kind == "e":
                    entity[idx] = parsed
                elif kind == "r":
                    relation[idx] = parsed
                else:
                    bias[idx] = parsed[0]
            except IndexError as exc:
                raise ValidationError(
                    f"{path}: line {lineno}: index {idx} out of range"
                ) from exc
            seen[kind] += 1
    if seen["e"] != n_entities or seen["r"] != n_relations or seen["b"] != n_entities:
        raise ValidationError(f"{path}: row counts do not match the header")
    return EmbeddingTable(entity, relation, bias)
