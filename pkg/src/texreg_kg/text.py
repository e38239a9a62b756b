"""Text-side structures feeding the regularizers: word vectors, entity
documents, co-occurrence counts, TF-IDF, relaxed-mover gains, rank overlap,
and the precomputed pair caches."""

from __future__ import annotations

import logging
import math
import os
import re
import unicodedata
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping, NamedTuple

import numpy as np

from .errors import ValidationError
from .kg import NameMap, TripleStore, Vocab

logger = logging.getLogger(__name__)

CACHE_KINDS = ("cooccurrence", "rwmd", "tfidf", "rank")


def _is_punctuation(char: str) -> bool:
    return unicodedata.category(char).startswith("P")


def tokenize(text: str) -> list[str]:
    """Lowercase, split on Unicode whitespace, strip leading/trailing
    punctuation from each piece, drop empties."""
    tokens = []
    for piece in text.lower().split():
        start, end = 0, len(piece)
        while start < end and _is_punctuation(piece[start]):
            start += 1
        while end > start and _is_punctuation(piece[end - 1]):
            end -= 1
        if end > start:
            tokens.append(piece[start:end])
    return tokens


class WordVectorTable:
    """Pretrained word -> vector map with one shared dimension."""

    def __init__(
        self,
        vectors: dict[str, np.ndarray],
        dimension: int | None,
        normalized: bool,
    ):
        self.vectors = vectors
        self.dimension = dimension
        self.normalized = normalized

    def __contains__(self, word: str) -> bool:
        return word in self.vectors

    def __len__(self) -> int:
        return len(self.vectors)

    def get(self, word: str) -> np.ndarray | None:
        return self.vectors.get(word)


def load_word_vectors(path, normalize: bool = True) -> WordVectorTable:
    """Read the plain-text vector format: 'word v1 v2 ... vd' per line.

    The first line fixes the dimension. Duplicate words keep the first
    occurrence (one warning reports the count). With `normalize`, vectors
    are rescaled to unit norm; zero vectors are dropped since they carry
    no direction.

    Raises:
        ValidationError: a line's value count disagrees with the dimension.
    """
    vectors: dict[str, np.ndarray] = {}
    dimension: int | None = None
    duplicates = 0
    dropped_zero = 0
    with open(path, encoding="utf-8") as handle:
        for lineno, raw in enumerate(handle, start=1):
            fields = raw.split()
            if not fields:
                continue
            if len(fields) < 2:
                raise ValidationError(
                    f"{path}: line {lineno}: expected a word and at least 1 value"
                )
            word, values = fields[0], fields[1:]
            if dimension is None:
                dimension = len(values)
            elif len(values) != dimension:
                raise ValidationError(
                    f"{path}: line {lineno}: expected {dimension} values, "
                    f"got {len(values)}"
                )
            if word in vectors:
                duplicates += 1
                continue
            try:
                vec = np.array([float(v) for v in values])
            except ValueError as exc:
                raise ValidationError(f"{path}: line {lineno}: {exc}") from exc
            if normalize:
                length = np.linalg.norm(vec)
                if length == 0.0:
                    dropped_zero += 1
                    continue
                vec = vec / length
            vectors[word] = vec
    if duplicates:
        logger.warning("%s: kept first of %d duplicate word(s)", path, duplicates)
    if dropped_zero:
        logger.warning("%s: dropped %d zero vector(s)", path, dropped_zero)
    return WordVectorTable(vectors, dimension, normalized=normalize)


def entity_word_embedding(
    names: NameMap, wvt: WordVectorTable, entity_id: str
) -> np.ndarray | None:
    """Average the word vectors of every alias token that is in vocabulary.

    Token occurrences are pooled across aliases and count multiply. Returns
    None when the entity has no aliases or no in-vocabulary token.
    """
    aliases = names.get(entity_id)
    if not aliases:
        return None
    found = [
        wvt.vectors[token]
        for alias in aliases
        for token in tokenize(alias)
        if token in wvt
    ]
    if not found:
        return None
    return np.mean(found, axis=0)


def entity_word_vectors(
    vocab: Vocab, names: NameMap, wvt: WordVectorTable
) -> dict[int, np.ndarray]:
    """Word-space embedding for every entity that has one, keyed by index."""
    table = {}
    for index, entity_id in enumerate(vocab.entities):
        vec = entity_word_embedding(names, wvt, entity_id)
        if vec is not None:
            table[index] = vec
    return table


class Mention(NamedTuple):
    entity: int
    position: int  # token offset of the mention's first token


_MENTION_RE = re.compile(r"<e:([^<>]+)>(.*?)</e>", re.DOTALL)


def parse_tagged_sentence(line: str, vocab: Vocab) -> tuple[list[Mention], int]:
    """Extract entity mentions from one '<e:ID>surface</e>'-tagged sentence.

    Returns the mentions with token positions, plus the count of mentions
    whose entity ID is not in the vocabulary (those are skipped).
    """
    mentions: list[Mention] = []
    unknown = 0
    position = 0
    cursor = 0
    for match in _MENTION_RE.finditer(line):
        position += len(tokenize(line[cursor : match.start()]))
        entity_id, surface = match.group(1), match.group(2)
        index = vocab.entity_to_index.get(entity_id)
        if index is None:
            unknown += 1
        else:
            mentions.append(Mention(index, position))
        position += max(1, len(tokenize(surface)))
        cursor = match.end()
    return mentions, unknown


def parse_tagged_corpus(lines: Iterable[str], vocab: Vocab) -> list[list[Mention]]:
    """Parse a one-sentence-per-line tagged corpus; unknown entity tags are
    skipped with a single summary warning."""
    sentences = []
    unknown_total = 0
    for line in lines:
        if not line.strip():
            continue
        mentions, unknown = parse_tagged_sentence(line, vocab)
        unknown_total += unknown
        sentences.append(mentions)
    if unknown_total:
        logger.warning("skipped %d mention(s) of unknown entities", unknown_total)
    return sentences


def _pair_key(i: int, j: int) -> tuple[int, int]:
    return (i, j) if i <= j else (j, i)


class CooccurrenceMatrix:
    """Sparse symmetric entity-pair counts; absent means zero."""

    def __init__(self):
        self._counts: dict[tuple[int, int], float] = {}

    def increment(self, i: int, j: int, amount: float = 1.0) -> None:
        key = _pair_key(i, j)
        self._counts[key] = self._counts.get(key, 0.0) + amount

    def get(self, i: int, j: int) -> float | None:
        return self._counts.get(_pair_key(i, j))

    def items(self):
        return self._counts.items()

    def __len__(self) -> int:
        return len(self._counts)


def build_cooccurrence(
    sentences: Iterable[list[Mention]], window: int | None = None
) -> CooccurrenceMatrix:
    """Count co-mentions of distinct entities.

    Every unordered pair of mentions within the same context adds 1, so an
    entity mentioned twice next to another counts twice. Mention pairs of
    the same entity are ignored. The context is the sentence when `window`
    is None, otherwise mentions at most `window` token positions apart.
    """
    if window is not None and window < 1:
        raise ValidationError("window must be >= 1")
    matrix = CooccurrenceMatrix()
    for mentions in sentences:
        for a in range(len(mentions)):
            for b in range(a + 1, len(mentions)):
                first, second = mentions[a], mentions[b]
                if first.entity == second.entity:
                    continue
                if window is not None and abs(first.position - second.position) > window:
                    continue
                matrix.increment(first.entity, second.entity)
    return matrix


@dataclass(frozen=True)
class EntityDocument:
    """Tokenized per-entity document with normalized term frequencies."""

    entity: int
    tokens: tuple[str, ...]
    freq: dict[str, float] = field(compare=False)

    @property
    def is_empty(self) -> bool:
        return not self.tokens


def make_document(entity: int, text: str) -> EntityDocument:
    tokens = tuple(tokenize(text))
    total = len(tokens)
    counts = Counter(tokens)
    freq = {token: count / total for token, count in counts.items()}
    return EntityDocument(entity=entity, tokens=tokens, freq=freq)


def document_filename(entity_id: str) -> str:
    return entity_id.replace("/", "_")


def load_entity_documents(directory, vocab: Vocab) -> dict[int, EntityDocument]:
    """Load one plain-text file per entity (named by ID with '/' -> '_').
    Entities without a file are simply absent from the result."""
    docs: dict[int, EntityDocument] = {}
    for index, entity_id in enumerate(vocab.entities):
        path = os.path.join(directory, document_filename(entity_id))
        if not os.path.isfile(path):
            continue
        with open(path, encoding="utf-8") as handle:
            docs[index] = make_document(index, handle.read())
    return docs


class TfidfIndex:
    """Per-document sparse tf-idf vectors with the shared df table."""

    def __init__(
        self,
        vectors: dict[int, dict[str, float]],
        df: dict[str, int],
        n_docs: int,
        normalized: bool,
    ):
        self.vectors = vectors
        self.df = df
        self.n_docs = n_docs
        self.normalized = normalized

    def __contains__(self, doc_id: int) -> bool:
        return doc_id in self.vectors

    def vector(self, doc_id: int) -> dict[str, float]:
        return self.vectors[doc_id]


def build_tfidf(docs: Iterable[EntityDocument], normalize: bool = True) -> TfidfIndex:
    """Weight every word as raw count times ln(N/df).

    Words present in every document get weight 0. With `normalize` (the
    default) each document vector is rescaled to unit norm so similarities
    land in [0, 1]; all-zero vectors stay zero.
    """
    docs = list(docs)
    n_docs = len(docs)
    df: Counter[str] = Counter()
    for doc in docs:
        df.update(set(doc.tokens))
    vectors: dict[int, dict[str, float]] = {}
    for doc in docs:
        counts = Counter(doc.tokens)
        vec = {
            word: count * math.log(n_docs / df[word])
            for word, count in counts.items()
        }
        if normalize:
            length = math.sqrt(sum(w * w for w in vec.values()))
            if length > 0:
                vec = {word: w / length for word, w in vec.items()}
        vectors[doc.entity] = vec
    return TfidfIndex(vectors, dict(df), n_docs, normalized=normalize)


def tfidf_similarity(index: TfidfIndex, x: int, y: int) -> float:
    """Dot product of two stored document vectors; in [0, 1] when the index
    is cosine-normalized."""
    if x not in index:
        raise KeyError(f"document {x} not in index")
    if y not in index:
        raise KeyError(f"document {y} not in index")
    vx, vy = index.vectors[x], index.vectors[y]
    if len(vy) < len(vx):
        vx, vy = vy, vx
    return sum(weight * vy[word] for word, weight in vx.items() if word in vy)


def rwmd_gain(
    a: EntityDocument, b: EntityDocument, wvt: WordVectorTable
) -> float | None:
    """Relaxed-mover gain from `a` to `b`: each distinct in-vocabulary token
    of `a` takes its best dot-product match in `b`, weighted by normalized
    frequency (renormalized over the retained tokens).

    Under unit-normalized vectors the result lies in [-1, 1] and the
    self-gain is exactly 1. Returns None when either side has no
    in-vocabulary token.
    """
    a_tokens = [t for t in a.freq if t in wvt]
    b_tokens = [t for t in b.freq if t in wvt]
    if not a_tokens or not b_tokens:
        return None
    a_matrix = np.stack([wvt.vectors[t] for t in a_tokens])
    b_matrix = np.stack([wvt.vectors[t] for t in b_tokens])
    weights = np.array([a.freq[t] for t in a_tokens])
    weights = weights / weights.sum()
    best = (a_matrix @ b_matrix.T).max(axis=1)
    return float(weights @ best)


def bidirectional_gain(
    a: EntityDocument, b: EntityDocument, wvt: WordVectorTable
) -> float | None:
    """Sum of the two directed gains; symmetric by construction, None when
    either direction is undefined."""
    forward = rwmd_gain(a, b, wvt)
    backward = rwmd_gain(b, a, wvt)
    if forward is None or backward is None:
        return None
    return forward + backward


def _descending_ranks(values: np.ndarray) -> np.ndarray:
    # rank 1 = largest value; ties broken toward the lower dimension index
    order = np.lexsort((np.arange(values.size), -values))
    ranks = np.empty(values.size, dtype=np.int64)
    ranks[order] = np.arange(1, values.size + 1)
    return ranks


def rank_similarity(u, v, top_n: int) -> float:
    """Overlap of the two vectors' top-`top_n` dimensions, summing
    2/(rank_u + rank_v) over the shared dimensions. Depends only on the
    orderings, never on the magnitudes."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape or u.ndim != 1:
        raise ValidationError("rank_similarity needs two vectors of equal length")
    if top_n < 1:
        raise ValidationError("top_n must be >= 1")
    ranks_u = _descending_ranks(u)
    ranks_v = _descending_ranks(v)
    k = min(top_n, u.size)
    top_u = np.flatnonzero(ranks_u <= k)
    top_v = np.flatnonzero(ranks_v <= k)
    shared = sorted(set(top_u.tolist()) & set(top_v.tolist()))
    return sum(2.0 / (int(ranks_u[f]) + int(ranks_v[f])) for f in shared)


class SimilarityCache:
    """Precomputed scalar per unordered entity pair, for one cache kind."""

    def __init__(
        self,
        kind: str,
        values: Mapping[tuple[int, int], float],
        params: Mapping[str, str] | None = None,
    ):
        if kind not in CACHE_KINDS:
            raise ValidationError(f"unknown cache kind {kind!r}")
        self.kind = kind
        self.values = {_pair_key(i, j): float(v) for (i, j), v in values.items()}
        self.params = dict(params or {})
        self._min: float | None = None
        self._max: float | None = None

    def get(self, i: int, j: int) -> float | None:
        return self.values.get(_pair_key(i, j))

    def __len__(self) -> int:
        return len(self.values)

    @property
    def min_value(self) -> float | None:
        if self._min is None and self.values:
            self._min = min(self.values.values())
        return self._min

    @property
    def max_value(self) -> float | None:
        if self._max is None and self.values:
            self._max = max(self.values.values())
        return self._max


def train_pairs(store: TripleStore) -> list[tuple[int, int]]:
    """Unordered (head, tail) pairs occurring in at least one train triple."""
    return sorted({_pair_key(t.head, t.tail) for t in store.train})


def precompute_cache(
    kind: str,
    store: TripleStore,
    *,
    matrix: CooccurrenceMatrix | None = None,
    index: TfidfIndex | None = None,
    docs: Mapping[int, EntityDocument] | None = None,
    wvt: WordVectorTable | None = None,
    word_vecs: Mapping[int, np.ndarray] | None = None,
    top_n: int = 100,
    extra_params: Mapping[str, str] | None = None,
) -> SimilarityCache:
    """Evaluate one similarity kind over every train pair.

    Pairs whose value is undefined (missing document, no co-occurrence,
    no word embedding) are left out of the cache entirely.
    """
    pairs = train_pairs(store)
    values: dict[tuple[int, int], float] = {}
    params: dict[str, str] = {}
    if kind == "cooccurrence":
        if matrix is None:
            raise ValidationError("cooccurrence cache needs a co-occurrence matrix")
        for i, j in pairs:
            count = matrix.get(i, j)
            if count is not None:
                values[(i, j)] = count
    elif kind == "rwmd":
        if docs is None or wvt is None:
            raise ValidationError("rwmd cache needs documents and word vectors")
        for i, j in pairs:
            a, b = docs.get(i), docs.get(j)
            if a is None or b is None:
                continue
            gain = bidirectional_gain(a, b, wvt)
            if gain is not None:
                values[(i, j)] = gain
    elif kind == "tfidf":
        if index is None:
            raise ValidationError("tfidf cache needs a tf-idf index")
        for i, j in pairs:
            if i in index and j in index:
                values[(i, j)] = tfidf_similarity(index, i, j)
    elif kind == "rank":
        if word_vecs is None:
            raise ValidationError("rank cache needs entity word embeddings")
        params["top_n"] = str(top_n)
        for i, j in pairs:
            u, v = word_vecs.get(i), word_vecs.get(j)
            if u is None or v is None:
                continue
            values[(i, j)] = rank_similarity(u, v, top_n)
    else:
        raise ValidationError(f"unknown cache kind {kind!r}")
    params.update(extra_params or {})
    return SimilarityCache(kind, values, params)


def save_cache(cache: SimilarityCache, path) -> None:
    """Write the cache as TSV rows 'i<TAB>j<TAB>value' (i <= j, sorted)
    behind a '# kind=... key=value ...' header. Reruns on unchanged inputs
    produce byte-identical files."""
    parts = [f"kind={cache.kind}"]
    parts += [f"{k}={cache.params[k]}" for k in sorted(cache.params)]
    lines = ["# " + " ".join(parts)]
    for (i, j) in sorted(cache.values):
        lines.append(f"{i}\t{j}\t{repr(cache.values[(i, j)])}")
    with open(path, "w", encoding="utf-8") as handle:
        handle.write("\n".join(lines) + "\n")


def load_cache(path) -> SimilarityCache:
    """Read a cache file written by `save_cache`.

    Raises:
        ValidationError: missing or malformed header, malformed rows.
    """
    with open(path, encoding="utf-8") as handle:
        header = handle.readline().rstrip("\n")
        if not header.startswith("# "):
            raise ValidationError(f"{path}: missing cache header")
        params: dict[str, str] = {}
        for part in header[2:].split():
            if "=" not in part:
                raise ValidationError(f"{path}: bad header field {part!r}")
            key, value = part.split("=", 1)
            params[key] = value
        kind = params.pop("kind", None)
        if kind is None:
            raise ValidationError(f"{path}: header does not name a kind")
        values: dict[tuple[int, int], float] = {}
        for lineno, raw in enumerate(handle, start=2):
            line = raw.rstrip("\n")
            if not line:
                continue
            fields = line.split("\t")
            if len(fields) != 3:
                raise ValidationError(
                    f"{path}: line {lineno}: expected 3 tab-separated fields"
                )
            try:
                i, j, value = int(fields[0]), int(fields[1]), float(fields[2])
            except ValueError as exc:
                raise ValidationError(f"{path}: line {lineno}: {exc}") from exc
            values[(i, j)] = value
    return SimilarityCache(kind, values, params)
