"""Triple files, vocabularies, filter sets, and the entity name dictionary."""

from __future__ import annotations

import logging
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, NamedTuple

from .errors import ValidationError

logger = logging.getLogger(__name__)

SPLITS = ("train", "valid", "test")

StringTriple = tuple[str, str, str]


class Triple(NamedTuple):
    head: int
    relation: int
    tail: int


@dataclass(frozen=True)
class Vocab:
    """Dense entity/relation indices in first-appearance order.

    Indices cover exactly 0..n-1 with no gaps; `entities` and `relations`
    are the inverse arrays of the two maps.
    """

    entity_to_index: dict[str, int]
    relation_to_index: dict[str, int]
    entities: tuple[str, ...]
    relations: tuple[str, ...]

    @property
    def n_entities(self) -> int:
        return len(self.entities)

    @property
    def n_relations(self) -> int:
        return len(self.relations)


def load_triples(path, split: str = "train") -> list[StringTriple]:
    """Read a 3-column TSV of (head, relation, tail) facts.

    Duplicate lines within the file are dropped (one warning reports the
    count); file order is otherwise preserved. Empty lines are skipped.

    Args:
        path: TSV file, one triple per line.
        split: split tag, used only in log messages.

    Returns:
        Triples as string tuples, in file order.

    Raises:
        ValidationError: a line does not have exactly 3 non-empty fields.
    """
    triples: list[StringTriple] = []
    seen: set[StringTriple] = set()
    duplicates = 0
    with open(path, encoding="utf-8") as handle:
        for lineno, raw in enumerate(handle, start=1):
            line = raw.rstrip("\n").rstrip("\r")
            if not line.strip():
                continue
            fields = line.split("\t")
            if len(fields) != 3:
                raise ValidationError(
                    f"{path}: line {lineno}: expected 3 tab-separated fields, "
                    f"got {len(fields)}"
                )
            if any(not field for field in fields):
                raise ValidationError(f"{path}: line {lineno}: empty field")
            triple = (fields[0], fields[1], fields[2])
            if triple in seen:
                duplicates += 1
                continue
            seen.add(triple)
            triples.append(triple)
    if duplicates:
        logger.warning(
            "%s: dropped %d duplicate %s triple(s)", path, duplicates, split
        )
    return triples


def build_vocab(triples: Iterable[StringTriple]) -> Vocab:
    """Index entities and relations by first appearance.

    Within a triple the head is registered before the tail, so the result
    is deterministic for a fixed input order.
    """
    entity_to_index: dict[str, int] = {}
    relation_to_index: dict[str, int] = {}
    for head, relation, tail in triples:
        if head not in entity_to_index:
            entity_to_index[head] = len(entity_to_index)
        if relation not in relation_to_index:
            relation_to_index[relation] = len(relation_to_index)
        if tail not in entity_to_index:
            entity_to_index[tail] = len(entity_to_index)
    return Vocab(
        entity_to_index=entity_to_index,
        relation_to_index=relation_to_index,
        entities=tuple(entity_to_index),
        relations=tuple(relation_to_index),
    )


def encode_triples(vocab: Vocab, triples: Iterable[StringTriple]) -> list[Triple]:
    """Map string triples onto vocabulary indices."""
    encoded = []
    for head, relation, tail in triples:
        try:
            encoded.append(
                Triple(
                    vocab.entity_to_index[head],
                    vocab.relation_to_index[relation],
                    vocab.entity_to_index[tail],
                )
            )
        except KeyError as exc:
            raise ValidationError(f"not in vocabulary: {exc.args[0]!r}") from exc
    return encoded


def _dedup(triples: Iterable[Triple]) -> tuple[Triple, ...]:
    return tuple(dict.fromkeys(triples))


@dataclass(frozen=True)
class TripleStore:
    """Integer-coded triples split into train/valid/test.

    Duplicates are dropped within each split but kept across splits, so a
    fact present in both train and test still participates in filtering.
    """

    train: tuple[Triple, ...] = ()
    valid: tuple[Triple, ...] = ()
    test: tuple[Triple, ...] = ()

    @classmethod
    def from_strings(
        cls,
        vocab: Vocab,
        train: Iterable[StringTriple] = (),
        valid: Iterable[StringTriple] = (),
        test: Iterable[StringTriple] = (),
    ) -> "TripleStore":
        return cls(
            train=_dedup(encode_triples(vocab, train)),
            valid=_dedup(encode_triples(vocab, valid)),
            test=_dedup(encode_triples(vocab, test)),
        )

    def split(self, tag: str) -> tuple[Triple, ...]:
        if tag not in SPLITS:
            raise ValueError(f"unknown split {tag!r}")
        return getattr(self, tag)

    def all_triples(self) -> Iterable[Triple]:
        yield from self.train
        yield from self.valid
        yield from self.test

    def __len__(self) -> int:
        return len(self.train) + len(self.valid) + len(self.test)


class FilterSet:
    """Exact membership over train ∪ valid ∪ test, with per-query indexes
    used by filtered ranking."""

    def __init__(self, triples: Iterable[Triple]):
        self.known: frozenset[Triple] = frozenset(Triple(*t) for t in triples)
        self._heads: dict[tuple[int, int], set[int]] = defaultdict(set)
        self._tails: dict[tuple[int, int], set[int]] = defaultdict(set)
        for head, relation, tail in self.known:
            self._heads[(relation, tail)].add(head)
            self._tails[(head, relation)].add(tail)

    def __contains__(self, triple) -> bool:
        return Triple(*triple) in self.known

    def __len__(self) -> int:
        return len(self.known)

    def known_heads(self, relation: int, tail: int) -> set[int]:
        """Entities h for which (h, relation, tail) is a known fact."""
        return self._heads.get((relation, tail), set())

    def known_tails(self, head: int, relation: int) -> set[int]:
        """Entities t for which (head, relation, t) is a known fact."""
        return self._tails.get((head, relation), set())


def build_filter_set(store: TripleStore) -> FilterSet:
    """Collect every triple from every split for filtered evaluation."""
    return FilterSet(store.all_triples())


@dataclass(frozen=True)
class CorpusStats:
    """Graph-side counts plus the corpus triple-entity ratio.

    Corpus-side counts come from an external extraction step and are taken
    as given. `triple_entity_ratio` is None when `corpus_entities` is 0.
    """

    n_triples: int
    n_entities: int
    n_relations: int
    corpus_triples: int
    corpus_entities: int
    triple_entity_ratio: float | None


def corpus_stats(
    store: TripleStore, corpus_triples: int, corpus_entities: int
) -> CorpusStats:
    """Summarize the store and relate it to external corpus counts."""
    if corpus_triples < 0 or corpus_entities < 0:
        raise ValidationError("corpus counts must be non-negative")
    entities: set[int] = set()
    relations: set[int] = set()
    n_triples = 0
    for head, relation, tail in store.all_triples():
        entities.add(head)
        entities.add(tail)
        relations.add(relation)
        n_triples += 1
    ratio = corpus_triples / corpus_entities if corpus_entities > 0 else None
    return CorpusStats(
        n_triples=n_triples,
        n_entities=len(entities),
        n_relations=len(relations),
        corpus_triples=corpus_triples,
        corpus_entities=corpus_entities,
        triple_entity_ratio=ratio,
    )


STATS_COLUMNS = (
    "#triples(C)",
    "#triple(G)",
    "#entities(C)",
    "#entities(G)",
    "#rel(G)",
    "CT/CE",
)


def stats_tsv(stats: CorpusStats) -> str:
    """Render stats as a 2-line TSV with a header row."""
    ratio = "NA" if stats.triple_entity_ratio is None else f"{stats.triple_entity_ratio:.2f}"
    values = (
        str(stats.corpus_triples),
        str(stats.n_triples),
        str(stats.corpus_entities),
        str(stats.n_entities),
        str(stats.n_relations),
        ratio,
    )
    return "\t".join(STATS_COLUMNS) + "\n" + "\t".join(values) + "\n"


class NameMap:
    """Entity ID -> list of surface names. A `get` on an unknown ID returns
    None, never an empty list."""

    def __init__(self, aliases: dict[str, list[str]]):
        for entity_id, names in aliases.items():
            if not names:
                raise ValidationError(f"no aliases for entity {entity_id!r}")
        self._aliases = {k: tuple(v) for k, v in aliases.items()}

    def get(self, entity_id: str) -> tuple[str, ...] | None:
        return self._aliases.get(entity_id)

    def __contains__(self, entity_id: str) -> bool:
        return entity_id in self._aliases

    def __len__(self) -> int:
        return len(self._aliases)


def load_name_map(path) -> NameMap:
    """Read a 2-column TSV of (entity ID, alias); repeated IDs accumulate.

    Raises:
        ValidationError: a line does not have exactly 2 non-empty fields.
    """
    aliases: dict[str, list[str]] = defaultdict(list)
    with open(path, encoding="utf-8") as handle:
        for lineno, raw in enumerate(handle, start=1):
            line = raw.rstrip("\n").rstrip("\r")
            if not line.strip():
                continue
            fields = line.split("\t")
            if len(fields) != 2 or not fields[0] or not fields[1]:
                raise ValidationError(
                    f"{path}: line {lineno}: expected 'entity<TAB>name'"
                )
            aliases[fields[0]].append(fields[1])
    return NameMap(dict(aliases))
