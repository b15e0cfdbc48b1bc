"""Focus node linking: entity mentions, type words, time words, ordinal words.

Each linker is a pure function of the question and its (immutable)
resources, so the four of them can run in any order or concurrently.
Entity linking is a longest-match alias lookup; type linking scores
question sub-sequences against KB type labels by word-vector cosine.
"""

from __future__ import annotations

import re
import string
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import LoadError, ParseError
from .kb import DateValue, EntityId, TypeLabel, _read_lines

_YEAR_RE = re.compile(r"^[12]\d{3}$")

AFTER_TRIGGERS = frozenset({"after", "since"})
BEFORE_TRIGGERS = frozenset({"before", "until"})

# Irregular superlatives that carry no "-est" suffix.
IRREGULAR_SUPERLATIVES = frozenset({"most", "least", "best", "worst", "first", "last"})

# Superlatives that select the minimum of the ordinal attribute.
MIN_DIRECTION_TRIGGERS = frozenset(
    {"least", "lowest", "smallest", "earliest", "fewest", "worst", "first", "shortest"}
)


@dataclass(frozen=True)
class Question:
    raw: str
    tokens: tuple[str, ...]


def parse_question(raw: str) -> Question:
    """Lowercase, strip punctuation from token edges, split on whitespace."""
    tokens = []
    for piece in raw.lower().split():
        token = piece.strip(string.punctuation)
        if token:
            tokens.append(token)
    return Question(raw, tuple(tokens))


@dataclass(frozen=True)
class Mention:
    start: int
    end: int  # exclusive
    text: str


def _mention(q: Question, start: int, end: int) -> Mention:
    return Mention(start, end, " ".join(q.tokens[start:end]))


@dataclass(frozen=True)
class EntityLink:
    mention: Mention
    entity: EntityId
    link_score: float


@dataclass(frozen=True)
class TypeLink:
    mention: Mention
    type_label: TypeLabel
    similarity: float


@dataclass(frozen=True)
class TimeLink:
    mention: Mention
    value: DateValue
    comparator: str  # equals | before | after


@dataclass(frozen=True)
class OrdinalLink:
    mention: Mention
    rank: int
    direction: str  # max | min
    trigger: str


@dataclass(frozen=True)
class FocusLinks:
    entities: tuple[EntityLink, ...] = ()
    types: tuple[TypeLink, ...] = ()
    times: tuple[TimeLink, ...] = ()
    ordinals: tuple[OrdinalLink, ...] = ()


class WordEmbeddings:
    """Fixed-dimension word vectors; unknown words map to the zero vector."""

    def __init__(self, dimension: int, vectors: dict[str, np.ndarray]):
        self.dimension = dimension
        self._vectors = vectors
        self._zero = np.zeros(dimension)

    def vector(self, word: str) -> np.ndarray:
        return self._vectors.get(word, self._zero)

    def mean(self, tokens) -> np.ndarray:
        if not tokens:
            return self._zero
        return np.mean([self.vector(t) for t in tokens], axis=0)

    def __contains__(self, word: str) -> bool:
        return word in self._vectors

    def __len__(self) -> int:
        return len(self._vectors)


def load_embeddings(path) -> WordEmbeddings:
    """Read text-format vectors: a `count dimension` header, then one word per line."""
    lines = _read_lines(path)
    if not lines:
        raise ParseError(path, 1, "missing header")
    header = lines[0].split()
    if len(header) != 2:
        raise ParseError(path, 1, "header must be `count dimension`")
    try:
        count, dimension = int(header[0]), int(header[1])
    except ValueError as exc:
        raise ParseError(path, 1, str(exc)) from exc
    vectors: dict[str, np.ndarray] = {}
    for line_no, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        fields = line.split()
        if len(fields) != dimension + 1:
            raise ParseError(path, line_no, f"expected {dimension + 1} fields, got {len(fields)}")
        try:
            vectors[fields[0]] = np.array([float(x) for x in fields[1:]])
        except ValueError as exc:
            raise ParseError(path, line_no, str(exc)) from exc
    if len(vectors) != count:
        raise ParseError(path, 1, f"header declares {count} words, found {len(vectors)}")
    return WordEmbeddings(dimension, vectors)


def load_lexicon(path) -> dict[str, list[EntityId]]:
    """Parse an alias lexicon TSV: alias, entity id.  Aliases may repeat."""
    lexicon: dict[str, list[EntityId]] = {}
    for line_no, line in enumerate(_read_lines(path), start=1):
        if not line.strip() or line.startswith("#"):
            continue
        fields = line.split("\t")
        if len(fields) != 2:
            raise ParseError(path, line_no, f"expected 2 columns, got {len(fields)}")
        alias, entity = " ".join(fields[0].lower().split()), fields[1].strip()
        if not alias or not entity:
            raise ParseError(path, line_no, "empty field")
        entities = lexicon.setdefault(alias, [])
        if entity not in entities:
            entities.append(sys.intern(entity))
    return lexicon


def load_ordinal_dict(path) -> dict[str, int]:
    """Parse an ordinal word TSV: word, rank."""
    ordinals: dict[str, int] = {}
    for line_no, line in enumerate(_read_lines(path), start=1):
        if not line.strip() or line.startswith("#"):
            continue
        fields = line.split("\t")
        if len(fields) != 2:
            raise ParseError(path, line_no, f"expected 2 columns, got {len(fields)}")
        try:
            rank = int(fields[1])
        except ValueError as exc:
            raise ParseError(path, line_no, str(exc)) from exc
        if rank < 1:
            raise ParseError(path, line_no, f"rank must be positive, got {rank}")
        ordinals[fields[0].strip().lower()] = rank
    return ordinals


def cosine(u: np.ndarray, v: np.ndarray) -> float:
    """Cosine similarity; 0.0 when either vector is all-zero."""
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        return 0.0
    return float(np.dot(u, v) / (nu * nv))


def link_entities(q: Question, lexicon: dict[str, list[EntityId]]) -> list[EntityLink]:
    """All maximal alias matches; overlaps resolved by longest span, then leftmost.

    One winning span yields one link per candidate entity of its alias
    (disambiguation is deferred to ranking), so output spans are pairwise
    disjoint or identical.
    """
    if not q.tokens or not lexicon:
        return []
    max_len = max(len(alias.split()) for alias in lexicon)
    spans = []
    for length in range(1, min(max_len, len(q.tokens)) + 1):
        for start in range(len(q.tokens) - length + 1):
            alias = " ".join(q.tokens[start : start + length])
            if alias in lexicon:
                spans.append((start, start + length, alias))
    chosen: list[tuple[int, int, str]] = []
    for span in sorted(spans, key=lambda s: (-(s[1] - s[0]), s[0])):
        if all(span[1] <= c[0] or span[0] >= c[1] for c in chosen):
            chosen.append(span)
    links = []
    for start, end, alias in sorted(chosen):
        mention = _mention(q, start, end)
        score = (end - start) / len(alias.split())
        for entity in lexicon[alias]:
            links.append(EntityLink(mention, entity, score))
    return links


def link_types(
    q: Question, emb: WordEmbeddings, kb_types: list[TypeLabel], k: int
) -> list[TypeLink]:
    """Top-k (mention, type) pairs by cosine of mean embeddings.

    Mentions are contiguous sub-sequences of one to three tokens.  Ties
    break by earlier mention start, then lexicographic type label, then
    shorter mention.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    type_means = [(label, emb.mean(label.split())) for label in kb_types]
    scored = []
    for start in range(len(q.tokens)):
        for end in range(start + 1, min(start + 3, len(q.tokens)) + 1):
            mention_mean = emb.mean(q.tokens[start:end])
            for label, type_mean in type_means:
                sim = cosine(mention_mean, type_mean)
                scored.append((sim, start, label, end))
    scored.sort(key=lambda item: (-item[0], item[1], item[2], item[3]))
    return [
        TypeLink(_mention(q, start, end), label, sim)
        for sim, start, label, end in scored[:k]
    ]


def link_times(q: Question) -> list[TimeLink]:
    """Every four-digit year token (1000-2999) becomes a time link.

    The comparator comes from the immediately preceding token: after/since
    and before/until; anything else means equals.
    """
    links = []
    for i, token in enumerate(q.tokens):
        if not _YEAR_RE.match(token):
            continue
        prev = q.tokens[i - 1] if i > 0 else ""
        if prev in AFTER_TRIGGERS:
            comparator = "after"
        elif prev in BEFORE_TRIGGERS:
            comparator = "before"
        else:
            comparator = "equals"
        links.append(TimeLink(_mention(q, i, i + 1), DateValue(int(token)), comparator))
    return links


def _is_superlative(token: str) -> bool:
    return token in IRREGULAR_SUPERLATIVES or (len(token) > 3 and token.endswith("est"))


def link_ordinals(q: Question, ordinal_dict: dict[str, int]) -> list[OrdinalLink]:
    """Superlative tokens become ordinal links via the number+superlative pattern.

    Rank defaults to 1 and is overridden by an immediately preceding
    ordinal-dictionary word ("second tallest" -> rank 2).
    """
    links = []
    for i, token in enumerate(q.tokens):
        if not _is_superlative(token):
            continue
        start = i
        rank = 1
        if i > 0 and q.tokens[i - 1] in ordinal_dict:
            rank = ordinal_dict[q.tokens[i - 1]]
            start = i - 1
        direction = "min" if token in MIN_DIRECTION_TRIGGERS else "max"
        links.append(OrdinalLink(_mention(q, start, i + 1), rank, direction, token))
    return links


def link_all(
    q: Question,
    lexicon: dict[str, list[EntityId]],
    emb: WordEmbeddings,
    kb_types: list[TypeLabel],
    ordinal_dict: dict[str, int],
    k: int = 10,
) -> FocusLinks:
    """Run the four linkers and aggregate their results."""
    return FocusLinks(
        entities=tuple(link_entities(q, lexicon)),
        types=tuple(link_types(q, emb, kb_types, k)) if kb_types else (),
        times=tuple(link_times(q)),
        ordinals=tuple(link_ordinals(q, ordinal_dict)),
    )
