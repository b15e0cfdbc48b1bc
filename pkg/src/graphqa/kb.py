"""Immutable in-memory triple store with forward/backward indices.

The store is loaded once from flat TSV files and never mutated afterwards,
so concurrent reads are safe.  Lookups on absent ids return empty
collections rather than raising: candidate generation probes many dead
ends by design.
"""

from __future__ import annotations

import re
import sys
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

from .errors import LoadError, ParseError

EntityId = str
RelationId = str
TypeLabel = str

_SEPARATORS = re.compile(r"[._]+")
_DATE_RE = re.compile(r"^(\d{4})(?:-(\d{1,2})(?:-(\d{1,2}))?)?$")

OBJECT_KINDS = ("entity", "string", "number", "date")


@dataclass(frozen=True, order=True)
class DateValue:
    """A calendar date with optional month/day precision.

    Missing fields act as wildcards in comparisons: ``2000`` is equal to
    any date within the year 2000.
    """

    year: int
    month: int | None = None
    day: int | None = None

    def __post_init__(self):
        if self.month is not None and not 1 <= self.month <= 12:
            raise ValueError(f"month out of range: {self.month}")
        if self.day is not None and not 1 <= self.day <= 31:
            raise ValueError(f"day out of range: {self.day}")

    @classmethod
    def parse(cls, text: str) -> "DateValue":
        m = _DATE_RE.match(text.strip())
        if not m:
            raise ValueError(f"not a date: {text!r}")
        year, month, day = m.groups()
        return cls(
            int(year),
            int(month) if month is not None else None,
            int(day) if day is not None else None,
        )

    def render(self) -> str:
        out = f"{self.year:04d}"
        if self.month is not None:
            out += f"-{self.month:02d}"
            if self.day is not None:
                out += f"-{self.day:02d}"
        return out

    def sort_key(self) -> tuple[int, int, int]:
        return (self.year, self.month or 0, self.day or 0)


def compare_dates(a: DateValue, b: DateValue) -> int:
    """Lexicographic comparison on (year, month, day).

    A missing field on either side matches any value, ending the
    comparison as equal.  Returns -1, 0, or 1.
    """
    for fa, fb in ((a.year, b.year), (a.month, b.month), (a.day, b.day)):
        if fa is None or fb is None:
            return 0
        if fa != fb:
            return -1 if fa < fb else 1
    return 0


@dataclass(frozen=True)
class Node:
    """A graph node: an entity reference or a literal value.

    ``kind`` is one of ``entity``, ``string``, ``number``, ``date`` and
    selects the type of ``value`` (EntityId, str, float, DateValue).
    """

    kind: str
    value: EntityId | str | float | DateValue

    @property
    def is_entity(self) -> bool:
        return self.kind == "entity"

    @property
    def entity_id(self) -> EntityId:
        if self.kind != "entity":
            raise ValueError(f"not an entity node: {self!r}")
        return self.value


def entity_node(eid: EntityId) -> Node:
    return Node("entity", sys.intern(eid))


def string_node(text: str) -> Node:
    return Node("string", text)


def number_node(x: float) -> Node:
    return Node("number", float(x))


def date_node(value: DateValue | str) -> Node:
    if isinstance(value, str):
        value = DateValue.parse(value)
    return Node("date", value)


@dataclass(frozen=True)
class Triple:
    subject: EntityId
    predicate: RelationId
    object: Node


@lru_cache(maxsize=None)
def relation_tokens(rid: RelationId) -> tuple[str, ...]:
    """All lowercase tokens of a relation id, split on '.' and '_'."""
    return tuple(t for t in _SEPARATORS.split(rid.lower()) if t)


@lru_cache(maxsize=None)
def relation_name_tokens(rid: RelationId) -> tuple[str, ...]:
    """Display tokens of a relation: the last dot component, split on '_'.

    Domain prefixes ("government." in "government.office_holder") carry no
    surface words and are dropped when rendering sequences.
    """
    name = rid.rsplit(".", 1)[-1]
    return tuple(t for t in name.lower().split("_") if t)


def entity_id_tokens(eid: EntityId) -> tuple[str, ...]:
    """Fallback tokens for an entity with no display name."""
    return tuple(t for t in _SEPARATORS.split(eid.lower()) if t)


class KnowledgeBase:
    """Indexed, immutable collection of triples plus notable-type metadata."""

    def __init__(self, triples: list[Triple], notable: dict[EntityId, list[TypeLabel]]):
        self._triples = tuple(triples)
        forward: dict[EntityId, list[tuple[RelationId, Node]]] = {}
        backward: dict[EntityId, list[tuple[RelationId, EntityId]]] = {}
        entity_edges: set[tuple[EntityId, RelationId, EntityId]] = set()
        for t in self._triples:
            forward.setdefault(t.subject, []).append((t.predicate, t.object))
            if t.object.is_entity:
                obj = t.object.entity_id
                backward.setdefault(obj, []).append((t.predicate, t.subject))
                entity_edges.add((t.subject, t.predicate, obj))
        self._forward = forward
        self._backward = backward
        self._entity_edges = frozenset(entity_edges)
        self._notable = {e: tuple(labels) for e, labels in notable.items()}

    @property
    def triples(self) -> tuple[Triple, ...]:
        return self._triples

    def forward_edges(self, e: EntityId) -> list[tuple[RelationId, Node]]:
        """(predicate, object) pairs of triples with subject ``e``, in load order."""
        return list(self._forward.get(e, ()))

    def backward_edges(self, e: EntityId) -> list[tuple[RelationId, EntityId]]:
        """(predicate, subject) pairs of triples whose object is entity ``e``."""
        return list(self._backward.get(e, ()))

    def notable_types(self, e: EntityId) -> list[TypeLabel]:
        """Type labels registered for ``e`` in file order; deduplicated."""
        return list(self._notable.get(e, ()))

    def has_edge(self, s: EntityId, p: RelationId, o: EntityId) -> bool:
        return (s, p, o) in self._entity_edges

    def entities(self) -> list[EntityId]:
        """All entity ids mentioned as subject or entity-object, first-seen order."""
        seen: dict[EntityId, None] = {}
        for t in self._triples:
            seen.setdefault(t.subject)
            if t.object.is_entity:
                seen.setdefault(t.object.entity_id)
        return list(seen)

    def relations(self) -> list[RelationId]:
        seen: dict[RelationId, None] = {}
        for t in self._triples:
            seen.setdefault(t.predicate)
        return list(seen)

    def all_type_labels(self) -> list[TypeLabel]:
        """Distinct notable-type labels in registration order."""
        seen: dict[TypeLabel, None] = {}
        for labels in self._notable.values():
            for label in labels:
                seen.setdefault(label)
        return list(seen)

    def __len__(self) -> int:
        return len(self._triples)


def _parse_object(text: str, kind: str) -> Node:
    if kind == "entity":
        return entity_node(text)
    if kind == "string":
        return string_node(text)
    if kind == "number":
        return number_node(float(text))
    if kind == "date":
        return date_node(DateValue.parse(text))
    raise ValueError(f"unknown object kind: {kind!r}")


def _read_lines(path):
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise LoadError(p, exc) from exc
    return text.splitlines()


def load_triples(path) -> list[Triple]:
    """Parse a triples TSV: subject, predicate, object, optional object kind.

    The object kind defaults to ``entity``.  Lines starting with '#' and
    blank lines are skipped.
    """
    triples = []
    for line_no, line in enumerate(_read_lines(path), start=1):
        if not line.strip() or line.startswith("#"):
            continue
        fields = line.split("\t")
        if len(fields) not in (3, 4):
            raise ParseError(path, line_no, f"expected 3 or 4 columns, got {len(fields)}")
        subject, predicate, obj = fields[0].strip(), fields[1].strip(), fields[2].strip()
        kind = fields[3].strip().lower() if len(fields) == 4 else "entity"
        if not subject or not predicate or not obj:
            raise ParseError(path, line_no, "empty field")
        if kind not in OBJECT_KINDS:
            raise ParseError(path, line_no, f"unknown object kind {kind!r}")
        try:
            node = _parse_object(obj, kind)
        except ValueError as exc:
            raise ParseError(path, line_no, str(exc)) from exc
        triples.append(Triple(sys.intern(subject), sys.intern(predicate), node))
    return triples


def load_notable_types(path) -> dict[EntityId, list[TypeLabel]]:
    """Parse a types TSV: entity, type label.  Repeat registrations are ignored."""
    notable: dict[EntityId, list[TypeLabel]] = {}
    for line_no, line in enumerate(_read_lines(path), start=1):
        if not line.strip() or line.startswith("#"):
            continue
        fields = line.split("\t")
        if len(fields) != 2:
            raise ParseError(path, line_no, f"expected 2 columns, got {len(fields)}")
        entity, label = fields[0].strip(), " ".join(fields[1].lower().split())
        if not entity or not label:
            raise ParseError(path, line_no, "empty field")
        labels = notable.setdefault(sys.intern(entity), [])
        if label not in labels:
            labels.append(label)
    return notable


def load_kb(triples_path, types_path) -> KnowledgeBase:
    """Load and index a knowledge base from the two TSV files."""
    return KnowledgeBase(load_triples(triples_path), load_notable_types(types_path))


def load_names(path) -> dict[EntityId, str]:
    """Parse a display-name TSV: entity id, display name."""
    names: dict[EntityId, str] = {}
    for line_no, line in enumerate(_read_lines(path), start=1):
        if not line.strip() or line.startswith("#"):
            continue
        fields = line.split("\t")
        if len(fields) != 2:
            raise ParseError(path, line_no, f"expected 2 columns, got {len(fields)}")
        entity, name = fields[0].strip(), fields[1].strip()
        if not entity or not name:
            raise ParseError(path, line_no, "empty field")
        names[sys.intern(entity)] = name
    return names
