"""Candidate query graph generation, serialization, and execution.

A query graph is a one- or two-hop main path from a focus entity to the
answer variable, plus optional entity/type/time/ordinal constraints.
Generation is staged: enumerate main paths from every linked entity, then
attach every groundable constraint combination.  The two-hop mediator
recorded on a path is a generation-time witness; execution re-binds the
mediator as a variable, which is why structurally equal graphs that differ
only in witness are duplicates.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from .kb import (
    DateValue,
    EntityId,
    KnowledgeBase,
    Node,
    RelationId,
    TypeLabel,
    compare_dates,
    entity_id_tokens,
    relation_name_tokens,
)
from .linking import FocusLinks, Question, WordEmbeddings, link_all

ANSWER = "answer"
MEDIATOR = "mediator"

SECTION_ORDER = ("MainPath", "TypePath", "EntityPath", "TimePath", "OrdinalPath")
CONSTRAINT_SECTIONS = ("TypePath", "EntityPath", "TimePath", "OrdinalPath")


@dataclass(frozen=True)
class MainPath:
    """Relation chain from the focus entity to the answer variable.

    ``mediator`` is the witness entity through which a two-hop path was
    discovered; it is present exactly when the path has two relations.
    """

    focus: EntityId
    relations: tuple[RelationId, ...]
    mediator: EntityId | None = None

    def __post_init__(self):
        if len(self.relations) not in (1, 2):
            raise ValueError("main path must have 1 or 2 relations")
        if (self.mediator is not None) != (len(self.relations) == 2):
            raise ValueError("mediator present iff path has 2 relations")

    @property
    def hops(self) -> int:
        return len(self.relations)


@dataclass(frozen=True)
class EntityConstraint:
    attach_point: str  # answer | mediator
    relation: RelationId
    entity: EntityId


@dataclass(frozen=True)
class TypeConstraint:
    type_label: TypeLabel


@dataclass(frozen=True)
class TimeConstraint:
    relation: RelationId
    value: DateValue
    comparator: str  # equals | before | after
    attach_point: str


@dataclass(frozen=True)
class OrdinalConstraint:
    relation: RelationId
    rank: int
    direction: str  # max | min
    attach_point: str


@dataclass(frozen=True)
class QueryGraph:
    main: MainPath
    entity_constraints: tuple[EntityConstraint, ...] = ()
    type_constraint: TypeConstraint | None = None
    time_constraint: TimeConstraint | None = None
    ordinal_constraint: OrdinalConstraint | None = None
    provenance: int = 0

    def __post_init__(self):
        if self.main.hops == 1:
            attached = [c.attach_point for c in self.entity_constraints]
            if self.time_constraint:
                attached.append(self.time_constraint.attach_point)
            if self.ordinal_constraint:
                attached.append(self.ordinal_constraint.attach_point)
            if MEDIATOR in attached:
                raise ValueError("mediator constraints require a two-hop path")

    def structure_key(self) -> tuple:
        """Canonical identity: provenance and witness mediator excluded."""
        return (
            self.main.focus,
            self.main.relations,
            tuple(sorted((c.attach_point, c.relation, c.entity) for c in self.entity_constraints)),
            self.type_constraint.type_label if self.type_constraint else None,
            (
                self.time_constraint.attach_point,
                self.time_constraint.relation,
                self.time_constraint.comparator,
                self.time_constraint.value,
            )
            if self.time_constraint
            else None,
            (
                self.ordinal_constraint.attach_point,
                self.ordinal_constraint.relation,
                self.ordinal_constraint.rank,
                self.ordinal_constraint.direction,
            )
            if self.ordinal_constraint
            else None,
        )

    @property
    def constraint_count(self) -> int:
        n = len(self.entity_constraints)
        n += sum(c is not None for c in (self.type_constraint, self.time_constraint, self.ordinal_constraint))
        return n


@dataclass
class QueryGraphSequence:
    """Flattened token form of a graph: the five sub-paths in fixed order."""

    tokens: list[str]
    sections: dict[str, tuple[int, int]]


@dataclass
class CandidateSet:
    question: Question
    graphs: list[QueryGraph]


@dataclass
class SearchLimits:
    one_hop: int = 256
    two_hop: int = 1024


@dataclass
class GenerationReport:
    entity_links: int = 0
    main_paths: int = 0
    raw_graphs: int = 0
    candidates: int = 0
    truncations: list[dict] = field(default_factory=list)
    reason: str | None = None

    def to_dict(self) -> dict:
        return {
            "entity_links": self.entity_links,
            "main_paths": self.main_paths,
            "raw_graphs": self.raw_graphs,
            "candidates": self.candidates,
            "truncations": self.truncations,
            "reason": self.reason,
        }


@dataclass
class GenerationResources:
    """Everything candidate generation needs besides the KB itself."""

    lexicon: dict[str, list[EntityId]]
    embeddings: WordEmbeddings
    kb_types: list[TypeLabel]
    ordinal_dict: dict[str, int]
    names: dict[EntityId, str] = field(default_factory=dict)
    type_top_k: int = 10
    limits: SearchLimits = field(default_factory=SearchLimits)


def enumerate_main_paths(
    kb: KnowledgeBase,
    links: FocusLinks,
    limits: SearchLimits | None = None,
    report: GenerationReport | None = None,
) -> list[MainPath]:
    """One- and two-hop paths from every linked entity, in deterministic order.

    Order is entity-link order, then relation load order, one-hop before
    two-hop per entity.  Hitting a fanout limit truncates the entity's
    expansion and records it on the report.
    """
    limits = limits or SearchLimits()
    focuses: dict[EntityId, None] = {}
    for el in links.entities:
        focuses.setdefault(el.entity)
    paths: list[MainPath] = []
    seen: set[tuple] = set()
    for focus in focuses:
        edges = kb.forward_edges(focus)
        emitted = 0
        for rel, _obj in edges:
            key = (focus, rel)
            if key in seen:
                continue
            if emitted >= limits.one_hop:
                if report is not None:
                    report.truncations.append(
                        {"entity": focus, "stage": "one_hop", "limit": limits.one_hop}
                    )
                break
            seen.add(key)
            paths.append(MainPath(focus, (rel,)))
            emitted += 1
        emitted = 0
        truncated = False
        for rel1, obj in edges:
            if truncated:
                break
            if not obj.is_entity:
                continue
            mediator = obj.entity_id
            for rel2, _obj2 in kb.forward_edges(mediator):
                key = (focus, rel1, mediator, rel2)
                if key in seen:
                    continue
                if emitted >= limits.two_hop:
                    truncated = True
                    if report is not None:
                        report.truncations.append(
                            {"entity": focus, "stage": "two_hop", "limit": limits.two_hop}
                        )
                    break
                seen.add(key)
                paths.append(MainPath(focus, (rel1, rel2), mediator))
                emitted += 1
    if report is not None:
        report.main_paths = len(paths)
    return paths


def _main_bindings(kb: KnowledgeBase, main: MainPath) -> list[tuple[EntityId | None, Node]]:
    """All (mediator, answer) bindings of the main path; mediator is re-bound."""
    if main.hops == 1:
        return [(None, obj) for rel, obj in kb.forward_edges(main.focus) if rel == main.relations[0]]
    bindings = []
    for rel1, obj in kb.forward_edges(main.focus):
        if rel1 != main.relations[0] or not obj.is_entity:
            continue
        mediator = obj.entity_id
        for rel2, answer in kb.forward_edges(mediator):
            if rel2 == main.relations[1]:
                bindings.append((mediator, answer))
    return bindings


def _attach_entity(binding: tuple[EntityId | None, Node], attach_point: str) -> EntityId | None:
    mediator, answer = binding
    if attach_point == MEDIATOR:
        return mediator
    return answer.entity_id if answer.is_entity else None


def _binding_nodes(bindings, attach_point: str) -> list[EntityId]:
    nodes: dict[EntityId, None] = {}
    for binding in bindings:
        node = _attach_entity(binding, attach_point)
        if node is not None:
            nodes.setdefault(node)
    return list(nodes)


def _relations_to_entity(kb, nodes: list[EntityId], target: EntityId) -> list[RelationId]:
    rels: dict[RelationId, None] = {}
    for node in nodes:
        for rel, obj in kb.forward_edges(node):
            if obj.is_entity and obj.entity_id == target:
                rels.setdefault(rel)
    return list(rels)


def _valued_relations(kb, nodes: list[EntityId], kinds: tuple[str, ...]) -> list[RelationId]:
    rels: dict[RelationId, None] = {}
    for node in nodes:
        for rel, obj in kb.forward_edges(node):
            if obj.kind in kinds:
                rels.setdefault(rel)
    return list(rels)


def attach_constraints(kb: KnowledgeBase, main: MainPath, links: FocusLinks) -> list[QueryGraph]:
    """Staged constraint attachment over one main path.

    Entity constraints are expanded as a cross product (every grounded
    option in or out), then at most one type, one time, and one ordinal
    constraint are optionally added.  Constraints that cannot be grounded
    against the path's bindings simply produce no variant.  The bare main
    path is always the first output.
    """
    attach_points = (ANSWER, MEDIATOR) if main.hops == 2 else (ANSWER,)
    bindings = _main_bindings(kb, main)
    nodes_at = {point: _binding_nodes(bindings, point) for point in attach_points}

    entity_options: list[EntityConstraint] = []
    seen_opts: set = set()
    for el in links.entities:
        if el.entity == main.focus:
            continue
        for point in attach_points:
            for rel in _relations_to_entity(kb, nodes_at[point], el.entity):
                option = EntityConstraint(point, rel, el.entity)
                if option not in seen_opts:
                    seen_opts.add(option)
                    entity_options.append(option)

    type_options: list[TypeConstraint] = []
    for tl in links.types:
        option = TypeConstraint(tl.type_label)
        if option not in type_options:
            type_options.append(option)

    time_options: list[TimeConstraint] = []
    for tl in links.times:
        for point in attach_points:
            for rel in _valued_relations(kb, nodes_at[point], ("date",)):
                option = TimeConstraint(rel, tl.value, tl.comparator, point)
                if option not in time_options:
                    time_options.append(option)

    ordinal_options: list[OrdinalConstraint] = []
    for ol in links.ordinals:
        for point in attach_points:
            for rel in _valued_relations(kb, nodes_at[point], ("number", "date")):
                option = OrdinalConstraint(rel, ol.rank, ol.direction, point)
                if option not in ordinal_options:
                    ordinal_options.append(option)

    graphs: list[QueryGraph] = []
    seen_keys: set = set()
    for mask in range(1 << len(entity_options)):
        entity_subset = tuple(
            entity_options[i] for i in range(len(entity_options)) if mask >> i & 1
        )
        for type_c in (None, *type_options):
            for time_c in (None, *time_options):
                for ordinal_c in (None, *ordinal_options):
                    graph = QueryGraph(
                        main, entity_subset, type_c, time_c, ordinal_c, provenance=len(graphs)
                    )
                    key = graph.structure_key()
                    if key not in seen_keys:
                        seen_keys.add(key)
                        graphs.append(graph)
    return graphs


def generate_with_report(
    kb: KnowledgeBase, q: Question, resources: GenerationResources
) -> tuple[CandidateSet, GenerationReport]:
    """Full staged generation: link, enumerate paths, attach constraints."""
    report = GenerationReport()
    links = link_all(
        q,
        resources.lexicon,
        resources.embeddings,
        resources.kb_types,
        resources.ordinal_dict,
        resources.type_top_k,
    )
    report.entity_links = len(links.entities)
    if not links.entities:
        report.reason = "no entity link"
        return CandidateSet(q, []), report
    paths = enumerate_main_paths(kb, links, resources.limits, report)
    if not paths:
        report.reason = "no path"
        return CandidateSet(q, []), report
    graphs: list[QueryGraph] = []
    seen: set = set()
    for path in paths:
        for graph in attach_constraints(kb, path, links):
            report.raw_graphs += 1
            key = graph.structure_key()
            if key not in seen:
                seen.add(key)
                graphs.append(replace(graph, provenance=len(graphs)))
    report.candidates = len(graphs)
    return CandidateSet(q, graphs), report


def generate_candidates(
    kb: KnowledgeBase, q: Question, resources: GenerationResources
) -> CandidateSet:
    candidates, _report = generate_with_report(kb, q, resources)
    return candidates


def entity_name_tokens(eid: EntityId, names: dict[EntityId, str] | None) -> tuple[str, ...]:
    if names:
        name = names.get(eid)
        if name:
            return tuple(name.lower().split())
    return entity_id_tokens(eid)


def serialize(g: QueryGraph, names: dict[EntityId, str] | None = None) -> QueryGraphSequence:
    """Flatten a graph into its token sequence with recorded section spans.

    Sub-paths appear in the fixed order MainPath, TypePath, EntityPath,
    TimePath, OrdinalPath; absent sub-paths contribute nothing.  Entity
    names come from the display-name table, falling back to id tokens.
    """
    tokens: list[str] = []
    sections: dict[str, tuple[int, int]] = {}

    def emit(section: str, section_tokens: list[str]) -> None:
        if not section_tokens:
            return
        start = len(tokens)
        tokens.extend(section_tokens)
        sections[section] = (start, len(tokens))

    main_tokens = list(entity_name_tokens(g.main.focus, names))
    for rel in g.main.relations:
        main_tokens.extend(relation_name_tokens(rel))
    main_tokens.append("a")
    emit("MainPath", main_tokens)

    if g.type_constraint is not None:
        emit("TypePath", g.type_constraint.type_label.split())

    if g.entity_constraints:
        entity_tokens: list[str] = []
        for c in g.entity_constraints:
            entity_tokens.extend(relation_name_tokens(c.relation))
            entity_tokens.extend(entity_name_tokens(c.entity, names))
        emit("EntityPath", entity_tokens)

    if g.time_constraint is not None:
        c = g.time_constraint
        emit("TimePath", [*relation_name_tokens(c.relation), c.comparator, str(c.value.year)])

    if g.ordinal_constraint is not None:
        c = g.ordinal_constraint
        emit("OrdinalPath", [*relation_name_tokens(c.relation), c.direction, str(c.rank)])

    return QueryGraphSequence(tokens, sections)


_COMPARATOR_SIGN = {"equals": 0, "before": -1, "after": 1}


def _time_satisfied(kb, node: EntityId | None, c: TimeConstraint) -> bool:
    if node is None:
        return False
    want = _COMPARATOR_SIGN[c.comparator]
    for rel, obj in kb.forward_edges(node):
        if rel == c.relation and obj.kind == "date" and compare_dates(obj.value, c.value) == want:
            return True
    return False


def _ordinal_key(kb, node: EntityId | None, relation: RelationId):
    """First number- or date-valued object of the relation, as a sortable key."""
    if node is None:
        return None
    for rel, obj in kb.forward_edges(node):
        if rel != relation:
            continue
        if obj.kind == "date":
            return ("date", obj.value.sort_key())
        if obj.kind == "number":
            return ("number", (obj.value,))
    return None


def execute(kb: KnowledgeBase, g: QueryGraph) -> set[Node]:
    """Answers of a query graph: traverse, filter, then apply the ordinal.

    The mediator is bound as a variable even though generation recorded a
    witness.  The ordinal keeps every binding whose attribute equals the
    rank-th distinct value in the requested direction; bindings without a
    comparable attribute value are dropped.
    """
    bindings = _main_bindings(kb, g.main)
    for c in g.entity_constraints:
        bindings = [
            b
            for b in bindings
            if (node := _attach_entity(b, c.attach_point)) is not None
            and kb.has_edge(node, c.relation, c.entity)
        ]
    if g.type_constraint is not None:
        label = g.type_constraint.type_label
        bindings = [
            b
            for b in bindings
            if b[1].is_entity and label in kb.notable_types(b[1].entity_id)
        ]
    if g.time_constraint is not None:
        c = g.time_constraint
        bindings = [b for b in bindings if _time_satisfied(kb, _attach_entity(b, c.attach_point), c)]
    if g.ordinal_constraint is not None:
        c = g.ordinal_constraint
        keyed = []
        for b in bindings:
            key = _ordinal_key(kb, _attach_entity(b, c.attach_point), c.relation)
            if key is not None:
                keyed.append((key, b))
        if not keyed:
            return set()
        distinct = sorted({key for key, _ in keyed}, reverse=c.direction == "max")
        if c.rank > len(distinct):
            return set()
        target = distinct[c.rank - 1]
        bindings = [b for key, b in keyed if key == target]
    return {answer for _mediator, answer in bindings}
