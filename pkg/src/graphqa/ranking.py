"""Stage-one candidate selection: train and apply the sequence scorer.

Training uses grouped sampling: each positive graph is paired with N
negatives drawn uniformly from the same question, and a full-batch
gradient step runs per group on the mean cross-entropy loss.  The model
checkpoint with the best validation top-1 F1 wins.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import TrainingError
from .graphs import CandidateSet, QueryGraph, QueryGraphSequence, execute, serialize
from .kb import EntityId, KnowledgeBase, Node
from .linking import Question
from .matcher import Encoder, LinearHead, PairInput, grad_step, linear_score
from .metrics import question_prf, render_node


@dataclass
class LabeledCandidate:
    graph: QueryGraph
    sequence: QueryGraphSequence
    answers: frozenset[str]
    answer_nodes: frozenset[Node]
    f1: float
    label: int


@dataclass
class LabeledQuestion:
    qid: str
    question: Question
    gold: frozenset[str]
    candidates: list[LabeledCandidate]


@dataclass
class TrainingGroup:
    positive: LabeledCandidate
    negatives: list[LabeledCandidate]


@dataclass
class ScoredCandidate:
    graph: QueryGraph
    sequence: QueryGraphSequence
    rank_score: float
    type_score: float | None = None
    combined_score: float | None = None


@dataclass
class TrainConfig:
    negatives_per_positive: int = 10
    learning_rate: float = 0.01
    epochs: int = 5
    seed: int = 13
    top_n: int = 10


@dataclass
class RankModel:
    head: LinearHead
    encoder: Encoder
    config: dict = field(default_factory=dict)
    history: list[tuple[int, float]] = field(default_factory=list)


def label_candidates(
    candidates: CandidateSet,
    gold: set[str],
    kb: KnowledgeBase,
    names: dict[EntityId, str] | None = None,
) -> list[LabeledCandidate]:
    """Execute every candidate and label it against the gold answers.

    A candidate is positive when its answer F1 reaches 0.5; if none does,
    the best candidate with nonzero F1 is promoted so partially
    answerable questions still supervise training.
    """
    labeled = []
    for graph in candidates.graphs:
        nodes = execute(kb, graph)
        answers = frozenset(render_node(n, names) for n in nodes)
        _p, _r, f1 = question_prf(answers, gold)
        labeled.append(
            LabeledCandidate(
                graph,
                serialize(graph, names),
                answers,
                frozenset(nodes),
                f1,
                1 if f1 >= 0.5 else 0,
            )
        )
    if labeled and not any(c.label for c in labeled):
        best = None
        for c in labeled:
            if c.f1 > 0.0 and (best is None or c.f1 > best.f1):
                best = c
        if best is not None:
            best.label = 1
    return labeled


def sample_groups(
    labeled: list[LabeledCandidate], n_negatives: int, seed: int
) -> list[TrainingGroup]:
    """One group per positive: the positive plus up to N uniform negatives."""
    if n_negatives < 1:
        raise ValueError(f"group size must be >= 1, got {n_negatives}")
    positives = [c for c in labeled if c.label == 1]
    negatives = [c for c in labeled if c.label == 0]
    rng = np.random.default_rng(seed)
    groups = []
    for positive in positives:
        if len(negatives) <= n_negatives:
            chosen = list(negatives)
        else:
            idx = rng.choice(len(negatives), size=n_negatives, replace=False)
            chosen = [negatives[i] for i in idx]
        groups.append(TrainingGroup(positive, chosen))
    return groups


def _mix_seed(seed: int, epoch: int, question_index: int) -> int:
    # splitmix-style integer hash; only determinism matters here
    x = (seed * 0x9E3779B97F4A7C15 + epoch * 0xBF58476D1CE4E5B9 + question_index * 0x94D049BB133111EB) & (
        2**63 - 1
    )
    x ^= x >> 31
    return x


def candidate_features(encoder: Encoder, question: Question, c: LabeledCandidate) -> np.ndarray:
    return encoder(PairInput(question, tuple(c.sequence.tokens), c.sequence.sections))


def _question_features(encoder: Encoder, lq: LabeledQuestion) -> np.ndarray:
    if not lq.candidates:
        return np.zeros((0, encoder.dimension))
    return np.stack([candidate_features(encoder, lq.question, c) for c in lq.candidates])


def _ranked_order(scores: np.ndarray, candidates: list[LabeledCandidate]) -> list[int]:
    return sorted(
        range(len(candidates)),
        key=lambda i: (-scores[i], candidates[i].graph.provenance),
    )


def _validation_top1_f1(
    head: LinearHead, questions: list[LabeledQuestion], features: list[np.ndarray]
) -> float:
    if not questions:
        return 0.0
    total = 0.0
    for lq, f in zip(questions, features):
        if not lq.candidates:
            continue
        scores = f @ head.weights + head.bias
        order = _ranked_order(scores, lq.candidates)
        total += lq.candidates[order[0]].f1
    return total / len(questions)


def train_ranker(
    train: list[LabeledQuestion],
    valid: list[LabeledQuestion],
    config: TrainConfig,
    encoder: Encoder,
) -> RankModel:
    """Epochs of grouped full-batch gradient descent with validation selection.

    Groups are resampled each epoch from a seed derived from (seed, epoch,
    question index), so the whole trajectory is reproducible.  Returns the
    checkpoint with the highest validation top-1 F1; ties keep the earlier
    epoch.
    """
    if not train:
        raise TrainingError("empty training set")
    train_features = [_question_features(encoder, lq) for lq in train]
    valid_features = [_question_features(encoder, lq) for lq in valid]
    feature_rows = [
        {id(c): f[i] for i, c in enumerate(lq.candidates)}
        for lq, f in zip(train, train_features)
    ]

    head = LinearHead.zeros(encoder.dimension)
    best_score = _validation_top1_f1(head, valid, valid_features)
    best_head = head.copy()
    history = [(0, best_score)]
    for epoch in range(1, config.epochs + 1):
        for qi, lq in enumerate(train):
            rows = feature_rows[qi]
            groups = sample_groups(
                lq.candidates, config.negatives_per_positive, _mix_seed(config.seed, epoch, qi)
            )
            for group in groups:
                members = [group.positive, *group.negatives]
                batch = [(rows[id(c)], c.label) for c in members]
                head = grad_step(head, batch, config.learning_rate)
        score = _validation_top1_f1(head, valid, valid_features)
        history.append((epoch, score))
        if score > best_score:
            best_score = score
            best_head = head.copy()
    return RankModel(best_head, encoder, asdict(config), history)


def rank_candidates(
    model: RankModel,
    candidates: CandidateSet,
    names: dict[EntityId, str] | None = None,
) -> list[ScoredCandidate]:
    """Score and sort every candidate; ties break by generation order."""
    scored = []
    for graph in candidates.graphs:
        sequence = serialize(graph, names)
        f = model.encoder(PairInput(candidates.question, tuple(sequence.tokens), sequence.sections))
        scored.append(ScoredCandidate(graph, sequence, linear_score(f, model.head)))
    scored.sort(key=lambda c: (-c.rank_score, c.graph.provenance))
    return scored


def rank_labeled(
    model: RankModel, question: Question, candidates: list[LabeledCandidate]
) -> list[LabeledCandidate]:
    """Sort already-labeled candidates by the model score, same tie-break."""
    if not candidates:
        return []
    scores = np.array(
        [linear_score(candidate_features(model.encoder, question, c), model.head) for c in candidates]
    )
    return [candidates[i] for i in _ranked_order(scores, candidates)]


def top_n(ranked: list, n: int) -> list:
    """First min(n, len) elements, order preserved."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    return list(ranked[:n])
