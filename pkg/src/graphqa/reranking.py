"""Stage-two selection: rescore top-n candidates with an answer-type channel.

The reranker trains two fresh linear heads jointly on the ranking stage's
top-n output: one over the question/sequence features, one over the
question/answer-type features.  The final score is their exact sum.
The type sequence of a graph is built from the notable types of its
retrieved answers.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import TrainingError
from .graphs import QueryGraph, execute
from .kb import KnowledgeBase, Node
from .linking import Question
from .matcher import Encoder, LinearHead, PairInput, linear_score, sigmoid
from .ranking import (
    LabeledCandidate,
    LabeledQuestion,
    RankModel,
    ScoredCandidate,
    TrainConfig,
    rank_labeled,
    top_n,
)


@dataclass(frozen=True)
class TypeSequence:
    tokens: tuple[str, ...]


@dataclass
class RerankCandidate:
    labeled: LabeledCandidate
    type_sequence: TypeSequence


@dataclass
class RerankQuestion:
    qid: str
    question: Question
    gold: frozenset[str]
    candidates: list[RerankCandidate]


@dataclass
class RerankModel:
    seq_head: LinearHead
    type_head: LinearHead
    encoder: Encoder
    use_type: bool = True
    config: dict = field(default_factory=dict)
    history: list[tuple[int, float]] = field(default_factory=list)


def type_sequence_for_nodes(kb: KnowledgeBase, nodes) -> TypeSequence:
    """Notable-type labels of entity answers: deduplicated, sorted, flattened."""
    labels = sorted(
        {
            label
            for node in nodes
            if isinstance(node, Node) and node.is_entity
            for label in kb.notable_types(node.entity_id)
        }
    )
    return TypeSequence(tuple(t for label in labels for t in label.split()))


def answer_type_sequence(kb: KnowledgeBase, g: QueryGraph) -> TypeSequence:
    """Execute the graph and collect its answers' notable types."""
    return type_sequence_for_nodes(kb, execute(kb, g))


def type_score(model: RerankModel, question: Question, t: TypeSequence) -> float:
    """The answer-type channel's linear score for one question/type pair."""
    f_t = _type_features(model, question, t)
    return linear_score(f_t, model.type_head)


def combine_scores(s_prime: float, s_double_prime: float) -> float:
    """The final matching score: the exact sum of the two channels."""
    return s_prime + s_double_prime


def _type_features(model: RerankModel, question: Question, t: TypeSequence) -> np.ndarray:
    if not model.use_type:
        return np.zeros(model.encoder.dimension)
    return model.encoder(PairInput(question, t.tokens))


def build_rerank_training(
    rank_model: RankModel,
    questions: list[LabeledQuestion],
    n: int,
    kb: KnowledgeBase,
) -> list[RerankQuestion]:
    """Keep each question's top-n ranked candidates, with type sequences attached.

    Labels carry over from ranking-time labeling.  Questions whose top-n
    holds no positive stay in: all-negative lists still push scores down.
    """
    out = []
    for lq in questions:
        ranked = top_n(rank_labeled(rank_model, lq.question, lq.candidates), n)
        candidates = [
            RerankCandidate(c, type_sequence_for_nodes(kb, c.answer_nodes)) for c in ranked
        ]
        out.append(RerankQuestion(lq.qid, lq.question, lq.gold, candidates))
    return out


def _joint_step(
    seq_head: LinearHead,
    type_head: LinearHead,
    batch: list[tuple[np.ndarray, np.ndarray, int]],
    lr: float,
) -> tuple[LinearHead, LinearHead]:
    """One full-batch step on mean BCE of sigmoid(seq score + type score)."""
    grad_w = np.zeros_like(seq_head.weights)
    grad_wt = np.zeros_like(type_head.weights)
    grad_b = 0.0
    grad_bt = 0.0
    for f, f_t, y in batch:
        s = sigmoid(linear_score(f, seq_head) + linear_score(f_t, type_head))
        residual = s - y
        grad_w += residual * f
        grad_b += residual
        grad_wt += residual * f_t
        grad_bt += residual
    size = len(batch)
    grad_w /= size
    grad_b /= size
    grad_wt /= size
    grad_bt /= size
    if not (
        np.all(np.isfinite(grad_w))
        and np.all(np.isfinite(grad_wt))
        and math.isfinite(grad_b)
        and math.isfinite(grad_bt)
    ):
        raise TrainingError("non-finite gradient")
    return (
        LinearHead(seq_head.weights - lr * grad_w, seq_head.bias - lr * grad_b),
        LinearHead(type_head.weights - lr * grad_wt, type_head.bias - lr * grad_bt),
    )


def _candidate_features(encoder: Encoder, question: Question, c: RerankCandidate) -> np.ndarray:
    seq = c.labeled.sequence
    return encoder(PairInput(question, tuple(seq.tokens), seq.sections))


def _rerank_order(
    seq_head: LinearHead,
    type_head: LinearHead,
    features: list[tuple[np.ndarray, np.ndarray]],
) -> list[int]:
    combined = [
        linear_score(f, seq_head) + linear_score(f_t, type_head) for f, f_t in features
    ]
    return sorted(range(len(features)), key=lambda i: (-combined[i], i))


def _validation_top1_f1(
    seq_head: LinearHead,
    type_head: LinearHead,
    questions: list[RerankQuestion],
    features: list[list[tuple[np.ndarray, np.ndarray]]],
) -> float:
    if not questions:
        return 0.0
    total = 0.0
    for rq, feats in zip(questions, features):
        if not rq.candidates:
            continue
        order = _rerank_order(seq_head, type_head, feats)
        total += rq.candidates[order[0]].labeled.f1
    return total / len(questions)


def train_reranker(
    train: list[RerankQuestion],
    valid: list[RerankQuestion],
    config: TrainConfig,
    encoder: Encoder,
    use_type: bool = True,
) -> RerankModel:
    """Joint gradient descent on both heads over the top-n training lists.

    Heads start fresh at zero (no weight sharing with the ranker).  Each
    question's list is one batch per epoch; no resampling happens because
    the top-n lists already fix the training data.  Model selection is by
    validation top-1 F1 after reranking.  ``use_type=False`` ablates the
    answer-type channel by zeroing its features.
    """
    if not train:
        raise TrainingError("empty rerank training set")
    model = RerankModel(
        LinearHead.zeros(encoder.dimension),
        LinearHead.zeros(encoder.dimension),
        encoder,
        use_type,
        asdict(config),
    )

    def features_of(questions):
        return [
            [
                (
                    _candidate_features(encoder, rq.question, c),
                    _type_features(model, rq.question, c.type_sequence),
                )
                for c in rq.candidates
            ]
            for rq in questions
        ]

    train_features = features_of(train)
    valid_features = features_of(valid)
    seq_head = model.seq_head
    type_head = model.type_head
    best_score = _validation_top1_f1(seq_head, type_head, valid, valid_features)
    best = (seq_head.copy(), type_head.copy())
    history = [(0, best_score)]
    for epoch in range(1, config.epochs + 1):
        for feats, rq in zip(train_features, train):
            if not rq.candidates:
                continue
            batch = [
                (f, f_t, c.labeled.label) for (f, f_t), c in zip(feats, rq.candidates)
            ]
            seq_head, type_head = _joint_step(seq_head, type_head, batch, config.learning_rate)
        score = _validation_top1_f1(seq_head, type_head, valid, valid_features)
        history.append((epoch, score))
        if score > best_score:
            best_score = score
            best = (seq_head.copy(), type_head.copy())
    model.seq_head, model.type_head = best
    model.history = history
    return model


def rerank_labeled(
    model: RerankModel,
    question: Question,
    candidates: list[LabeledCandidate],
    kb: KnowledgeBase,
) -> list[LabeledCandidate]:
    """Sort labeled candidates by the combined score, reusing stored answers."""
    if not candidates:
        return []
    features = []
    for c in candidates:
        f = model.encoder(PairInput(question, tuple(c.sequence.tokens), c.sequence.sections))
        f_t = _type_features(model, question, type_sequence_for_nodes(kb, c.answer_nodes))
        features.append((f, f_t))
    order = _rerank_order(model.seq_head, model.type_head, features)
    return [candidates[i] for i in order]


def rerank(
    model: RerankModel,
    topn: list[ScoredCandidate],
    question: Question,
    kb: KnowledgeBase,
) -> list[ScoredCandidate]:
    """Rescore the top-n list with both channels and sort by the sum.

    Output is a permutation of the input; ties keep the incoming order.
    """
    rescored = []
    for position, sc in enumerate(topn):
        f = model.encoder(PairInput(question, tuple(sc.sequence.tokens), sc.sequence.sections))
        s_prime = linear_score(f, model.seq_head)
        t = answer_type_sequence(kb, sc.graph)
        s_double_prime = linear_score(_type_features(model, question, t), model.type_head)
        rescored.append(
            (
                position,
                ScoredCandidate(
                    sc.graph,
                    sc.sequence,
                    s_prime,
                    s_double_prime,
                    combine_scores(s_prime, s_double_prime),
                ),
            )
        )
    rescored.sort(key=lambda pc: (-pc[1].combined_score, pc[0]))
    return [c for _pos, c in rescored]
