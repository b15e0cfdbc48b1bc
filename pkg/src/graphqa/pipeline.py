"""End-to-end orchestration: datasets, answering, and model persistence."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import LoadError, ModelError, ParseError
from .graphs import GenerationResources, execute, generate_with_report
from .kb import KnowledgeBase
from .linking import parse_question
from .matcher import Encoder, LinearHead
from .metrics import render_node
from .ranking import RankModel, ScoredCandidate, label_candidates, LabeledQuestion, rank_candidates, top_n
from .reranking import RerankModel, rerank

MODEL_FORMAT = "graphqa-model"
MODEL_VERSION = 1


@dataclass
class QAPair:
    qid: str
    question: str
    answers: tuple[str, ...]


def load_dataset(path) -> list[QAPair]:
    """Read newline-delimited JSON: one {id, question, answers} object per line."""
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise LoadError(p, exc) from exc
    pairs = []
    for line_no, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            qid, question = str(obj["id"]), str(obj["question"])
            answers = tuple(str(a) for a in obj["answers"])
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise ParseError(path, line_no, str(exc)) from exc
        pairs.append(QAPair(qid, question, answers))
    return pairs


def save_dataset(path, pairs: list[QAPair]) -> None:
    lines = [
        json.dumps(
            {"id": p.qid, "question": p.question, "answers": list(p.answers)},
            sort_keys=True,
        )
        for p in pairs
    ]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")


def label_question(
    kb: KnowledgeBase, resources: GenerationResources, qa: QAPair
) -> LabeledQuestion:
    """Generate and label one question's candidate set."""
    question = parse_question(qa.question)
    candidates, _report = generate_with_report(kb, question, resources)
    labeled = label_candidates(candidates, set(qa.answers), kb, resources.names)
    return LabeledQuestion(qa.qid, question, frozenset(qa.answers), labeled)


def _scored_summary(sc: ScoredCandidate) -> dict:
    return {
        "provenance": sc.graph.provenance,
        "sequence": " ".join(sc.sequence.tokens),
        "rank_score": sc.rank_score,
        "type_score": sc.type_score,
        "combined_score": sc.combined_score,
    }


def answer_question(
    question_text: str,
    kb: KnowledgeBase,
    resources: GenerationResources,
    rank_model: RankModel,
    rerank_model: RerankModel | None,
    n: int,
) -> tuple[set[str], dict]:
    """generate -> rank -> top-n -> rerank -> execute the argmax graph.

    Returns the rendered answer set and a trace of what happened; an empty
    candidate set yields an empty answer set with the reason recorded.
    """
    question = parse_question(question_text)
    candidates, report = generate_with_report(kb, question, resources)
    trace: dict = {
        "question": question_text,
        "entity_links": report.entity_links,
        "main_paths": report.main_paths,
        "candidates": report.candidates,
    }
    if not candidates.graphs:
        trace["reason"] = report.reason
        trace["answers"] = []
        return set(), trace
    ranked = rank_candidates(rank_model, candidates, resources.names)
    shortlist = top_n(ranked, n)
    final = rerank(rerank_model, shortlist, question, kb) if rerank_model else shortlist
    chosen = final[0]
    answers = {render_node(node, resources.names) for node in execute(kb, chosen.graph)}
    trace["top_n"] = [_scored_summary(sc) for sc in final]
    trace["chosen"] = _scored_summary(chosen)
    trace["answers"] = sorted(answers)
    return answers, trace


def _head_to_dict(head: LinearHead) -> dict:
    return {"weights": [float(w) for w in head.weights], "bias": float(head.bias)}


def _head_from_dict(obj: dict, dimension: int) -> LinearHead:
    weights = np.array([float(w) for w in obj["weights"]], dtype=float)
    if len(weights) != dimension:
        raise ModelError(f"head dimension {len(weights)} does not match {dimension}")
    return LinearHead(weights, float(obj["bias"]))


def save_model(path, model: RankModel | RerankModel) -> None:
    """Persist a model as JSON; floats round-trip bit-exactly via repr."""
    if isinstance(model, RankModel):
        payload = {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "kind": "rank",
            "dimension": model.head.dimension,
            "weights": _head_to_dict(model.head)["weights"],
            "bias": float(model.head.bias),
            "config": model.config,
            "history": [[epoch, score] for epoch, score in model.history],
        }
    elif isinstance(model, RerankModel):
        payload = {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "kind": "rerank",
            "dimension": model.seq_head.dimension,
            "seq_head": _head_to_dict(model.seq_head),
            "type_head": _head_to_dict(model.type_head),
            "use_type": model.use_type,
            "config": model.config,
            "history": [[epoch, score] for epoch, score in model.history],
        }
    else:
        raise ModelError(f"cannot save model of type {type(model).__name__}")
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def load_model(path, encoder: Encoder) -> RankModel | RerankModel:
    """Load a model file; any malformation raises ModelError with no partial state."""
    p = Path(path)
    try:
        payload = json.loads(p.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ModelError(f"cannot read model file {p}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ModelError(f"malformed model file {p}: {exc}") from exc
    try:
        if payload["format"] != MODEL_FORMAT:
            raise ModelError(f"unknown model format {payload['format']!r}")
        if payload["version"] != MODEL_VERSION:
            raise ModelError(f"unsupported model version {payload['version']!r}")
        dimension = int(payload["dimension"])
        if dimension != encoder.dimension:
            raise ModelError(
                f"model dimension {dimension} does not match encoder {encoder.dimension}"
            )
        kind = payload["kind"]
        if kind == "rank":
            head = _head_from_dict({"weights": payload["weights"], "bias": payload["bias"]}, dimension)
            return RankModel(
                head,
                encoder,
                payload.get("config", {}),
                [tuple(item) for item in payload.get("history", [])],
            )
        if kind == "rerank":
            return RerankModel(
                _head_from_dict(payload["seq_head"], dimension),
                _head_from_dict(payload["type_head"], dimension),
                encoder,
                bool(payload.get("use_type", True)),
                payload.get("config", {}),
                [tuple(item) for item in payload.get("history", [])],
            )
        raise ModelError(f"unknown model kind {kind!r}")
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelError(f"malformed model file {p}: {exc}") from exc
