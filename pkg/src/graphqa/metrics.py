"""Answer-set metrics: per-question P/R/F1, averages, and oracle curves."""

from __future__ import annotations

from dataclasses import dataclass

from .kb import EntityId, Node, entity_id_tokens


def normalize_answer(s: str) -> str:
    return " ".join(s.lower().split())


def render_node(node: Node, names: dict[EntityId, str] | None = None) -> str:
    """Display string of an answer node, comparable with dataset gold strings."""
    if node.kind == "entity":
        if names:
            name = names.get(node.value)
            if name:
                return name
        return " ".join(entity_id_tokens(node.value))
    if node.kind == "string":
        return node.value
    if node.kind == "number":
        if float(node.value).is_integer():
            return str(int(node.value))
        return repr(float(node.value))
    return node.value.render()


def question_prf(predicted: set[str], gold: set[str]) -> tuple[float, float, float]:
    """Precision, recall, F1 of one question's answers.

    Strings are compared after lowercase/whitespace normalization.  Empty
    predictions score zero precision; gold must be non-empty.
    """
    pred_norm = {normalize_answer(s) for s in predicted}
    gold_norm = {normalize_answer(s) for s in gold}
    if not gold_norm:
        raise ValueError("gold answer set must be non-empty")
    hits = len(pred_norm & gold_norm)
    precision = hits / len(pred_norm) if pred_norm else 0.0
    recall = hits / len(gold_norm)
    if precision + recall == 0.0:
        return (precision, recall, 0.0)
    return (precision, recall, 2 * precision * recall / (precision + recall))


@dataclass
class QuestionRecord:
    qid: str
    precision: float
    recall: float
    f1: float


@dataclass
class EvalResult:
    avg_precision: float
    avg_recall: float
    avg_f1: float
    records: list[QuestionRecord]

    def to_dict(self) -> dict:
        return {
            "avg_precision": self.avg_precision,
            "avg_recall": self.avg_recall,
            "avg_f1": self.avg_f1,
            "questions": len(self.records),
        }


def evaluate(items: list[tuple[str, set[str], set[str]]]) -> EvalResult:
    """Average P/R/F1 over (id, predicted, gold) items.

    Every question counts, so unanswered ones pull the averages down with
    zeros.
    """
    records = []
    for qid, predicted, gold in items:
        p, r, f1 = question_prf(predicted, gold)
        records.append(QuestionRecord(qid, p, r, f1))
    n = len(records)
    if n == 0:
        return EvalResult(0.0, 0.0, 0.0, [])
    return EvalResult(
        sum(r.precision for r in records) / n,
        sum(r.recall for r in records) / n,
        sum(r.f1 for r in records) / n,
        records,
    )


@dataclass
class OracleCurve:
    points: list[tuple[int, float]]

    def to_csv(self) -> str:
        lines = ["n,oracle_f1"]
        for n, f1 in self.points:
            lines.append(f"{n},{f1!r}")
        return "\n".join(lines) + "\n"


def oracle_curve(f1_lists: list[list[float]], n_max: int) -> OracleCurve:
    """Best achievable average F1 when choosing freely within the top n.

    ``f1_lists`` holds each question's per-candidate F1 values in ranked
    order; an empty list means the question has no candidates and scores 0.
    """
    if n_max < 1:
        raise ValueError(f"n_max must be >= 1, got {n_max}")
    points = []
    for n in range(1, n_max + 1):
        total = 0.0
        for f1s in f1_lists:
            total += max(f1s[:n], default=0.0)
        points.append((n, total / len(f1_lists) if f1_lists else 0.0))
    return OracleCurve(points)
