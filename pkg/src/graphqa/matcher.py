"""Question/sequence pair scoring: features, linear head, and training math.

The neural encoder of the original design is abstracted behind a small
contract: anything callable from a PairInput to a fixed-dimension feature
vector.  The built-in baseline computes eight deterministic lexical
features, which keeps the scoring and gradient math exactly checkable.
An external process speaking a line-delimited JSON protocol can be
plugged in as an alternative scorer.
"""

from __future__ import annotations

import json
import math
import subprocess
from dataclasses import dataclass
from typing import Callable, Mapping, Protocol

import numpy as np

from .errors import GraphQAError, TrainingError
from .linking import Question, WordEmbeddings, cosine

FEATURE_DIMENSION = 8
PROB_EPS = 1e-12

CONSTRAINT_SECTION_NAMES = ("TypePath", "EntityPath", "TimePath", "OrdinalPath")

# Function words excluded from the content-coverage feature.
STOPWORDS = frozenset(
    """a an the of in on at by to for with and or is are was were be been being
    do does did who what when where which whom whose why how it its that this
    these those as from into over under s""".split()
)


@dataclass(frozen=True)
class PairInput:
    """A question paired with a token sequence to score against it.

    ``sections`` carries the sequence's sub-path spans when the sequence
    came from a serialized query graph; answer-type sequences have none.
    """

    question: Question
    sequence: tuple[str, ...]
    sections: Mapping[str, tuple[int, int]] | None = None


@dataclass
class LinearHead:
    weights: np.ndarray
    bias: float

    @classmethod
    def zeros(cls, dimension: int = FEATURE_DIMENSION) -> "LinearHead":
        return cls(np.zeros(dimension), 0.0)

    def copy(self) -> "LinearHead":
        return LinearHead(self.weights.copy(), self.bias)

    @property
    def dimension(self) -> int:
        return len(self.weights)


class Encoder(Protocol):
    dimension: int

    def __call__(self, pair: PairInput) -> np.ndarray: ...


def featurize_pair(pair: PairInput, emb: WordEmbeddings) -> np.ndarray:
    """The eight baseline features, in fixed order.

    1. cosine of mean embeddings (0 when either mean is the zero vector)
    2. token Jaccard overlap
    3. coverage of the question's distinct content tokens by the sequence
    4. coverage of the sequence's distinct tokens by the question
    5. normalized length difference |m-n|/(m+n)
    6. two-hop indicator: the MainPath section's final "a" is preceded by
       at least 7 tokens (0 without section metadata)
    7. constraint sections present / 4 (0 without section metadata)
    8. constant intercept 1
    """
    q_tokens = pair.question.tokens
    s_tokens = pair.sequence
    q_set, s_set = set(q_tokens), set(s_tokens)
    f = np.zeros(FEATURE_DIMENSION)
    f[0] = cosine(emb.mean(q_tokens), emb.mean(s_tokens))
    union = q_set | s_set
    if union:
        f[1] = len(q_set & s_set) / len(union)
    content = q_set - STOPWORDS
    if content:
        f[2] = len(content & s_set) / len(content)
    if s_set:
        f[3] = len(s_set & q_set) / len(s_set)
    if q_tokens or s_tokens:
        f[4] = abs(len(q_tokens) - len(s_tokens)) / (len(q_tokens) + len(s_tokens))
    if pair.sections:
        span = pair.sections.get("MainPath")
        if span is not None and span[1] - span[0] >= 8:
            f[5] = 1.0
        f[6] = sum(name in pair.sections for name in CONSTRAINT_SECTION_NAMES) / 4.0
    f[7] = 1.0
    return f


class BaselineEncoder:
    """The deterministic 8-feature encoder over a fixed embedding table."""

    dimension = FEATURE_DIMENSION

    def __init__(self, emb: WordEmbeddings):
        self.emb = emb

    def __call__(self, pair: PairInput) -> np.ndarray:
        return featurize_pair(pair, self.emb)


def linear_score(f: np.ndarray, head: LinearHead) -> float:
    """f . weights + bias."""
    f = np.asarray(f, dtype=float)
    if f.shape != head.weights.shape:
        raise ValueError(f"feature dimension {f.shape} does not match head {head.weights.shape}")
    return float(np.dot(f, head.weights) + head.bias)


def sigmoid(x: float) -> float:
    """Numerically stable logistic function."""
    if x >= 0:
        z = math.exp(-x)
        return 1.0 / (1.0 + z)
    z = math.exp(x)
    return z / (1.0 + z)


def bce_loss(s: float, y: int) -> float:
    """Binary cross-entropy with probability clamped away from 0 and 1."""
    s = min(max(s, PROB_EPS), 1.0 - PROB_EPS)
    return -(y * math.log(s) + (1 - y) * math.log(1.0 - s))


def grad_step(
    head: LinearHead, batch: list[tuple[np.ndarray, int]], lr: float
) -> LinearHead:
    """One full-batch gradient-descent step on the mean BCE loss.

    The per-example gradient of the loss w.r.t. the linear score is
    (sigmoid(score) - y), so the weight gradient is the feature-weighted
    mean of those residuals.
    """
    if lr <= 0:
        raise ValueError(f"learning rate must be positive, got {lr}")
    if not batch:
        raise TrainingError("empty training batch")
    grad_w = np.zeros_like(head.weights)
    grad_b = 0.0
    for f, y in batch:
        residual = sigmoid(linear_score(f, head)) - y
        grad_w += residual * np.asarray(f, dtype=float)
        grad_b += residual
    grad_w /= len(batch)
    grad_b /= len(batch)
    if not (np.all(np.isfinite(grad_w)) and math.isfinite(grad_b)):
        raise TrainingError("non-finite gradient")
    return LinearHead(head.weights - lr * grad_w, head.bias - lr * grad_b)


class ExternalScorer:
    """Client for the external-scorer protocol over a child process.

    Requests are line-delimited JSON objects {"id", "question",
    "sequence"} written to the child's stdin; responses {"id", "score"}
    may arrive in any order and are matched back by id.
    """

    def __init__(self, command: list[str]):
        self._proc = subprocess.Popen(
            command,
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            text=True,
            bufsize=1,
        )
        self._next_id = 0

    def score(self, pairs: list[tuple[str, str]]) -> list[float]:
        if not pairs:
            return []
        if self._proc.poll() is not None:
            raise GraphQAError("external scorer process has exited")
        ids = []
        for question, sequence in pairs:
            request_id = str(self._next_id)
            self._next_id += 1
            ids.append(request_id)
            self._proc.stdin.write(
                json.dumps(
                    {"id": request_id, "question": question, "sequence": sequence}
                )
                + "\n"
            )
        self._proc.stdin.flush()
        results: dict[str, float] = {}
        pending = set(ids)
        while pending:
            line = self._proc.stdout.readline()
            if not line:
                raise GraphQAError("external scorer closed its output stream")
            try:
                message = json.loads(line)
                response_id, score = message["id"], float(message["score"])
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise GraphQAError(f"malformed scorer response: {line!r}") from exc
            if response_id not in pending:
                raise GraphQAError(f"unexpected scorer response id: {response_id!r}")
            pending.remove(response_id)
            results[response_id] = score
        return [results[i] for i in ids]

    def close(self) -> None:
        if self._proc.poll() is None:
            self._proc.stdin.close()
            self._proc.wait(timeout=10)

    def __enter__(self) -> "ExternalScorer":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


class ExternalScorerEncoder:
    """Adapter exposing an external scorer through the encoder contract.

    The external score lands in feature slot 0 with the intercept kept in
    the last slot, so linear heads and the training math apply unchanged.
    """

    dimension = FEATURE_DIMENSION

    def __init__(self, scorer: ExternalScorer):
        self.scorer = scorer

    def __call__(self, pair: PairInput) -> np.ndarray:
        score = self.scorer.score(
            [(" ".join(pair.question.tokens), " ".join(pair.sequence))]
        )[0]
        f = np.zeros(FEATURE_DIMENSION)
        f[0] = score
        f[7] = 1.0
        return f


EncoderFactory = Callable[[WordEmbeddings], Encoder]
