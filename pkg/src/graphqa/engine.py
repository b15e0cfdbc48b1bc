"""Configuration loading and the Engine facade used by the service and CLI.

The engine owns the loaded knowledge base, linking resources, and models.
Resources load lazily and are immutable afterwards, so answering requests
may run concurrently; training is synchronous and single-threaded.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path

from .errors import GraphQAError, LoadError, ModelError
from .graphs import GenerationResources, SearchLimits, generate_with_report
from .kb import KnowledgeBase, load_kb, load_names
from .linking import link_all, load_embeddings, load_lexicon, load_ordinal_dict, parse_question
from .matcher import BaselineEncoder, ExternalScorer, ExternalScorerEncoder
from .metrics import EvalResult, OracleCurve, evaluate, oracle_curve
from .pipeline import (
    QAPair,
    answer_question,
    label_question,
    load_dataset,
    load_model,
    save_model,
)
from .ranking import RankModel, TrainConfig, rank_labeled, top_n, train_ranker
from .reranking import RerankModel, build_rerank_training, rerank_labeled, train_reranker

SPLITS = ("train", "validation", "test")


@dataclass
class EngineConfig:
    kb_triples: Path
    kb_types: Path
    names: Path
    lexicon: Path
    embeddings: Path
    ordinal_dict: Path
    datasets: dict[str, Path]
    rank_model: Path
    rerank_model: Path
    negatives_per_positive: int = 10
    learning_rate: float = 0.01
    epochs: int = 5
    seed: int = 13
    top_n: int = 10
    type_top_k: int = 10
    one_hop_limit: int = 256
    two_hop_limit: int = 1024
    external_scorer: list[str] | None = None

    @classmethod
    def from_file(cls, path) -> "EngineConfig":
        p = Path(path)
        try:
            raw = json.loads(p.read_text(encoding="utf-8"))
        except OSError as exc:
            raise LoadError(p, exc) from exc
        except json.JSONDecodeError as exc:
            raise LoadError(p, f"invalid JSON: {exc}") from exc
        base = p.parent

        def resolve(key):
            if key not in raw:
                raise LoadError(p, f"missing config key {key!r}")
            return (base / raw[key]).resolve()

        datasets = {}
        for split in SPLITS:
            value = raw.get("datasets", {}).get(split)
            if value is None:
                raise LoadError(p, f"missing datasets.{split}")
            datasets[split] = (base / value).resolve()
        kwargs = {}
        for key in (
            "negatives_per_positive",
            "learning_rate",
            "epochs",
            "seed",
            "top_n",
            "type_top_k",
            "one_hop_limit",
            "two_hop_limit",
            "external_scorer",
        ):
            if key in raw:
                kwargs[key] = raw[key]
        return cls(
            kb_triples=resolve("kb_triples"),
            kb_types=resolve("kb_types"),
            names=resolve("names"),
            lexicon=resolve("lexicon"),
            embeddings=resolve("embeddings"),
            ordinal_dict=resolve("ordinal_dict"),
            datasets=datasets,
            rank_model=(base / raw.get("rank_model", "models/rank.json")).resolve(),
            rerank_model=(base / raw.get("rerank_model", "models/rerank.json")).resolve(),
            **kwargs,
        )

    def train_config(self, **overrides) -> TrainConfig:
        config = TrainConfig(
            negatives_per_positive=self.negatives_per_positive,
            learning_rate=self.learning_rate,
            epochs=self.epochs,
            seed=self.seed,
            top_n=self.top_n,
        )
        clean = {k: v for k, v in overrides.items() if v is not None}
        return replace(config, **clean)


class Engine:
    """Loads resources once and exposes every pipeline operation."""

    def __init__(self, config: EngineConfig):
        self.config = config
        self._labeled_cache: dict[tuple, list] = {}

    @cached_property
    def kb(self) -> KnowledgeBase:
        return load_kb(self.config.kb_triples, self.config.kb_types)

    @cached_property
    def embeddings(self):
        return load_embeddings(self.config.embeddings)

    @cached_property
    def encoder(self):
        if self.config.external_scorer:
            return ExternalScorerEncoder(ExternalScorer(self.config.external_scorer))
        return BaselineEncoder(self.embeddings)

    @cached_property
    def resources(self) -> GenerationResources:
        return GenerationResources(
            lexicon=load_lexicon(self.config.lexicon),
            embeddings=self.embeddings,
            kb_types=self.kb.all_type_labels(),
            ordinal_dict=load_ordinal_dict(self.config.ordinal_dict),
            names=load_names(self.config.names),
            type_top_k=self.config.type_top_k,
            limits=SearchLimits(self.config.one_hop_limit, self.config.two_hop_limit),
        )

    # ------------------------------------------------------------------
    # inspection

    def kb_stats(self) -> dict:
        kb = self.kb
        return {
            "triples": len(kb),
            "entities": len(kb.entities()),
            "relations": len(kb.relations()),
            "type_labels": len(kb.all_type_labels()),
        }

    def link(self, question_text: str) -> dict:
        q = parse_question(question_text)
        r = self.resources
        links = link_all(q, r.lexicon, r.embeddings, r.kb_types, r.ordinal_dict, r.type_top_k)
        return {
            "tokens": list(q.tokens),
            "entities": [
                {"mention": el.mention.text, "entity": el.entity, "score": el.link_score}
                for el in links.entities
            ],
            "types": [
                {"mention": tl.mention.text, "type": tl.type_label, "similarity": tl.similarity}
                for tl in links.types
            ],
            "times": [
                {"mention": tl.mention.text, "value": tl.value.render(), "comparator": tl.comparator}
                for tl in links.times
            ],
            "ordinals": [
                {
                    "mention": ol.mention.text,
                    "rank": ol.rank,
                    "direction": ol.direction,
                    "trigger": ol.trigger,
                }
                for ol in links.ordinals
            ],
        }

    def generate(self, question_text: str, include_report: bool = False) -> dict:
        from .graphs import serialize

        q = parse_question(question_text)
        candidates, report = generate_with_report(self.kb, q, self.resources)
        out = {
            "count": len(candidates.graphs),
            "candidates": [
                {
                    "provenance": g.provenance,
                    "sequence": " ".join(serialize(g, self.resources.names).tokens),
                    "sections": {
                        name: list(span)
                        for name, span in serialize(g, self.resources.names).sections.items()
                    },
                    "hops": g.main.hops,
                    "constraints": g.constraint_count,
                }
                for g in candidates.graphs
            ],
        }
        if include_report:
            out["report"] = report.to_dict()
        return out

    # ------------------------------------------------------------------
    # datasets and labeling

    def dataset(self, split: str) -> list[QAPair]:
        if split not in self.config.datasets:
            raise GraphQAError(f"unknown split {split!r}")
        return load_dataset(self.config.datasets[split])

    def labeled_split(self, split: str):
        key = (split,)
        if key not in self._labeled_cache:
            self._labeled_cache[key] = [
                label_question(self.kb, self.resources, qa) for qa in self.dataset(split)
            ]
        return self._labeled_cache[key]

    # ------------------------------------------------------------------
    # training

    def train_rank(self, model_out=None, **overrides) -> dict:
        config = self.config.train_config(**overrides)
        model = train_ranker(
            self.labeled_split("train"), self.labeled_split("validation"), config, self.encoder
        )
        path = Path(model_out) if model_out else self.config.rank_model
        save_model(path, model)
        best_epoch = max(model.history, key=lambda es: (es[1], -es[0]))[0]
        return {
            "model_path": str(path),
            "history": [{"epoch": e, "validation_f1": s} for e, s in model.history],
            "best_epoch": best_epoch,
        }

    def train_rerank(self, model_out=None, rank_model_path=None, use_type=True, **overrides) -> dict:
        config = self.config.train_config(**overrides)
        rank_model = self.load_rank_model(rank_model_path)
        train_data = build_rerank_training(
            rank_model, self.labeled_split("train"), config.top_n, self.kb
        )
        valid_data = build_rerank_training(
            rank_model, self.labeled_split("validation"), config.top_n, self.kb
        )
        model = train_reranker(train_data, valid_data, config, self.encoder, use_type)
        path = Path(model_out) if model_out else self.config.rerank_model
        save_model(path, model)
        best_epoch = max(model.history, key=lambda es: (es[1], -es[0]))[0]
        return {
            "model_path": str(path),
            "history": [{"epoch": e, "validation_f1": s} for e, s in model.history],
            "best_epoch": best_epoch,
            "use_type": use_type,
        }

    def load_rank_model(self, path=None) -> RankModel:
        model = load_model(Path(path) if path else self.config.rank_model, self.encoder)
        if not isinstance(model, RankModel):
            raise ModelError("expected a rank model")
        return model

    def load_rerank_model(self, path=None) -> RerankModel:
        model = load_model(Path(path) if path else self.config.rerank_model, self.encoder)
        if not isinstance(model, RerankModel):
            raise ModelError("expected a rerank model")
        return model

    # ------------------------------------------------------------------
    # answering and evaluation

    def answer(
        self,
        question_text: str,
        n: int | None = None,
        use_rerank: bool = True,
        rank_model_path=None,
        rerank_model_path=None,
    ) -> tuple[set[str], dict]:
        rank_model = self.load_rank_model(rank_model_path)
        rerank_model = self.load_rerank_model(rerank_model_path) if use_rerank else None
        return answer_question(
            question_text,
            self.kb,
            self.resources,
            rank_model,
            rerank_model,
            n or self.config.top_n,
        )

    def evaluate_split(
        self,
        split: str,
        mode: str = "rerank",
        n: int | None = None,
        rank_model_path=None,
        rerank_model_path=None,
    ) -> EvalResult:
        """Score a split from stored candidate answers.

        ``rank`` mode takes the ranking top-1; ``rerank`` reranks the
        top-n first.  Labeling-time execution results are reused, so this
        never re-queries the KB.
        """
        if mode not in ("rank", "rerank"):
            raise GraphQAError(f"unknown eval mode {mode!r}")
        n = n or self.config.top_n
        rank_model = self.load_rank_model(rank_model_path)
        rerank_model = self.load_rerank_model(rerank_model_path) if mode == "rerank" else None
        items = []
        for lq in self.labeled_split(split):
            predicted: set[str] = set()
            if lq.candidates:
                shortlist = top_n(rank_labeled(rank_model, lq.question, lq.candidates), n)
                if rerank_model is not None:
                    shortlist = rerank_labeled(rerank_model, lq.question, shortlist, self.kb)
                predicted = set(shortlist[0].answers)
            items.append((lq.qid, predicted, set(lq.gold)))
        return evaluate(items)

    def oracle_curve_split(self, split: str, n_max: int, rank_model_path=None) -> OracleCurve:
        rank_model = self.load_rank_model(rank_model_path)
        f1_lists = []
        for lq in self.labeled_split(split):
            ranked = rank_labeled(rank_model, lq.question, lq.candidates)
            f1_lists.append([c.f1 for c in ranked])
        return oracle_curve(f1_lists, n_max)


def _with_type_sequence(kb, labeled):
    from .reranking import RerankCandidate, type_sequence_for_nodes

    return RerankCandidate(labeled, type_sequence_for_nodes(kb, labeled.answer_nodes))


def eval_csv(result: EvalResult) -> str:
    lines = ["id,precision,recall,f1"]
    for record in result.records:
        lines.append(f"{record.qid},{record.precision!r},{record.recall!r},{record.f1!r}")
    return "\n".join(lines) + "\n"
