"""Tuple-level micro-F1 scoring and multi-seed aggregation.

A prediction counts only when the (sentence id, start, end, polarity) tuple
exactly matches a gold tuple; precision/recall pool counts over the whole
corpus.  Reports serialize to JSON plus a flat (language, seed, P, R, F1)
CSV for external plotting.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .labelspace import decode_lenient, sort_spans


@dataclass
class LanguageScore:
    precision: float
    recall: float
    f1: float
    n_gold: int
    n_predicted: int
    n_matched: int

    def to_dict(self) -> dict:
        return {
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "gold": self.n_gold,
            "predicted": self.n_predicted,
            "matched": self.n_matched,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LanguageScore":
        return cls(d["precision"], d["recall"], d["f1"],
                   d["gold"], d["predicted"], d["matched"])


def micro_f1(gold: dict, pred: dict) -> LanguageScore:
    """Corpus-pooled precision/recall/F1 over exact span tuples.

    `gold` and `pred` map sentence ids to collections of AspectSpan; the two
    id sets must coincide.
    """
    if set(gold) != set(pred):
        diff = sorted(set(gold) ^ set(pred))
        raise ValueError(f"gold and predicted sentence ids differ: {diff[:5]}")
    n_gold = n_pred = n_match = 0
    for sid in gold:
        g, p = set(gold[sid]), set(pred[sid])
        n_gold += len(g)
        n_pred += len(p)
        n_match += len(g & p)
    precision = n_match / n_pred if n_pred else 0.0
    recall = n_match / n_gold if n_gold else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return LanguageScore(precision, recall, f1, n_gold, n_pred, n_match)


def predict_spans(model, sentence) -> set:
    """Argmax tags (ties break to the lowest id) decoded leniently to spans."""
    ids = model.vocab.encode_tokens(sentence.tokens)
    probs = model.predict_probs(ids)
    tags = np.argmax(probs, axis=1)
    return decode_lenient(tags.tolist())


def evaluate_sentences(model, sentences) -> LanguageScore:
    gold = {s.sid: s.spans() for s in sentences}
    pred = {s.sid: predict_spans(model, s) for s in sentences}
    return micro_f1(gold, pred)


@dataclass
class EvalReport:
    """Per-language scores for one run, or means across seed runs."""

    scores: dict[str, LanguageScore]
    seed: int | None = None
    seed_reports: tuple["EvalReport", ...] = field(default=(), compare=False)

    def mean_f1(self) -> float:
        return float(np.mean([s.f1 for s in self.scores.values()]))

    def per_seed_f1(self) -> dict[str, dict[int, float]]:
        return {
            lang: {r.seed: r.scores[lang].f1 for r in self.seed_reports}
            for lang in self.scores
        }

    def to_dict(self) -> dict:
        doc = {
            "seed": self.seed,
            "languages": {lang: s.to_dict() for lang, s in self.scores.items()},
            "mean_f1": self.mean_f1(),
        }
        if self.seed_reports:
            doc["seeds"] = [r.to_dict() for r in self.seed_reports]
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "EvalReport":
        return cls(
            scores={l: LanguageScore.from_dict(d) for l, d in doc["languages"].items()},
            seed=doc.get("seed"),
            seed_reports=tuple(cls.from_dict(d) for d in doc.get("seeds", ())),
        )

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f, indent=2)

    @classmethod
    def load(cls, path) -> "EvalReport":
        with open(path, encoding="utf-8") as f:
            return cls.from_dict(json.load(f))


def evaluate_model(model, bundle, split: str = "test",
                   seed: int | None = None) -> EvalReport:
    """Score a model per target language on the given split's T sentences."""
    scores = {}
    for lang in bundle.target_langs:
        scores[lang] = evaluate_sentences(model, bundle.sentences(split, ("T",), lang))
    return EvalReport(scores=scores, seed=seed)


def source_dev_f1(model, bundle) -> float:
    """Model-selection score: micro-F1 on the source-language dev sentences."""
    return evaluate_sentences(model, bundle.sentences("dev", ("S",))).f1


def aggregate(reports) -> EvalReport:
    """Mean P/R/F1 per language across seed runs; per-seed reports retained."""
    reports = list(reports)
    if not reports:
        raise ValueError("aggregate needs at least one report")
    langs = list(reports[0].scores)
    for r in reports:
        if list(r.scores) != langs:
            raise ValueError("reports cover different language sets")
    scores = {}
    for lang in langs:
        per = [r.scores[lang] for r in reports]
        scores[lang] = LanguageScore(
            precision=float(np.mean([s.precision for s in per])),
            recall=float(np.mean([s.recall for s in per])),
            f1=float(np.mean([s.f1 for s in per])),
            n_gold=sum(s.n_gold for s in per),
            n_predicted=sum(s.n_predicted for s in per),
            n_matched=sum(s.n_matched for s in per),
        )
    return EvalReport(scores=scores, seed=None, seed_reports=tuple(reports))


def write_report_csv(report: EvalReport, path) -> None:
    """Flat (language, seed, P, R, F1) rows; aggregated reports add mean rows."""
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["language", "seed", "precision", "recall", "f1"])
        rows = report.seed_reports or (report,)
        for r in rows:
            for lang, s in r.scores.items():
                writer.writerow([lang, r.seed, s.precision, s.recall, s.f1])
        if report.seed_reports:
            for lang, s in report.scores.items():
                writer.writerow([lang, "mean", s.precision, s.recall, s.f1])
