"""Knowledge distillation to a plain encoder+classifier student.

Teachers are trained full-pipeline models; the student sees only the
translated target-language data for a supervised warm start, then continues
on teacher soft labels over unlabeled target text (the test sentences with
gold labels quarantined — the unlabeled pool carries no tags by type).
Multi-teacher mode averages per-token distributions with fixed weights.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .corpus import CorpusBundle, UnlabeledSentence
from .encoder import EncoderConfig, encode
from .evaluate import EvalReport, evaluate_model
from .heads import TaggerModel, ce_loss, classify
from .trainer import Adam, _sample, _unk_perturb

DISTILL_MODES = ("single", "multi", "multilingual")


@dataclass(frozen=True)
class DistillConfig:
    warm_steps: int = 500
    kd_steps: int = 500
    learning_rate: float = 5e-3
    batch_size: int = 16
    keep_prob: float = 0.9
    embed_dim: int = 32
    hidden_dim: int = 32
    word_dropout: float = 0.05
    aspect_dropout: float = 0.4


@dataclass
class TeacherEnsemble:
    """Trained models whose per-token distributions are convexly combined."""

    models: list[TaggerModel]
    weights: list[float]

    def __post_init__(self):
        if len(self.models) != len(self.weights) or not self.models:
            raise ValueError("need one weight per teacher and at least one teacher")
        if any(w < 0 for w in self.weights) or abs(sum(self.weights) - 1.0) > 1e-9:
            raise ValueError(f"teacher weights must be convex, got {self.weights}")
        tokens = self.models[0].vocab.tokens
        for m in self.models[1:]:
            if m.vocab.tokens != tokens:
                raise ValueError("teachers must share one vocabulary")

    @classmethod
    def equal_weights(cls, models) -> "TeacherEnsemble":
        models = list(models)
        return cls(models, [1.0 / len(models)] * len(models))

    @property
    def vocab(self):
        return self.models[0].vocab


def combine_soft_labels(ensemble: TeacherEnsemble, token_ids) -> np.ndarray:
    """Weighted average of the teachers' per-token tag distributions."""
    combined = None
    length = None
    for model, w in zip(ensemble.models, ensemble.weights):
        probs = model.predict_probs(token_ids)
        if length is None:
            length = probs.shape[0]
            combined = w * probs
        elif probs.shape[0] != length:
            raise ValueError(
                f"teacher output length {probs.shape[0]} does not match {length}"
            )
        else:
            combined += w * probs
    return combined


@dataclass
class SoftLabeledSentence:
    """Unlabeled text plus combined teacher distributions; never holds tags."""

    sid: str
    tokens: tuple[str, ...]
    token_ids: np.ndarray = field(compare=False, repr=False)
    probs: np.ndarray = field(compare=False, repr=False)


def soft_label(ensemble: TeacherEnsemble,
               sentences: list[UnlabeledSentence]) -> list[SoftLabeledSentence]:
    """Teachers run in evaluation mode, so relabeling is byte-identical."""
    return [
        SoftLabeledSentence(s.sid, s.tokens, s.token_ids,
                            combine_soft_labels(ensemble, s.token_ids))
        for s in sentences
    ]


def save_soft_labels(soft: list[SoftLabeledSentence], path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for s in soft:
            record = {"id": s.sid, "tokens": list(s.tokens),
                      "probs": s.probs.tolist()}
            f.write(json.dumps(record) + "\n")


def load_soft_labels(path) -> list[dict]:
    out = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if line:
                out.append(json.loads(line))
    return out


def kd_loss(student_probs: list[ad.Node], targets: list[np.ndarray]) -> ad.Node:
    """Mean over sentences of mean over tokens of per-class mean squared error."""
    if not student_probs:
        raise ValueError("kd_loss needs at least one sentence")
    per_sentence = []
    for probs, target in zip(student_probs, targets, strict=True):
        if probs.value.shape != target.shape:
            raise ad.ShapeError(
                f"shape mismatch in kd_loss: {probs.value.shape} vs {target.shape}"
            )
        diff = ad.sub(probs, ad.Node(target))
        per_sentence.append(ad.reduce_mean(ad.mul(diff, diff)))
    return ad.reduce_mean(ad.stack_scalars(per_sentence))


@dataclass
class DistillResult:
    mode: str
    seed: int
    student: TaggerModel
    soft: list[SoftLabeledSentence]
    rows: list[dict]
    report: EvalReport


def _new_student(bundle: CorpusBundle, cfg: DistillConfig,
                 rng: np.random.Generator) -> TaggerModel:
    enc_cfg = EncoderConfig(cfg.embed_dim, cfg.hidden_dim)
    return TaggerModel.create(bundle.vocab, enc_cfg, rng, cfg.keep_prob)


def _warm_start(student: TaggerModel, bundle: CorpusBundle, cfg: DistillConfig,
                rng: np.random.Generator, rows: list[dict]) -> None:
    pool = bundle.sentences("train", ("T",))
    if not pool:
        raise ValueError("student warm start needs translated target training data")
    opt = Adam(student.parameters(), cfg.learning_rate)
    for step in range(1, cfg.warm_steps + 1):
        batch = _sample(rng, pool, cfg.batch_size)
        probs = [
            classify(student.p_head,
                     encode(student.encoder,
                            _unk_perturb(s, cfg.word_dropout, cfg.aspect_dropout, rng)),
                     rng, train=True)
            for s in batch
        ]
        loss = ce_loss(probs, [s.tags for s in batch])
        ad.backward(loss)
        opt.step()
        opt.zero_grad()
        rows.append({"step": step, "stage": "warm", "loss_ce": float(loss.value)})


def _kd_phase(student: TaggerModel, soft: list[SoftLabeledSentence],
              cfg: DistillConfig, rng: np.random.Generator, rows: list[dict]) -> None:
    # Fresh optimizer moments: the incremental phase starts clean.
    opt = Adam(student.parameters(), cfg.learning_rate)
    for step in range(1, cfg.kd_steps + 1):
        batch = _sample(rng, soft, cfg.batch_size)
        probs = [
            classify(student.p_head, encode(student.encoder, s.token_ids), rng, train=True)
            for s in batch
        ]
        loss = kd_loss(probs, [s.probs for s in batch])
        ad.backward(loss)
        opt.step()
        opt.zero_grad()
        rows.append({"step": step, "stage": "distill", "loss_kd": float(loss.value)})


def train_student_baseline(bundle: CorpusBundle, cfg: DistillConfig,
                           seed: int) -> tuple[TaggerModel, EvalReport]:
    """The no-distillation reference: warm start on translated data only."""
    rng = np.random.default_rng(seed)
    student = _new_student(bundle, cfg, rng)
    _warm_start(student, bundle, cfg, rng, rows=[])
    return student, evaluate_model(student, bundle, "test", seed=seed)


def distill(mode: str, teachers, bundle: CorpusBundle, cfg: DistillConfig,
            seed: int) -> DistillResult:
    """Warm-start a student on translated data, then train on soft labels.

    single: one teacher.  multi: several teachers, equal weights.
    multilingual: one teacher trained across all target languages; the
    student warm-starts on the union of their translated training data.
    """
    if mode not in DISTILL_MODES:
        raise ValueError(f"unknown distillation mode {mode!r}; expected {DISTILL_MODES}")
    teachers = list(teachers)
    if mode == "single" and len(teachers) != 1:
        raise ValueError(f"single-teacher mode takes exactly one teacher, got {len(teachers)}")
    if mode == "multi" and len(teachers) < 2:
        raise ValueError("multi-teacher mode needs at least two teachers")
    if mode == "multilingual" and len(teachers) != 1:
        raise ValueError("multilingual mode takes exactly one multi-language teacher")
    ensemble = TeacherEnsemble.equal_weights(teachers)
    if ensemble.vocab.tokens != bundle.vocab.tokens:
        raise ValueError("vocabulary mismatch between teachers and dataset")

    rng = np.random.default_rng(seed)
    student = _new_student(bundle, cfg, rng)
    rows: list[dict] = []
    _warm_start(student, bundle, cfg, rng, rows)
    unlabeled = [
        u for lang in bundle.target_langs for u in bundle.unlabeled_target(lang)
    ]
    soft = soft_label(ensemble, unlabeled)
    _kd_phase(student, soft, cfg, rng, rows)
    report = evaluate_model(student, bundle, "test", seed=seed)
    return DistillResult(mode, seed, student, soft, rows, report)
