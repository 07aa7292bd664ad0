"""Task heads and their losses.

Three roles sit on top of the encoder's hidden states: the per-token
sentiment classifier (softmax over the 13 tags), the language discriminator
(sigmoid score on the mean-pooled sentence), and the span-consistency
machinery (span-level distributions compared with symmetric KL).  Dropout is
applied to the affine output before the activation, train mode only, with
inverted scaling.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import encoder as enc
from .labelspace import (
    NUM_TAGS,
    O_TAG,
    POLARITIES,
    begin_tag,
    end_tag,
    inside_tag,
    single_tag,
)

# Floor applied to any probability before a log (and to span masses before
# renormalization); keeps every KL/CE finite and makes oracle arithmetic
# reproducible bit-for-bit.
EPSILON = 1e-8

DEFAULT_KEEP_PROB = 0.9

# Diagnostic counter; lets ablation tests assert the consistency path is
# never entered.
_span_distribution_calls = 0


def span_distribution_call_count() -> int:
    return _span_distribution_calls


def reset_span_distribution_call_count() -> None:
    global _span_distribution_calls
    _span_distribution_calls = 0


@dataclass
class HeadParams:
    """One affine head: weight, bias, and its dropout keep-probability."""

    w: ad.Node
    b: ad.Node
    keep_prob: float = DEFAULT_KEEP_PROB

    @classmethod
    def create(cls, in_dim: int, out_dim: int, rng: np.random.Generator,
               keep_prob: float = DEFAULT_KEEP_PROB) -> "HeadParams":
        scale = enc.INIT_SCALE
        return cls(
            w=ad.Node(rng.uniform(-scale, scale, (in_dim, out_dim))),
            b=ad.Node(rng.uniform(-scale, scale, out_dim)),
            keep_prob=keep_prob,
        )

    def parameters(self, prefix: str) -> dict[str, ad.Node]:
        return {f"{prefix}.w": self.w, f"{prefix}.b": self.b}


def classify(head: HeadParams, hidden: ad.Node,
             rng: np.random.Generator | None = None, train: bool = False) -> ad.Node:
    """Per-token distributions over the 13 tags; each row sums to one."""
    logits = ad.add(ad.matmul(hidden, head.w), head.b)
    if train:
        logits = ad.dropout(logits, head.keep_prob, rng)
    return ad.softmax_rows(logits)


def discriminate(head: HeadParams, hidden: ad.Node,
                 rng: np.random.Generator | None = None, train: bool = False) -> ad.Node:
    """Scalar language score in (0, 1) from the mean-pooled hidden states."""
    if hidden.value.shape[0] < 1:
        raise ValueError("cannot discriminate an empty hidden-state sequence")
    pooled = ad.reshape(ad.reduce_mean(hidden, axis=0), (1, hidden.value.shape[1]))
    logit = ad.add(ad.matmul(pooled, head.w), head.b)
    if train:
        logit = ad.dropout(logit, head.keep_prob, rng)
    return ad.reshape(ad.sigmoid(logit), ())


def ce_loss(prob_rows: list[ad.Node], gold_tags: list) -> ad.Node:
    """Cross entropy: mean over sentences of mean over tokens of -log p(gold)."""
    if not prob_rows:
        raise ValueError("ce_loss needs at least one sentence")
    per_sentence = []
    for probs, gold in zip(prob_rows, gold_tags, strict=True):
        gold = np.asarray(gold, dtype=np.intp)
        if probs.value.shape[0] != gold.shape[0]:
            raise ad.ShapeError(
                f"gold length {gold.shape[0]} does not match "
                f"{probs.value.shape[0]} prediction rows"
            )
        p_gold = ad.clamp_min(ad.take_per_row(probs, gold), EPSILON)
        per_sentence.append(ad.neg(ad.reduce_mean(ad.log(p_gold))))
    return ad.reduce_mean(ad.stack_scalars(per_sentence))


def wasserstein_objective(source_scores: list[ad.Node],
                          target_scores: list[ad.Node]) -> ad.Node:
    """Critic objective: mean source score minus mean target score."""
    if not source_scores or not target_scores:
        raise ValueError("wasserstein_objective needs non-empty batches on both sides")
    src = ad.reduce_mean(ad.stack_scalars(source_scores))
    tgt = ad.reduce_mean(ad.stack_scalars(target_scores))
    return ad.sub(src, tgt)


# Span-distribution class order: POS, NEU, NEG, then the no-aspect class.
SPAN_CLASSES = ("POS", "NEU", "NEG", "NONE")


def span_distribution(probs: ad.Node, start: int, end: int) -> ad.Node:
    """Distribution over {POS, NEU, NEG, NONE} for one token span.

    Each polarity mass is the product of the tag probabilities that would
    label the span with that polarity (S-c for a single token, otherwise
    B-c, I-c..., E-c); the NONE mass is the product of the O probabilities.
    Masses are floored at EPSILON and renormalized.
    """
    global _span_distribution_calls
    _span_distribution_calls += 1
    if not 0 <= start <= end < probs.value.shape[0]:
        raise ValueError(
            f"span ({start}, {end}) outside sentence of length {probs.value.shape[0]}"
        )
    length = end - start + 1
    cols = np.empty((length, 4), dtype=np.intp)
    for j, pol in enumerate(POLARITIES):
        if length == 1:
            cols[0, j] = single_tag(pol)
        else:
            cols[0, j] = begin_tag(pol)
            cols[1:-1, j] = inside_tag(pol)
            cols[-1, j] = end_tag(pol)
    cols[:, 3] = O_TAG
    rows = np.broadcast_to(np.arange(start, end + 1)[:, None], (length, 4))
    masses = ad.reduce_prod(ad.gather2d(probs, rows, cols), axis=0)
    floored = ad.clamp_min(masses, EPSILON)
    return ad.div(floored, ad.reduce_sum(floored))


def _kl(p: ad.Node, q: ad.Node) -> ad.Node:
    return ad.reduce_sum(ad.mul(p, ad.sub(ad.log(p), ad.log(q))))


def consistency_loss(pairs) -> ad.Node:
    """Mean symmetric KL over aligned span-distribution pairs; 0 when empty."""
    if not pairs:
        return ad.Node(0.0)
    terms = []
    for p, q in pairs:
        if p.value.shape != q.value.shape:
            raise ad.ShapeError(
                f"shape mismatch in consistency pair: {p.value.shape} vs {q.value.shape}"
            )
        terms.append(ad.mul(0.5, ad.add(_kl(q, p), _kl(p, q))))
    return ad.reduce_mean(ad.stack_scalars(terms))


class TaggerModel:
    """Encoder plus sentiment classifier: the deployable tagging model."""

    def __init__(self, vocab, cfg: enc.EncoderConfig, encoder_params: enc.EncoderParams,
                 p_head: HeadParams):
        self.vocab = vocab
        self.cfg = cfg
        self.encoder = encoder_params
        self.p_head = p_head

    @classmethod
    def create(cls, vocab, cfg: enc.EncoderConfig, rng: np.random.Generator,
               keep_prob: float = DEFAULT_KEEP_PROB) -> "TaggerModel":
        params = enc.EncoderParams(vocab.size, cfg, rng)
        head = HeadParams.create(cfg.out_dim, NUM_TAGS, rng, keep_prob)
        return cls(vocab, cfg, params, head)

    def parameters(self) -> dict[str, ad.Node]:
        return {**self.encoder.parameters(), **self.p_head.parameters("p")}

    def predict_probs(self, token_ids) -> np.ndarray:
        """Per-token tag distributions in evaluation mode (no dropout)."""
        hidden = enc.encode_arrays(self.encoder, token_ids)
        logits = hidden @ self.p_head.w.value + self.p_head.b.value
        shifted = logits - logits.max(axis=-1, keepdims=True)
        ex = np.exp(shifted)
        return ex / ex.sum(axis=-1, keepdims=True)

    def snapshot(self) -> dict[str, np.ndarray]:
        return {name: node.value.copy() for name, node in self.parameters().items()}

    def restore(self, arrays: dict[str, np.ndarray]) -> None:
        params = self.parameters()
        if set(arrays) != set(params):
            raise ValueError(
                f"parameter names do not match: {sorted(set(arrays) ^ set(params))}"
            )
        for name, node in params.items():
            node.value[...] = arrays[name]

    def save(self, path, meta: dict | None = None) -> None:
        doc_meta = {
            "embed_dim": self.cfg.embed_dim,
            "hidden_dim": self.cfg.hidden_dim,
            "keep_prob": self.p_head.keep_prob,
        }
        doc_meta.update(meta or {})
        enc.save_checkpoint(path, self.snapshot(), self.vocab.tokens, doc_meta)

    @classmethod
    def load(cls, path) -> tuple["TaggerModel", dict]:
        from .corpus import Vocabulary

        arrays, tokens, meta = enc.load_checkpoint(path)
        vocab = Vocabulary(tokens)
        cfg = enc.EncoderConfig(int(meta["embed_dim"]), int(meta["hidden_dim"]))
        model = cls.create(vocab, cfg, np.random.default_rng(0),
                           keep_prob=float(meta["keep_prob"]))
        model.restore(arrays)
        return model, meta
