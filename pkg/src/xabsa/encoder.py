"""Feature extractor: embeddings plus one bidirectional tanh recurrence.

The smallest encoder giving every hidden state full-sentence context.  It
stands behind a plain functional interface (parameters in, hidden states
out), so any other extractor with the same contract can replace it.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import kernels

CHECKPOINT_FORMAT = "xabsa-ckpt-v1"
INIT_SCALE = 0.1


@dataclass(frozen=True)
class EncoderConfig:
    embed_dim: int = 32
    hidden_dim: int = 32

    @property
    def out_dim(self) -> int:
        return 2 * self.hidden_dim


class EncoderParams:
    """Embedding table and forward/backward recurrence weights as graph leaves."""

    def __init__(self, vocab_size: int, cfg: EncoderConfig, rng: np.random.Generator):
        self.vocab_size = vocab_size
        self.cfg = cfg

        def u(*shape):
            return ad.Node(rng.uniform(-INIT_SCALE, INIT_SCALE, shape))

        d, h = cfg.embed_dim, cfg.hidden_dim
        self.embedding = u(vocab_size, d)
        self.wx_f, self.wh_f, self.b_f = u(d, h), u(h, h), u(h)
        self.wx_b, self.wh_b, self.b_b = u(d, h), u(h, h), u(h)

    def parameters(self) -> dict[str, ad.Node]:
        return {
            "encoder.embedding": self.embedding,
            "encoder.wx_f": self.wx_f,
            "encoder.wh_f": self.wh_f,
            "encoder.b_f": self.b_f,
            "encoder.wx_b": self.wx_b,
            "encoder.wh_b": self.wh_b,
            "encoder.b_b": self.b_b,
        }


def _checked_ids(params: EncoderParams, token_ids) -> np.ndarray:
    ids = np.asarray(token_ids, dtype=np.intp)
    if ids.ndim != 1 or ids.size < 1:
        raise ValueError(f"expected a non-empty 1-D id sequence, got shape {ids.shape}")
    if ids.min() < 0 or ids.max() >= params.vocab_size:
        raise ValueError(
            f"token id outside vocabulary of size {params.vocab_size}; "
            f"map unknown tokens to the reserved unknown id first"
        )
    return ids


def encode(params: EncoderParams, token_ids) -> ad.Node:
    """Map token ids to contextual hidden states, one (2h)-vector per token."""
    ids = _checked_ids(params, token_ids)
    emb = ad.embedding(params.embedding, ids)
    fwd = ad.rnn_scan(ad.matmul(emb, params.wx_f), params.wh_f, params.b_f)
    bwd = ad.rnn_scan(ad.matmul(emb, params.wx_b), params.wh_b, params.b_b, reverse=True)
    return ad.concat([fwd, bwd], axis=1)


def encode_arrays(params: EncoderParams, token_ids) -> np.ndarray:
    """Graph-free twin of :func:`encode` (identical values) for forward-only use."""
    ids = _checked_ids(params, token_ids)
    emb = params.embedding.value[ids]
    fwd = kernels.rnn_forward(
        np.ascontiguousarray(emb @ params.wx_f.value), params.wh_f.value, params.b_f.value
    )
    bwd = kernels.rnn_forward(
        np.ascontiguousarray((emb @ params.wx_b.value)[::-1]),
        params.wh_b.value,
        params.b_b.value,
    )[::-1]
    return np.concatenate([fwd, bwd], axis=1)


def save_checkpoint(path, arrays: dict[str, np.ndarray], vocab_tokens, meta: dict) -> None:
    """Write parameters + vocabulary + metadata as a versioned JSON document."""
    doc = {
        "format": CHECKPOINT_FORMAT,
        "meta": meta,
        "vocab": list(vocab_tokens),
        "params": {
            name: {"shape": list(arr.shape), "data": arr.reshape(-1).tolist()}
            for name, arr in arrays.items()
        },
    }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(doc, f)


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], list[str], dict]:
    with open(path, encoding="utf-8") as f:
        doc = json.load(f)
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(
            f"unsupported checkpoint format {doc.get('format')!r}, "
            f"expected {CHECKPOINT_FORMAT!r}"
        )
    arrays = {
        name: np.array(entry["data"], dtype=np.float64).reshape(entry["shape"])
        for name, entry in doc["params"].items()
    }
    return arrays, doc["vocab"], doc["meta"]
