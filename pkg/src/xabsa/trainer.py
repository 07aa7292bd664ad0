"""Two-stage training orchestration.

Stage 1 aligns the encoder across languages adversarially: per outer step,
the critic (language discriminator) takes several ascent steps on its score
gap between source-side and target-side batches, every critic weight clipped
to [-c, c] after each update; then the encoder takes one step through the
gradient reversal connector, which drives the score gap down.  Stage 2
minimizes cross entropy plus a weighted span-consistency penalty over the
whole supervised pool, checkpointing on source-dev micro-F1; the selected
model is the best checkpoint inside the final window.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import autodiff as ad
from .corpus import SOURCE_SIDE, TARGET_SIDE, UNK_ID, VARIANTS, CorpusBundle
from .encoder import EncoderConfig, encode, encode_arrays
from .evaluate import EvalReport, evaluate_model, source_dev_f1
from .heads import (
    HeadParams,
    TaggerModel,
    ce_loss,
    classify,
    consistency_loss,
    discriminate,
    span_distribution,
    wasserstein_objective,
)

MODES = ("zero_shot", "msmo", "ablation:no_discriminator", "ablation:no_consistency")
INTERLEAVE_BLOCKS = 10


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 5e-3
    # Stage-1 learning rates.  The critic optimizes inside a [-c, c] box, so
    # its steps must be small against c or its weights just bounce between
    # the box walls on batch noise; the encoder's adversarial nudges must
    # stay small next to the stage-2 steps because the critic's gradient
    # says nothing about the tagging task.
    critic_lr: float = 5e-4
    adversarial_lr: float = 5e-4
    batch_size: int = 16
    step1_steps: int = 300
    step2_steps: int = 1500
    beta: float = 1e-3
    lam: float = 1.0
    clip_c: float = 0.01
    critic_iters: int = 5
    schedule: str = "sequential"
    selection_window: int = 300
    eval_interval: int = 50
    keep_prob: float = 0.9
    # Train-time input perturbation: probability of replacing a single token
    # id, or a whole gold aspect span, with the unknown id.  The toy encoder
    # has no pretraining, so this is what teaches it to tag out-of-lexicon
    # aspect terms from context.
    word_dropout: float = 0.05
    aspect_dropout: float = 0.4
    embed_dim: int = 32
    hidden_dim: int = 32
    consistency_pairs: tuple[str, ...] = ("S:T", "S:S_T", "T:T_S")
    seeds: tuple[int, ...] = (1, 2, 3, 4, 5)

    def __post_init__(self):
        if self.beta < 0:
            raise ValueError(f"beta must be non-negative, got {self.beta}")
        if self.clip_c <= 0:
            raise ValueError(f"clip bound must be positive, got {self.clip_c}")
        if self.critic_iters < 1:
            raise ValueError(f"critic_iters must be at least 1, got {self.critic_iters}")
        if self.selection_window > self.step2_steps:
            raise ValueError("selection window cannot exceed the stage-2 budget")
        if self.schedule not in ("sequential", "interleaved"):
            raise ValueError(f"unknown schedule {self.schedule!r}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["consistency_pairs"] = list(self.consistency_pairs)
        d["seeds"] = list(self.seeds)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        if "consistency_pairs" in d:
            d["consistency_pairs"] = tuple(d["consistency_pairs"])
        if "seeds" in d:
            d["seeds"] = tuple(d["seeds"])
        return cls(**d)

    def fingerprint(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


class Adam:
    """Adam with bias correction over a named parameter dict."""

    def __init__(self, params: dict[str, ad.Node], lr: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = dict(params)
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros_like(n.value) for k, n in self.params.items()}
        self.v = {k: np.zeros_like(n.value) for k, n in self.params.items()}
        self.t = 0

    def step(self) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for name, node in self.params.items():
            g = node.grad
            m, v = self.m[name], self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            node.value -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

    def zero_grad(self) -> None:
        for node in self.params.values():
            node.grad[...] = 0.0


@dataclass
class Checkpoint:
    step: int
    arrays: dict[str, np.ndarray]
    dev_f1: float


def select_checkpoint(checkpoints: list[Checkpoint], window: int) -> Checkpoint:
    """Best source-dev F1 among checkpoints in the final window; ties go late."""
    if not checkpoints:
        raise ValueError("no checkpoints to select from")
    last = checkpoints[-1].step
    eligible = [c for c in checkpoints if c.step >= last - window]
    return max(eligible, key=lambda c: (c.dev_f1, c.step))


def params_digest(arrays: dict[str, np.ndarray]) -> str:
    h = hashlib.sha256()
    for name in sorted(arrays):
        h.update(name.encode())
        h.update(arrays[name].tobytes())
    return h.hexdigest()


def _sample(rng: np.random.Generator, pool: list, k: int) -> list:
    return [pool[i] for i in rng.integers(0, len(pool), size=k)]


def _word_dropout(ids: np.ndarray, prob: float, rng: np.random.Generator) -> np.ndarray:
    if prob <= 0.0:
        return ids
    mask = rng.random(ids.shape) < prob
    if not mask.any():
        return ids
    out = ids.copy()
    out[mask] = UNK_ID
    return out


def _unk_perturb(sent, word_prob: float, aspect_prob: float,
                 rng: np.random.Generator) -> np.ndarray:
    """Replace random tokens, and whole aspect spans, with the unknown id."""
    ids = _word_dropout(sent.token_ids, word_prob, rng)
    if aspect_prob > 0.0:
        for span in sent.spans():
            if rng.random() < aspect_prob:
                if ids is sent.token_ids:
                    ids = ids.copy()
                ids[span.start : span.end + 1] = UNK_ID
    return ids


class Trainer:
    """Owns the model, the discriminator head, optimizer state, and logs."""

    def __init__(self, bundle: CorpusBundle, cfg: TrainConfig, seed: int):
        self.bundle = bundle
        self.cfg = cfg
        self.seed = seed
        self.rng = np.random.default_rng(seed)
        enc_cfg = EncoderConfig(cfg.embed_dim, cfg.hidden_dim)
        # The discriminator is created in every mode so that parameter
        # initialization consumes the seed stream identically across modes.
        self.model = TaggerModel.create(bundle.vocab, enc_cfg, self.rng, cfg.keep_prob)
        self.q_head = HeadParams.create(enc_cfg.out_dim, 1, self.rng, cfg.keep_prob)
        self.init_digest = params_digest(self.model.snapshot())
        self.rows: list[dict] = []
        self.checkpoints: list[Checkpoint] = []
        self.clip_trace: list[float] = []  # max |Q weight| after each critic update
        self._q_opt: Adam | None = None
        self._enc_opt: Adam | None = None
        self._s2_opt: Adam | None = None
        self._s1_step = 0
        self._s2_step = 0
        self._grl = ad.GradReversalConfig(cfg.lam)

    # -- stage 1 ------------------------------------------------------------

    def _adversarial_pools(self):
        src = self.bundle.sentences("train", SOURCE_SIDE)
        tgt = self.bundle.sentences("train", TARGET_SIDE)
        if not src or not tgt:
            raise ValueError(
                "adversarial stage needs non-empty source-side and target-side pools"
            )
        return src, tgt

    def _critic_scores(self, batch) -> ad.Node:
        # The encoder is constant during critic updates, so its forward runs
        # graph-free and one batched head graph scores all pooled rows.
        pooled = np.stack([
            encode_arrays(self.model.encoder, self._train_ids(s)).mean(axis=0)
            for s in batch
        ])
        logits = ad.add(ad.matmul(ad.Node(pooled), self.q_head.w), self.q_head.b)
        logits = ad.dropout(logits, self.q_head.keep_prob, self.rng)
        return ad.sigmoid(logits)

    def _critic_update(self, src_pool, tgt_pool) -> float:
        src = _sample(self.rng, src_pool, self.cfg.batch_size)
        tgt = _sample(self.rng, tgt_pool, self.cfg.batch_size)
        j_q = ad.sub(
            ad.reduce_mean(self._critic_scores(src)),
            ad.reduce_mean(self._critic_scores(tgt)),
        )
        ad.backward(ad.neg(j_q))  # the critic ascends J_q
        self._q_opt.step()
        c = self.cfg.clip_c
        for node in self.q_head.parameters("q").values():
            np.clip(node.value, -c, c, out=node.value)
        self.clip_trace.append(
            max(float(np.abs(n.value).max()) for n in self.q_head.parameters("q").values())
        )
        self._q_opt.zero_grad()
        return float(j_q.value)

    def _encoder_adversarial_update(self, src_pool, tgt_pool) -> float:
        src = _sample(self.rng, src_pool, self.cfg.batch_size)
        tgt = _sample(self.rng, tgt_pool, self.cfg.batch_size)

        def scores(batch):
            return [
                discriminate(
                    self.q_head,
                    ad.grad_reverse(encode(self.model.encoder, self._train_ids(s)), self._grl),
                    self.rng,
                    train=True,
                )
                for s in batch
            ]

        j_q = wasserstein_objective(scores(src), scores(tgt))
        # Backward of -J_q; the reversal connector hands the encoder -lam
        # times the critic's gradient, so this descent step shrinks J_q.
        ad.backward(ad.neg(j_q))
        self._enc_opt.step()
        self._enc_opt.zero_grad()
        self._q_opt.zero_grad()  # discard critic gradients from this pass
        return float(j_q.value)

    def run_step1(self, steps: int) -> None:
        src_pool, tgt_pool = self._adversarial_pools()
        if self._q_opt is None:
            self._q_opt = Adam(self.q_head.parameters("q"), self.cfg.critic_lr)
            self._enc_opt = Adam(self.model.encoder.parameters(), self.cfg.adversarial_lr)
        for _ in range(steps):
            for _ in range(self.cfg.critic_iters):
                self._critic_update(src_pool, tgt_pool)
            j_q = self._encoder_adversarial_update(src_pool, tgt_pool)
            self._s1_step += 1
            self.rows.append({
                "step": self._s1_step,
                "stage": "adversarial",
                "loss_ce": None,
                "loss_cons": None,
                "loss_total": None,
                "j_q": j_q,
            })

    # -- stage 2 ------------------------------------------------------------

    def _train_ids(self, sent) -> np.ndarray:
        return _unk_perturb(sent, self.cfg.word_dropout, self.cfg.aspect_dropout, self.rng)

    def _train_probs(self, sent, cache: dict):
        probs = cache.get(sent.sid)
        if probs is None:
            hidden = encode(self.model.encoder, self._train_ids(sent))
            probs = classify(self.model.p_head, hidden, self.rng, train=True)
            cache[sent.sid] = probs
        return probs

    def run_step2(self, steps: int, d_u_variants=VARIANTS,
                  beta: float | None = None) -> None:
        cfg = self.cfg
        beta = cfg.beta if beta is None else beta
        pool = self.bundle.sentences("train", d_u_variants)
        if not pool:
            raise ValueError("stage 2 needs a non-empty supervised pool")
        pairs = self.bundle.consistency_pairs(cfg.consistency_pairs) if beta > 0 else []
        if self._s2_opt is None:
            self._s2_opt = Adam(self.model.parameters(), cfg.learning_rate)
        for _ in range(steps):
            self._s2_step += 1
            step = self._s2_step
            cache: dict = {}
            batch = _sample(self.rng, pool, cfg.batch_size)
            probs = [self._train_probs(s, cache) for s in batch]
            l_ce = ce_loss(probs, [s.tags for s in batch])
            if pairs:
                dists = []
                for sent_a, span_a, sent_b, span_b in _sample(self.rng, pairs, cfg.batch_size):
                    pa = self._train_probs(sent_a, cache)
                    pb = self._train_probs(sent_b, cache)
                    dists.append((
                        span_distribution(pa, span_a.start, span_a.end),
                        span_distribution(pb, span_b.start, span_b.end),
                    ))
                l_cons = consistency_loss(dists)
            else:
                l_cons = ad.Node(0.0)
            l_total = ad.add(l_ce, ad.mul(beta, l_cons))
            ad.backward(l_total)
            self._s2_opt.step()
            self._s2_opt.zero_grad()
            row = {
                "step": step,
                "stage": "multiobjective",
                "loss_ce": float(l_ce.value),
                "loss_cons": float(l_cons.value),
                "loss_total": float(l_total.value),
                "j_q": None,
            }
            if step % cfg.eval_interval == 0 or step == cfg.step2_steps:
                dev = source_dev_f1(self.model, self.bundle)
                self.checkpoints.append(Checkpoint(step, self.model.snapshot(), dev))
                row["dev_f1"] = dev
            self.rows.append(row)

    # -- full pipelines -------------------------------------------------------

    def run(self, mode: str) -> "RunResult":
        if mode not in MODES:
            raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}")
        if mode == "zero_shot":
            self.run_step2(self.cfg.step2_steps, d_u_variants=("S",), beta=0.0)
        elif mode == "ablation:no_discriminator":
            self.run_step2(self.cfg.step2_steps)
        else:
            beta = 0.0 if mode == "ablation:no_consistency" else None
            if self.cfg.schedule == "sequential":
                self.run_step1(self.cfg.step1_steps)
                self.run_step2(self.cfg.step2_steps, beta=beta)
            else:
                for s1, s2 in zip(
                    _chunks(self.cfg.step1_steps, INTERLEAVE_BLOCKS),
                    _chunks(self.cfg.step2_steps, INTERLEAVE_BLOCKS),
                ):
                    self.run_step1(s1)
                    self.run_step2(s2, beta=beta)
        selected = select_checkpoint(self.checkpoints, self.cfg.selection_window)
        self.model.restore(selected.arrays)
        report = evaluate_model(self.model, self.bundle, "test", seed=self.seed)
        return RunResult(
            mode=mode,
            seed=self.seed,
            config=self.cfg,
            model=self.model,
            checkpoints=self.checkpoints,
            selected=selected,
            rows=self.rows,
            report=report,
            init_digest=self.init_digest,
            clip_trace=self.clip_trace,
        )


def _chunks(total: int, blocks: int) -> list[int]:
    base, extra = divmod(total, blocks)
    return [base + (1 if i < extra else 0) for i in range(blocks)]


@dataclass
class RunResult:
    mode: str
    seed: int
    config: TrainConfig
    model: TaggerModel
    checkpoints: list[Checkpoint]
    selected: Checkpoint
    rows: list[dict]
    report: EvalReport
    init_digest: str
    clip_trace: list[float] = field(default_factory=list)

    def save_checkpoint(self, path) -> None:
        self.model.save(path, meta={
            "step": self.selected.step,
            "dev_f1": self.selected.dev_f1,
            "config_fingerprint": self.config.fingerprint(),
            "mode": self.mode,
            "seed": self.seed,
        })


def run_pipeline(bundle: CorpusBundle, cfg: TrainConfig, mode: str,
                 seed: int) -> RunResult:
    return Trainer(bundle, cfg, seed).run(mode)


def run_ablation(variant: str, bundle: CorpusBundle, cfg: TrainConfig,
                 seed: int) -> RunResult:
    """Ablation entry point: 'full', 'no_discriminator', or 'no_consistency'."""
    mode_by_variant = {
        "full": "msmo",
        "no_discriminator": "ablation:no_discriminator",
        "no_consistency": "ablation:no_consistency",
    }
    if variant not in mode_by_variant:
        raise ValueError(f"unknown ablation variant {variant!r}")
    return run_pipeline(bundle, cfg, mode_by_variant[variant], seed)


def write_log(rows: list[dict], path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for row in rows:
            f.write(json.dumps(row) + "\n")
