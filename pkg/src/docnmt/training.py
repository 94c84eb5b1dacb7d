"""Two-phase training: a plain baseline, then an enhanced model on frozen embeddings."""

from __future__ import annotations

import dataclasses
import logging
import math
import time
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import tensor as T
from .checkpoint import Checkpoint
from .data import PAD, ParallelDocCorpus, make_batches
from .docembed import build_global_cache
from .errors import ConfigError, DivergenceError, IncompatibilityError, NumericError
from .model import EMBEDDING_TABLES, NmtModel
from .tensor import Tape, backward
from .transformer import ModelConfig

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    phase: str = "baseline"
    lr_factor: float = 1.0
    warmup_steps: int = 4000
    adam_beta1: float = 0.9
    adam_beta2: float = 0.98
    adam_eps: float = 1e-9
    dropout: float = 0.1
    label_smoothing: float = 0.1
    token_budget: int = 512
    max_steps: int = 1000
    checkpoint_every: int = 0
    log_every: int = 50
    seed: int = 1
    clip_norm: float = 1.0
    warm_start: bool = False

    def __post_init__(self):
        if self.phase not in ("baseline", "enhanced"):
            raise ConfigError(f"phase must be baseline or enhanced, got {self.phase!r}")
        if self.warmup_steps < 1:
            raise ConfigError("warmup_steps must be >= 1")
        if not 0.0 <= self.label_smoothing < 1.0:
            raise ConfigError("label_smoothing must lie in [0, 1)")
        if self.token_budget < 1 or self.max_steps < 0:
            raise ConfigError("token_budget must be positive and max_steps non-negative")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def noam_lr(step: int, d_model: int, warmup: int, factor: float = 1.0) -> float:
    """factor * d^-0.5 * min(step^-0.5, step * warmup^-1.5), steps counted from 1."""
    step = max(int(step), 1)
    return factor * d_model ** -0.5 * min(step ** -0.5, step * warmup ** -1.5)


class Adam:
    """Adam with bias correction over a fixed set of trainable parameters.

    Frozen parameters are never passed in, so no moments exist for them.
    """

    def __init__(self, beta1: float = 0.9, beta2: float = 0.98, eps: float = 1e-9):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, params: dict, grads: dict[str, np.ndarray], lr: float) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for name in sorted(grads):
            g = grads[name]
            m = self.m.get(name)
            v = self.v.get(name)
            m = (1.0 - b1) * g if m is None else b1 * m + (1.0 - b1) * g
            v = (1.0 - b2) * g * g if v is None else b2 * v + (1.0 - b2) * g * g
            self.m[name], self.v[name] = m, v
            p = params[name]
            p.data = p.data - lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def adam_step(params: dict, grads: dict[str, np.ndarray], state: Adam, lr: float,
              frozen: frozenset = frozenset()) -> None:
    state.step(params, {k: g for k, g in grads.items() if k not in frozen}, lr)


def clip_by_global_norm(grads: dict[str, np.ndarray], max_norm: float) -> float:
    norm = math.sqrt(sum(float((g * g).sum()) for g in grads.values()))
    if max_norm > 0 and norm > max_norm:
        s = max_norm / norm
        for k in grads:
            grads[k] = grads[k] * s
    return norm


class Trainer:
    """Owns the model, optimizer, dropout PRNG and batch schedule of one run.

    The batch for global step ``s`` depends only on (seed, s), and the PRNG
    state travels with checkpoints, so resuming reproduces an uninterrupted
    run exactly.
    """

    def __init__(self, model: NmtModel, corpus: ParallelDocCorpus, tcfg: TrainConfig,
                 global_cache: Optional[dict[str, np.ndarray]] = None,
                 vocab_hashes: Optional[dict[str, str]] = None):
        self.model = model
        self.corpus = corpus
        self.tcfg = tcfg
        self.global_cache = global_cache
        self.vocab_hashes = dict(vocab_hashes or {})
        self.step = 0
        self.rng = np.random.default_rng(tcfg.seed)
        self.adam = Adam(tcfg.adam_beta1, tcfg.adam_beta2, tcfg.adam_eps)
        self.lineage: dict = {}
        self.history: list[dict] = []
        self._epoch = -1
        self._epoch_batches: list = []
        self.n_batches = len(make_batches(corpus, tcfg.token_budget, None))

    def batch_at(self, step: int):
        epoch, i = divmod(step, self.n_batches)
        if epoch != self._epoch:
            self._epoch_batches = make_batches(self.corpus, self.tcfg.token_budget, self.tcfg.seed, epoch)
            self._epoch = epoch
        return self._epoch_batches[i]

    def train_step(self) -> dict:
        batch = self.batch_at(self.step)
        lr = noam_lr(self.step + 1, self.model.cfg.d_model, self.tcfg.warmup_steps, self.tcfg.lr_factor)
        self.model.zero_grad()
        with Tape():
            try:
                loss = self.model.batch_loss(batch, self.global_cache, train=True, rng=self.rng)
            except NumericError as exc:
                raise DivergenceError(f"step {self.step + 1}: {exc} (document {batch.doc_id!r})") from exc
            value = float(loss.data)
            if not math.isfinite(value):
                raise DivergenceError(f"step {self.step + 1}: loss is {value} (document {batch.doc_id!r})")
            backward(loss)
        trainable = self.model.trainable()
        grads = {k: p.grad for k, p in trainable.items() if p.grad is not None}
        gnorm = clip_by_global_norm(grads, self.tcfg.clip_norm)
        self.adam.step(trainable, grads, lr)
        self.step += 1
        return {"step": self.step, "lr": lr, "loss": value, "grad_norm": gnorm,
                "tokens": batch.n_src_tokens + batch.n_tgt_tokens}

    def train(self, n_steps: int, on_log: Optional[Callable[[dict], None]] = None,
              on_checkpoint: Optional[Callable[["Trainer"], None]] = None) -> list[dict]:
        history = []
        window_tokens, t0 = 0, time.perf_counter()
        for _ in range(n_steps):
            row = self.train_step()
            history.append(row)
            self.history.append(row)
            window_tokens += row["tokens"]
            every = self.tcfg.log_every
            if every and self.step % every == 0:
                dt = max(time.perf_counter() - t0, 1e-9)
                row = dict(row, tok_per_s=window_tokens / dt)
                log.info("step %d lr %.3e loss %.4f tok/s %.0f", row["step"], row["lr"], row["loss"],
                         row["tok_per_s"])
                if on_log is not None:
                    on_log(row)
                window_tokens, t0 = 0, time.perf_counter()
            ce = self.tcfg.checkpoint_every
            if on_checkpoint is not None and ce and self.step % ce == 0:
                on_checkpoint(self)
        return history

    # -- checkpoints ---------------------------------------------------------

    def checkpoint(self) -> Checkpoint:
        return Checkpoint(
            kind="model",
            config=self.model.cfg,
            params={k: p.data for k, p in self.model.params.items()},
            vocab_hashes=self.vocab_hashes,
            train_config=self.tcfg.to_dict(),
            frozen=sorted(self.model.frozen),
            seed=self.tcfg.seed,
            step=self.step,
            rng_state=self.rng.bit_generator.state,
            adam_t=self.adam.t,
            adam_m=dict(self.adam.m),
            adam_v=dict(self.adam.v),
            lineage=dict(self.lineage),
        )

    @classmethod
    def resume(cls, ckpt: Checkpoint, corpus: ParallelDocCorpus,
               global_cache: Optional[dict[str, np.ndarray]] = None) -> "Trainer":
        tcfg = TrainConfig(**ckpt.train_config)
        model = NmtModel(ckpt.config, ckpt.params, ckpt.frozen)
        tr = cls(model, corpus, tcfg, global_cache, ckpt.vocab_hashes)
        tr.step = ckpt.step
        if ckpt.rng_state is not None:
            tr.rng.bit_generator.state = ckpt.rng_state
        tr.adam.t = ckpt.adam_t
        tr.adam.m = {k: v.copy() for k, v in ckpt.adam_m.items()}
        tr.adam.v = {k: v.copy() for k, v in ckpt.adam_v.items()}
        tr.lineage = dict(ckpt.lineage)
        return tr


def evaluate(model: NmtModel, corpus: ParallelDocCorpus, token_budget: int,
             global_cache: Optional[dict[str, np.ndarray]] = None) -> dict:
    """Token-level negative log-likelihood and perplexity, no smoothing, no dropout."""
    total, count = 0.0, 0
    for batch in make_batches(corpus, token_budget, None):
        doc_global = global_cache[batch.doc_id] if model.cfg.use_global else None
        doc_local = model.local_embedding(batch.src_sentences) if model.cfg.use_local else None
        composed = model.compose(batch.src, doc_global, doc_local)
        logits = model.logits(batch.tgt_in, model.encode(composed), composed.pad_mask)
        V = logits.shape[-1]
        n = int((batch.tgt_out != PAD).sum())
        nll = T.cross_entropy_label_smoothed(T.reshape(logits, (-1, V)), batch.tgt_out.reshape(-1), 0.0, PAD)
        total += float(nll.data) * n
        count += n
    mean = total / max(count, 1)
    return {"nll": mean, "perplexity": math.exp(mean), "tokens": count}


def _model_config(base: ModelConfig, tcfg: TrainConfig) -> ModelConfig:
    return dataclasses.replace(base, dropout=tcfg.dropout, label_smoothing=tcfg.label_smoothing)


def train_baseline(corpus: ParallelDocCorpus, model_cfg: ModelConfig, tcfg: TrainConfig,
                   vocab_hashes: Optional[dict[str, str]] = None,
                   on_log: Optional[Callable[[dict], None]] = None,
                   on_checkpoint: Optional[Callable[[Trainer], None]] = None) -> Trainer:
    """Train a sentence-level Transformer with no document slots."""
    cfg = _model_config(model_cfg.with_doc_mode("off", "off"), tcfg)
    tcfg = dataclasses.replace(tcfg, phase="baseline")
    model = NmtModel.initialize(cfg, tcfg.seed)
    trainer = Trainer(model, corpus, tcfg, None, vocab_hashes)
    trainer.lineage = {"phase": "baseline"}
    trainer.train(tcfg.max_steps, on_log, on_checkpoint)
    return trainer


def extract_embeddings(ckpt: Checkpoint) -> Checkpoint:
    """Copy the source/target embedding tables out of a trained checkpoint."""
    return Checkpoint(
        kind="embeddings",
        config=ckpt.config,
        params={k: ckpt.params[k].copy() for k in EMBEDDING_TABLES},
        vocab_hashes=dict(ckpt.vocab_hashes),
        seed=ckpt.seed,
        step=ckpt.step,
        lineage={"source_phase": ckpt.lineage.get("phase", ckpt.kind), "source_step": ckpt.step},
    )


def check_vocab_hashes(expected: dict[str, str], found: dict[str, str], what: str) -> None:
    for side in ("src", "tgt"):
        if expected.get(side) != found.get(side):
            raise IncompatibilityError(
                f"{what}: {side} vocabulary hash {found.get(side)} does not match corpus "
                f"vocabulary {expected.get(side)}")


def train_enhanced(corpus: ParallelDocCorpus, embeddings: Checkpoint, model_cfg: ModelConfig,
                   tcfg: TrainConfig, vocab_hashes: dict[str, str],
                   baseline: Optional[Checkpoint] = None,
                   on_log: Optional[Callable[[dict], None]] = None,
                   n_steps: Optional[int] = None,
                   on_checkpoint: Optional[Callable[[Trainer], None]] = None) -> Trainer:
    """Train the document-aware model on frozen pretrained word embeddings.

    All non-embedding weights start fresh unless ``tcfg.warm_start`` is set,
    in which case transformer weights are copied from ``baseline``.
    """
    check_vocab_hashes(vocab_hashes, embeddings.vocab_hashes, "embeddings")
    tcfg = dataclasses.replace(tcfg, phase="enhanced")
    cfg = _model_config(model_cfg, tcfg)
    tables = {k: embeddings.params[k] for k in EMBEDDING_TABLES}
    model = NmtModel.initialize(cfg, tcfg.seed, frozen=EMBEDDING_TABLES, embeddings=tables)
    if tcfg.warm_start:
        if baseline is None:
            raise ConfigError("warm_start needs the baseline checkpoint")
        check_vocab_hashes(vocab_hashes, baseline.vocab_hashes, "baseline checkpoint")
        for name, arr in baseline.params.items():
            if name in model.params and name not in EMBEDDING_TABLES:
                model.params[name].data = np.array(arr)
    cache = build_global_cache(corpus, tables["src_embed"]) if cfg.use_global else None
    trainer = Trainer(model, corpus, tcfg, cache, vocab_hashes)
    trainer.lineage = {"phase": "enhanced", "embeddings": embeddings.lineage,
                       "global": "avg" if cfg.use_global else "off",
                       "local": "+".join(cfg.local_methods) if cfg.use_local else "off"}
    trainer.train(tcfg.max_steps if n_steps is None else n_steps, on_log, on_checkpoint)
    return trainer
