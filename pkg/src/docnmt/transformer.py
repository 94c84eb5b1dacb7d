"""Post-norm Transformer encoder-decoder with document slots on the source side.

Parameters live in a flat ``{name: Tensor}`` dict; weight matrices are stored
``[in, out]`` so a projection is ``x @ W + b``.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import tensor as T
from .data import BOS, PAD
from .errors import ConfigError, DimensionError, LengthError, UnsupportedMethodError
from .tensor import Tensor

LOCAL_METHODS = ("avg", "rnn", "attn")


@dataclass
class ModelConfig:
    src_vocab_size: int
    tgt_vocab_size: int
    d_model: int = 64
    n_heads: int = 2
    n_layers: int = 2
    d_ff: int = 256
    dropout: float = 0.1
    label_smoothing: float = 0.1
    max_len: int = 256
    ln_eps: float = 1e-6
    use_global: bool = False
    use_local: bool = False
    global_method: str = "avg"
    local_methods: tuple[str, ...] = ()
    attn_pool_layers: int = 1
    normalize_ensemble: bool = True
    scale_doc_slots: bool = False
    tie_output: bool = False
    zero_init_output: bool = False
    window_mode: str = "symmetric"
    window_before: int = 2
    window_after: int = 1
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.local_methods = tuple(self.local_methods)
        self.validate()

    @property
    def d_k(self) -> int:
        return self.d_model // self.n_heads

    @property
    def n_slots(self) -> int:
        return int(self.use_global) + int(self.use_local)

    def validate(self) -> None:
        dims = dict(d_model=self.d_model, n_heads=self.n_heads, n_layers=self.n_layers,
                    d_ff=self.d_ff, max_len=self.max_len, src_vocab_size=self.src_vocab_size,
                    tgt_vocab_size=self.tgt_vocab_size)
        for k, v in dims.items():
            if int(v) <= 0:
                raise ConfigError(f"{k} must be positive, got {v}")
        if self.d_model % self.n_heads:
            raise ConfigError(f"d_model {self.d_model} not divisible by n_heads {self.n_heads}")
        if self.use_global and self.global_method != "avg":
            raise UnsupportedMethodError(
                f"global document embedding supports only 'avg', got {self.global_method!r}")
        bad = [m for m in self.local_methods if m not in LOCAL_METHODS]
        if bad:
            raise UnsupportedMethodError(f"unknown local method(s) {bad}")
        if self.use_local and not self.local_methods:
            raise ConfigError("use_local set but no local methods given")
        if not 0.0 <= self.dropout < 1.0 or not 0.0 <= self.label_smoothing < 1.0:
            raise ConfigError("dropout and label_smoothing must lie in [0, 1)")
        if self.window_mode not in ("symmetric", "past", "batch"):
            raise ConfigError(f"unknown window mode {self.window_mode!r}")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["local_methods"] = list(self.local_methods)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in known})

    def with_doc_mode(self, global_mode: str, local_mode: str) -> "ModelConfig":
        """Copy with the ``--global``/``--local`` ablation axes applied."""
        if global_mode not in ("off", "avg"):
            raise UnsupportedMethodError(
                f"global document embedding supports only off/avg, got {global_mode!r}")
        methods = () if local_mode == "off" else tuple(local_mode.split("+"))
        return dataclasses.replace(self, use_global=global_mode == "avg",
                                   use_local=bool(methods), local_methods=methods)


# ---------------------------------------------------------------------------
# initialisation


def xavier_uniform(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    a = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-a, a, size=(fan_in, fan_out))


def _attn_params(rng, prefix: str, d: int) -> dict[str, np.ndarray]:
    p = {}
    for nm in ("q", "k", "v", "o"):
        p[f"{prefix}.w{nm}"] = xavier_uniform(rng, d, d)
        p[f"{prefix}.b{nm}"] = np.zeros(d)
    return p


def _ffn_params(rng, prefix: str, d: int, d_ff: int) -> dict[str, np.ndarray]:
    return {f"{prefix}.w1": xavier_uniform(rng, d, d_ff), f"{prefix}.b1": np.zeros(d_ff),
            f"{prefix}.w2": xavier_uniform(rng, d_ff, d), f"{prefix}.b2": np.zeros(d)}


def _ln_params(prefix: str, d: int) -> dict[str, np.ndarray]:
    return {f"{prefix}.g": np.ones(d), f"{prefix}.b": np.zeros(d)}


def init_transformer_params(cfg: ModelConfig, rng: np.random.Generator) -> dict[str, np.ndarray]:
    d = cfg.d_model
    std = d ** -0.5
    p: dict[str, np.ndarray] = {
        "src_embed": rng.normal(0.0, std, size=(cfg.src_vocab_size, d)),
        "tgt_embed": rng.normal(0.0, std, size=(cfg.tgt_vocab_size, d)),
    }
    for i in range(cfg.n_layers):
        p.update(_attn_params(rng, f"enc.{i}.self", d))
        p.update(_ln_params(f"enc.{i}.ln1", d))
        p.update(_ffn_params(rng, f"enc.{i}.ffn", d, cfg.d_ff))
        p.update(_ln_params(f"enc.{i}.ln2", d))
    for i in range(cfg.n_layers):
        p.update(_attn_params(rng, f"dec.{i}.self", d))
        p.update(_ln_params(f"dec.{i}.ln1", d))
        p.update(_attn_params(rng, f"dec.{i}.cross", d))
        p.update(_ln_params(f"dec.{i}.ln2", d))
        p.update(_ffn_params(rng, f"dec.{i}.ffn", d, cfg.d_ff))
        p.update(_ln_params(f"dec.{i}.ln3", d))
    if not cfg.tie_output:
        w = xavier_uniform(rng, d, cfg.tgt_vocab_size)
        p["out.w"] = np.zeros_like(w) if cfg.zero_init_output else w
    p["out.b"] = np.zeros(cfg.tgt_vocab_size)
    return p


# ---------------------------------------------------------------------------
# building blocks


def positional_encoding(length: int, d_model: int) -> np.ndarray:
    """Sinusoidal table: even columns sin(pos / 10000^(2i/d)), odd columns cos."""
    pos = np.arange(length, dtype=np.float64)[:, None]
    two_i = np.arange(0, d_model, 2, dtype=np.float64)
    angle = pos / np.power(10000.0, two_i / d_model)
    pe = np.zeros((length, d_model))
    pe[:, 0::2] = np.sin(angle)
    pe[:, 1::2] = np.cos(angle[:, : d_model // 2])
    return pe


def multi_head_attention(params: dict[str, Tensor], prefix: str, q_in: Tensor, kv_in: Tensor,
                         mask: Optional[np.ndarray], n_heads: int,
                         record: Optional[dict] = None) -> Tensor:
    """Multi-head scaled dot-product attention.

    ``q_in`` is [B, Lq, d], ``kv_in`` [B, Lk, d].  ``mask`` is a boolean array
    broadcastable to [B, Lq, Lk] with True at positions that may not be
    attended to.  When ``record`` is a dict the attention weights
    [B, h, Lq, Lk] are stored under ``record["weights"]``.
    """
    B, Lq, d = q_in.shape
    Lk = kv_in.shape[1]
    if d % n_heads:
        raise ConfigError(f"d_model {d} not divisible by {n_heads} heads")
    if kv_in.shape[0] != B or kv_in.shape[2] != d:
        raise DimensionError(f"attention: queries {list(q_in.shape)} vs keys {list(kv_in.shape)}")
    dk = d // n_heads

    def heads(x: Tensor, L: int) -> Tensor:
        return T.transpose(T.reshape(x, (B, L, n_heads, dk)), (0, 2, 1, 3))

    q = heads(T.linear(q_in, params[prefix + ".wq"], params[prefix + ".bq"]), Lq)
    k = heads(T.linear(kv_in, params[prefix + ".wk"], params[prefix + ".bk"]), Lk)
    v = heads(T.linear(kv_in, params[prefix + ".wv"], params[prefix + ".bv"]), Lk)
    scores = T.scale(T.matmul(q, T.transpose(k, (0, 1, 3, 2))), 1.0 / math.sqrt(dk))
    if mask is not None:
        m = np.broadcast_to(np.asarray(mask, dtype=bool)[:, None, :, :], scores.shape)
        scores = T.masked_fill(scores, m, -np.inf)
    weights = T.softmax(scores, axis=-1)
    if record is not None:
        record["weights"] = weights.data
    ctx = T.reshape(T.transpose(T.matmul(weights, v), (0, 2, 1, 3)), (B, Lq, d))
    return T.linear(ctx, params[prefix + ".wo"], params[prefix + ".bo"])


def feed_forward(params: dict[str, Tensor], prefix: str, x: Tensor) -> Tensor:
    h = T.relu(T.linear(x, params[prefix + ".w1"], params[prefix + ".b1"]))
    return T.linear(h, params[prefix + ".w2"], params[prefix + ".b2"])


@dataclass
class ComposedSourceSequence:
    embeddings: Tensor           # [B, slots + S, d]
    pad_mask: np.ndarray         # [B, slots + S] True at PAD
    slots: tuple[str, ...]       # ("global", "local") prefix order

    @property
    def length(self) -> int:
        return self.embeddings.shape[1]


def compose_source_sequence(token_embeddings: Tensor, src_pad_mask: np.ndarray,
                            doc_global: Optional[Tensor], doc_local: Optional[Tensor],
                            cfg: ModelConfig) -> ComposedSourceSequence:
    """Prepend document slots in the order [global, local, x_1..x_n].

    ``token_embeddings`` is the raw lookup [B, S, d]; it is scaled by
    sqrt(d_model) here.  Slot vectors are [d] (shared by the batch) or [B, d].
    Positional encodings cover every position, slots included.
    """
    B, S, d = token_embeddings.shape
    if d != cfg.d_model:
        raise ConfigError(f"token embeddings have dim {d}, model expects {cfg.d_model}")
    root = math.sqrt(d)
    parts, slots = [], []
    for tag, vec in (("global", doc_global), ("local", doc_local)):
        if vec is None:
            continue
        if vec.shape not in ((d,), (B, d)):
            raise ConfigError(f"{tag} document embedding has shape {list(vec.shape)}, expected [{d}]")
        if cfg.scale_doc_slots:
            vec = T.scale(vec, root)
        slot = T.reshape(vec, (1, 1, d)) if vec.ndim == 1 else T.reshape(vec, (B, 1, d))
        parts.append(T.expand(slot, (B, 1, d)) if slot.shape[0] != B else slot)
        slots.append(tag)
    L = S + len(slots)
    if L > cfg.max_len + 2:
        raise LengthError(f"source length {S} exceeds max_len {cfg.max_len}")
    x = T.scale(token_embeddings, root)
    if parts:
        x = T.concat(parts + [x], axis=1)
    pe = np.broadcast_to(positional_encoding(L, d), (B, L, d))
    x = T.add(x, pe)
    mask = np.concatenate([np.zeros((B, len(slots)), dtype=bool), np.asarray(src_pad_mask, dtype=bool)],
                          axis=1)
    return ComposedSourceSequence(x, mask, tuple(slots))


def _sublayer(x: Tensor, y: Tensor, params, ln: str, cfg: ModelConfig, train: bool, rng) -> Tensor:
    y = T.dropout(y, cfg.dropout, train, rng)
    return T.layer_norm(T.add(x, y), params[ln + ".g"], params[ln + ".b"], cfg.ln_eps)


def encode(params: dict[str, Tensor], src: ComposedSourceSequence, cfg: ModelConfig,
           train: bool = False, rng=None, records: Optional[list] = None) -> Tensor:
    x = T.dropout(src.embeddings, cfg.dropout, train, rng)
    mask = src.pad_mask[:, None, :]
    for i in range(cfg.n_layers):
        rec = {} if records is not None else None
        a = multi_head_attention(params, f"enc.{i}.self", x, x, mask, cfg.n_heads, rec)
        if records is not None:
            records.append(rec)
        x = _sublayer(x, a, params, f"enc.{i}.ln1", cfg, train, rng)
        f = feed_forward(params, f"enc.{i}.ffn", x)
        x = _sublayer(x, f, params, f"enc.{i}.ln2", cfg, train, rng)
    return x


def causal_mask(length: int) -> np.ndarray:
    return np.triu(np.ones((length, length), dtype=bool), k=1)


def decode_step(params: dict[str, Tensor], tgt_prefix: np.ndarray, encoder_out: Tensor,
                src_pad_mask: np.ndarray, cfg: ModelConfig, train: bool = False, rng=None) -> Tensor:
    """Next-token logits [B, T, V] for every prefix position of ``tgt_prefix`` [B, T]."""
    tgt_prefix = np.asarray(tgt_prefix, dtype=np.int64)
    B, Tn = tgt_prefix.shape
    if Tn > cfg.max_len + 1:
        raise LengthError(f"target prefix length {Tn} exceeds max_len {cfg.max_len}")
    d = cfg.d_model
    y = T.scale(T.embedding_lookup(params["tgt_embed"], tgt_prefix), math.sqrt(d))
    y = T.add(y, np.broadcast_to(positional_encoding(Tn, d), (B, Tn, d)))
    y = T.dropout(y, cfg.dropout, train, rng)
    self_mask = causal_mask(Tn)[None, :, :] | (tgt_prefix == PAD)[:, None, :]
    cross_mask = np.asarray(src_pad_mask, dtype=bool)[:, None, :]
    for i in range(cfg.n_layers):
        a = multi_head_attention(params, f"dec.{i}.self", y, y, self_mask, cfg.n_heads)
        y = _sublayer(y, a, params, f"dec.{i}.ln1", cfg, train, rng)
        c = multi_head_attention(params, f"dec.{i}.cross", y, encoder_out, cross_mask, cfg.n_heads)
        y = _sublayer(y, c, params, f"dec.{i}.ln2", cfg, train, rng)
        f = feed_forward(params, f"dec.{i}.ffn", y)
        y = _sublayer(y, f, params, f"dec.{i}.ln3", cfg, train, rng)
    w_out = T.transpose(params["tgt_embed"]) if cfg.tie_output else params["out.w"]
    return T.linear(y, w_out, params["out.b"])


def start_prefix(batch_size: int) -> np.ndarray:
    return np.full((batch_size, 1), BOS, dtype=np.int64)
